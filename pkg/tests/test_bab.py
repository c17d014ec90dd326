import heapq

import numpy as np
import pytest

from conftest import make_quad_objective, random_box, random_objective
from pnverify.bab import (
    BabConfig,
    BoundMethod,
    DegenerateBox,
    Falsified,
    Minimum,
    Subproblem,
    Timeout,
    Verified,
    bab_minimize,
    branch,
    verify_instance,
)
from pnverify.convexify import PowerMethodConfig
from pnverify.intervals import Box
from pnverify.modelio import generate_random_network
from pnverify.networks import CcpNetwork, Objective, forward, objective_value
from pnverify.oracle import GridSpec, grid_minimize
from test_convexify import make_diag_hessian_objective


def make_constant_margin_net(margins=(10.0, 0.0), d=2, k=1) -> CcpNetwork:
    """Zero weights everywhere: f(z) = beta for every z."""
    return CcpNetwork(W=(np.zeros((d, k)),), C=np.zeros((len(margins), k)), beta=np.array(margins))


def make_cancelling_pair_objective() -> Objective:
    """Margin identically 0.5, but opaque to plain interval bounds.

    Both outputs read the same square-plus-skip unit, so the exact margin
    is the constant bias difference while the interval lower bound at the
    root is 0.5 - 2 = -1.5.  Branch-and-bound has to shrink boxes until
    the dependency gap drops below the bias.
    """
    net = CcpNetwork(
        W=(np.array([[1.0, 1.0]]), np.array([[1.0, 1.0]])),
        C=np.array([[1.0, 0.0], [0.0, 1.0]]),
        beta=np.array([0.5, 0.0]),
    )
    return Objective(net, 0, 1)


# -- branching -----------------------------------------------------------------


def test_branch_splits_widest_dim():
    box = Box(np.array([0.0, 0.0]), np.array([1.0, 4.0]))
    left, right = branch(box)
    np.testing.assert_array_equal(left.lo, [0.0, 0.0])
    np.testing.assert_array_equal(left.hi, [1.0, 2.0])
    np.testing.assert_array_equal(right.lo, [0.0, 2.0])
    np.testing.assert_array_equal(right.hi, [1.0, 4.0])


def test_branch_tie_breaks_to_lowest_index():
    left, right = branch(Box(np.zeros(2), np.full(2, 2.0)))
    assert left.hi[0] == 1.0 and left.hi[1] == 2.0
    assert right.lo[0] == 1.0 and right.lo[1] == 0.0


def test_branch_rejects_degenerate_box():
    z = np.array([0.3, 0.7])
    with pytest.raises(DegenerateBox):
        branch(Box(z, z))


def test_branch_children_partition_parent():
    rng = np.random.default_rng(0)
    box = Box(rng.uniform(0, 0.4, 3), rng.uniform(0.6, 1.0, 3))
    left, right = branch(box)
    i = int(np.argmax(box.width()))
    assert left.hi[i] == right.lo[i]
    np.testing.assert_array_equal(np.minimum(left.lo, right.lo), box.lo)
    np.testing.assert_array_equal(np.maximum(left.hi, right.hi), box.hi)


def test_chain_of_splits_halves_width_every_d_levels():
    d = 3
    rng = np.random.default_rng(1)
    box = Box(np.zeros(d), rng.uniform(0.5, 1.0, d))
    for _ in range(50 // d):
        before = float(box.width().max())
        for _ in range(d):
            children = branch(box)
            box = children[rng.integers(0, 2)]
        assert float(box.width().max()) <= 0.5 * before + 1e-15


def test_subproblem_rejects_invalid_bounds():
    box = Box(np.zeros(1), np.ones(1))
    with pytest.raises(ValueError):
        Subproblem(box, float("nan"))
    with pytest.raises(ValueError):
        Subproblem(box, float("inf"))
    Subproblem(box, float("-inf"))  # open root is fine


def test_bab_config_validation():
    with pytest.raises(ValueError):
        BabConfig(gap_tol=0.0)
    with pytest.raises(ValueError):
        BabConfig(time_limit=-1.0)


# -- minimize mode ---------------------------------------------------------------


def test_minimize_quadratic(quad_objective, unit_box):
    verdict = bab_minimize(quad_objective, unit_box, BabConfig())
    assert isinstance(verdict, Minimum)
    assert verdict.value == pytest.approx(-2.0, abs=1e-6)
    assert verdict.point[0] == pytest.approx(1.0, abs=1e-5)


def test_minimize_point_box(quad_objective):
    z = np.array([0.5])
    verdict = bab_minimize(quad_objective, Box(z, z), BabConfig())
    assert isinstance(verdict, Minimum)
    assert verdict.value == pytest.approx(-0.75)
    np.testing.assert_array_equal(verdict.point, z)


def test_minimize_with_ibp_bounds(quad_objective, unit_box):
    verdict = bab_minimize(quad_objective, unit_box, BabConfig(bound_method=BoundMethod.IBP))
    assert isinstance(verdict, Minimum)
    assert verdict.value == pytest.approx(-2.0, abs=1e-6)


def test_minimize_falls_back_to_ibp_when_power_method_stalls():
    obj = make_diag_hessian_objective()
    box = Box(np.zeros(2), np.ones(2))
    cfg = BabConfig(power=PowerMethodConfig(max_iter=1))
    verdict = bab_minimize(obj, box, cfg)
    assert isinstance(verdict, Minimum)
    assert verdict.value == pytest.approx(-2.5, abs=1e-6)


@pytest.mark.parametrize("method,gap_tol,n", [
    (BoundMethod.ALPHA_UNIFORM, 1e-6, 10),
    (BoundMethod.ALPHA_NONUNIFORM, 1e-6, 5),
    # interval bounds tighten only quadratically in the width, so give the
    # plain method a coarser target it can reach without thousands of splits
    (BoundMethod.IBP, 5e-4, 3),
])
def test_minimize_matches_grid_on_random_nets(method, gap_tol, n):
    for seed in range(n):
        obj = random_objective("ccp", degree=2, d=2, k=3, seed=3000 + seed)
        radius = 0.3 if method is not BoundMethod.IBP else 0.15
        box = random_box(2, seed, radius=radius)
        cfg = BabConfig(bound_method=method, gap_tol=gap_tol, time_limit=30.0)
        verdict = bab_minimize(obj, box, cfg)
        assert isinstance(verdict, Minimum)
        oracle_min, _ = grid_minimize(obj, box)
        assert verdict.value == pytest.approx(oracle_min, abs=1e-3)
        # the certificate side: the claimed optimum is near-sandwiched
        assert verdict.value - cfg.gap_tol <= oracle_min + 1e-9


def test_minimize_pops_lowest_bound_first(monkeypatch):
    real_pop = heapq.heappop
    popped = []

    def spying_pop(heap):
        lowest = min(entry[0] for entry in heap)
        entry = real_pop(heap)
        assert entry[0] == lowest
        popped.append(entry[0])
        return entry

    monkeypatch.setattr(heapq, "heappop", spying_pop)
    obj = make_cancelling_pair_objective()
    box = Box(np.zeros(1), np.ones(1))
    cfg = BabConfig(bound_method=BoundMethod.IBP, gap_tol=0.05)
    verdict = bab_minimize(obj, box, cfg)
    assert isinstance(verdict, Minimum)
    assert verdict.value == pytest.approx(0.5, abs=0.05)
    assert len(popped) >= 2


# -- verification mode -------------------------------------------------------------


def test_verification_constant_positive_margin():
    net = make_constant_margin_net((10.0, 0.0))
    obj = Objective(net, 0, 1)
    box = Box(np.zeros(2), np.ones(2))
    verdict = bab_minimize(obj, box, BabConfig(verification_mode=True))
    assert isinstance(verdict, Verified)


def test_verification_constant_negative_margin_falsifies():
    net = make_constant_margin_net((-1.0, 0.0))
    obj = Objective(net, 0, 1)
    box = Box(np.zeros(2), np.ones(2))
    verdict = bab_minimize(obj, box, BabConfig(verification_mode=True))
    assert isinstance(verdict, Falsified)
    assert verdict.margin == pytest.approx(-1.0)
    assert objective_value(obj, verdict.counterexample) <= 0.0


def test_verification_point_box_sign(quad_objective):
    z = np.array([0.5])
    verdict = bab_minimize(quad_objective, Box(z, z), BabConfig(verification_mode=True))
    assert isinstance(verdict, Falsified)
    assert verdict.margin == pytest.approx(-0.75)


def test_verification_needs_branching_with_ibp():
    obj = make_cancelling_pair_objective()
    box = Box(np.zeros(1), np.ones(1))
    cfg = BabConfig(verification_mode=True, bound_method=BoundMethod.IBP)
    verdict = bab_minimize(obj, box, cfg)
    assert isinstance(verdict, Verified)


def test_verification_timeout_reports_bracketing_bounds():
    obj = make_cancelling_pair_objective()
    box = Box(np.zeros(1), np.ones(1))
    cfg = BabConfig(
        verification_mode=True, bound_method=BoundMethod.IBP, time_limit=1e-9
    )
    verdict = bab_minimize(obj, box, cfg)
    assert isinstance(verdict, Timeout)
    assert verdict.best_lb <= 0.5 <= verdict.best_ub + 1e-9
    assert box.contains(verdict.best_point)


# -- instance driver ------------------------------------------------------------


def test_verify_instance_constant_net_all_classes():
    net = CcpNetwork(W=(np.zeros((2, 1)),), C=np.zeros((3, 1)), beta=np.array([10.0, 0.0, 0.0]))
    res = verify_instance(net, [0.5, 0.5], 0, 0.1, BabConfig())
    assert res.status == "verified"
    assert res.predicted == 0
    assert len(res.outcomes) == 2
    assert all(isinstance(v, Verified) for _, v in res.outcomes)
    # adversaries visited in descending-score order (tie broken by index)
    assert [g for g, _ in res.outcomes] == [1, 2]


def test_verify_instance_falsified_with_replayable_counterexample():
    # f0 = 1 - 4z, f1 = 0: robust at z0 = 0 only for eps < 0.25
    net = CcpNetwork(W=(np.array([[1.0]]),), C=np.array([[-4.0], [0.0]]), beta=np.array([1.0, 0.0]))
    res = verify_instance(net, [0.0], 0, 0.5, BabConfig())
    assert res.status == "falsified"
    gamma, verdict = res.outcomes[-1]
    assert gamma == 1
    assert isinstance(verdict, Falsified)
    f = forward(net, verdict.counterexample)
    assert f[0] - f[1] == pytest.approx(verdict.margin)
    assert verdict.margin <= 0.0
    assert np.all(np.abs(verdict.counterexample - 0.0) <= 0.5 + 1e-12)


def test_verify_instance_misclassified_is_skipped():
    net = CcpNetwork(W=(np.array([[1.0]]),), C=np.array([[-4.0], [0.0]]), beta=np.array([1.0, 0.0]))
    res = verify_instance(net, [0.5], 0, 0.1, BabConfig())  # f0 = -1 < 0 = f1
    assert res.status == "misclassified"
    assert res.predicted == 1
    assert res.outcomes == ()


def test_verify_instance_timeout_status():
    obj = make_cancelling_pair_objective()
    cfg = BabConfig(bound_method=BoundMethod.IBP, time_limit=1e-9)
    res = verify_instance(obj.network, [0.9], 0, 1.0, cfg)
    assert res.status == "timeout"
    assert isinstance(res.outcomes[0][1], Timeout)


def test_verify_instance_input_validation():
    net = make_constant_margin_net()
    cfg = BabConfig()
    with pytest.raises(ValueError):
        verify_instance(net, [0.5, 0.5], 0, -0.1, cfg)
    with pytest.raises(ValueError):
        verify_instance(net, [1.5, 0.5], 0, 0.1, cfg)
    with pytest.raises(ValueError):
        verify_instance(net, [0.5, 0.5], 5, 0.1, cfg)


def test_verify_instance_agrees_with_grid_sign():
    rng = np.random.default_rng(99)
    for seed in range(10):
        net = generate_random_network("ccp", (2, 2, 3, 2), seed=5000 + seed, scale=0.7)
        z0 = rng.uniform(0.2, 0.8, size=2)
        label = int(np.argmax(forward(net, z0)))
        res = verify_instance(net, z0, label, 0.15, BabConfig(time_limit=30.0))
        gamma = 1 - label
        oracle_min, _ = grid_minimize(
            Objective(net, label, gamma), Box.linf_ball(z0, 0.15), GridSpec(resolution=201)
        )
        if res.status == "verified":
            assert oracle_min > -1e-9
        else:
            assert res.status == "falsified"
            assert oracle_min <= 1e-9
