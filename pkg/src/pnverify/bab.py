"""Branch-and-bound minimization of the margin over an input box.

Best-first search: subproblems live in a min-heap keyed by their certified
lower bound, the widest box side is split at its midpoint, and each child
gets a PGD upper bound plus a lower bound from the configured method (plain
interval propagation, uniform shift, or per-coordinate shift).  Runs in two
modes: global minimization to a gap tolerance, or verification with early
exits -- any subproblem upper bound <= 0 yields a counterexample, and an
empty queue (every lower bound positive) proves robustness.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .convexify import (
    AlphaShift,
    ConvergenceFailure,
    PowerMethodConfig,
    nonuniform_alpha,
    power_method_uniform_alpha,
)
from .intervals import Box, ibp_objective_lower
from .networks import Network, Objective, forward, objective_value
from .pgd import PgdConfig, lower_bound_alpha, upper_bound

__all__ = [
    "BoundMethod",
    "Subproblem",
    "BabConfig",
    "DegenerateBox",
    "Verified",
    "Falsified",
    "Timeout",
    "Minimum",
    "Verdict",
    "branch",
    "bab_minimize",
    "InstanceResult",
    "verify_instance",
]


class DegenerateBox(ValueError):
    """Raised when asked to split a box with no positive-width side."""


class BoundMethod(str, Enum):
    IBP = "ibp"
    ALPHA_UNIFORM = "alpha"
    ALPHA_NONUNIFORM = "alpha-nu"


@dataclass(frozen=True)
class Subproblem:
    box: Box
    lower_bound: float

    def __post_init__(self):
        if np.isnan(self.lower_bound) or self.lower_bound == np.inf:
            raise ValueError("lower_bound must be finite or -inf")


@dataclass(frozen=True)
class BabConfig:
    gap_tol: float = 1e-6
    time_limit: float = 60.0
    bound_method: BoundMethod = BoundMethod.ALPHA_UNIFORM
    pgd: PgdConfig = field(default_factory=PgdConfig)
    power: PowerMethodConfig = field(default_factory=PowerMethodConfig)
    verification_mode: bool = False

    def __post_init__(self):
        if self.gap_tol <= 0:
            raise ValueError("gap_tol must be positive")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")


@dataclass(frozen=True)
class Verified:
    pass


@dataclass(frozen=True)
class Falsified:
    counterexample: np.ndarray
    margin: float


@dataclass(frozen=True)
class Timeout:
    best_lb: float
    best_ub: float
    best_point: np.ndarray


@dataclass(frozen=True)
class Minimum:
    value: float
    point: np.ndarray


Verdict = Verified | Falsified | Timeout | Minimum


def branch(box: Box) -> tuple[Box, Box]:
    """Split the widest side (lowest index on ties) at its midpoint."""
    width = box.width()
    if float(width.max()) <= 0.0:
        raise DegenerateBox("cannot split a zero-width box")
    i = int(np.argmax(width))
    mid = 0.5 * (box.lo[i] + box.hi[i])
    left_hi = box.hi.copy()
    left_hi[i] = mid
    right_lo = box.lo.copy()
    right_lo[i] = mid
    return Box(box.lo, left_hi), Box(right_lo, box.hi)


def _root_shift(obj: Objective, root: Box, cfg: BabConfig) -> AlphaShift | None:
    """Shift for the whole problem, computed once on the root box.

    Child boxes are subsets of the root, so the root shift's convexity
    certificate carries over; only the (z-l)(z-u) factors change.  Returns
    None when the method is plain interval propagation or when the power
    method fails to converge (soundness is kept by bounding with intervals).
    """
    if cfg.bound_method is BoundMethod.IBP:
        return None
    if cfg.bound_method is BoundMethod.ALPHA_NONUNIFORM:
        return nonuniform_alpha(obj, root)
    try:
        return AlphaShift.uniform(power_method_uniform_alpha(obj, root, cfg.power))
    except ConvergenceFailure:
        return None


def _lower(obj: Objective, box: Box, shift: AlphaShift | None, cfg: BabConfig) -> float:
    if shift is None:
        return ibp_objective_lower(obj, box)
    return lower_bound_alpha(obj, box, shift, cfg.pgd)


def bab_minimize(obj: Objective, root_box: Box, cfg: BabConfig) -> Verdict:
    start = time.monotonic()
    shift = _root_shift(obj, root_box, cfg)

    if float(root_box.width().max()) <= 0.0:
        # Point box: the minimum is the value at the point.
        z = root_box.center()
        value = objective_value(obj, z)
        if cfg.verification_mode:
            return Verified() if value > 0.0 else Falsified(z, value)
        return Minimum(value, z)

    global_ub = np.inf
    global_lb = -np.inf
    ub_point = root_box.center()
    seq = itertools.count()
    heap: list[tuple[float, int, Subproblem]] = [
        (-np.inf, next(seq), Subproblem(root_box, -np.inf))
    ]

    while global_ub - global_lb > cfg.gap_tol and (
        not cfg.verification_mode or global_lb <= 0.0
    ):
        if not heap:
            break
        _, _, sub = heapq.heappop(heap)
        for child in branch(sub.box):
            z, child_ub = upper_bound(obj, child, cfg.pgd)
            child_lb = _lower(obj, child, shift, cfg)
            if child_ub < global_ub:
                global_ub = child_ub
                ub_point = z
                kept = [e for e in heap if e[0] <= global_ub]
                if len(kept) < len(heap):
                    heap = kept
                    heapq.heapify(heap)
            if cfg.verification_mode and child_ub <= 0.0:
                margin = objective_value(obj, z)
                if margin <= 0.0:
                    return Falsified(z, margin)
            if child_lb < global_ub and (not cfg.verification_mode or child_lb <= 0.0):
                heapq.heappush(heap, (child_lb, next(seq), Subproblem(child, child_lb)))
        if cfg.verification_mode and not heap:
            return Verified()
        global_lb = heap[0][0] if heap else global_ub
        if time.monotonic() - start > cfg.time_limit:
            return Timeout(global_lb, global_ub, ub_point)

    if cfg.verification_mode:
        # Loop left because every remaining lower bound is positive, or the
        # gap closed on a positive minimum.
        if global_ub > 0.0:
            return Verified()
        return Falsified(ub_point, objective_value(obj, ub_point))
    return Minimum(global_ub, ub_point)


@dataclass(frozen=True)
class InstanceResult:
    """Outcome of verifying one labeled point: per-adversary verdicts plus
    the overall call."""

    predicted: int
    status: str  # verified | falsified | timeout | misclassified
    outcomes: tuple[tuple[int, Verdict], ...]


def verify_instance(
    net: Network, z0, label: int, eps: float, cfg: BabConfig
) -> InstanceResult:
    z0 = np.asarray(z0, dtype=np.float64)
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if np.any(z0 < 0.0) or np.any(z0 > 1.0):
        raise ValueError("input point must lie in [0,1]^d")
    if not 0 <= label < net.output:
        raise ValueError(f"label {label} out of range for {net.output} classes")

    scores = forward(net, z0)
    predicted = int(np.argmax(scores))
    if predicted != label:
        return InstanceResult(predicted, "misclassified", ())

    box = Box.linf_ball(z0, eps, clamp=(0.0, 1.0))
    adversaries = sorted(
        (g for g in range(net.output) if g != predicted),
        key=lambda g: (-scores[g], g),
    )
    run_cfg = cfg if cfg.verification_mode else BabConfig(
        gap_tol=cfg.gap_tol,
        time_limit=cfg.time_limit,
        bound_method=cfg.bound_method,
        pgd=cfg.pgd,
        power=cfg.power,
        verification_mode=True,
    )

    outcomes: list[tuple[int, Verdict]] = []
    timed_out = False
    for gamma in adversaries:
        verdict = bab_minimize(Objective(net, predicted, gamma), box, run_cfg)
        outcomes.append((gamma, verdict))
        if isinstance(verdict, Falsified):
            return InstanceResult(predicted, "falsified", tuple(outcomes))
        if isinstance(verdict, Timeout):
            timed_out = True
    status = "timeout" if timed_out else "verified"
    return InstanceResult(predicted, status, tuple(outcomes))
