"""Convexification shifts for box-constrained margin minimization.

``g_a(z) = g(z) + sum_i a_i (z_i - l_i)(z_i - u_i)`` under-approximates the
margin on the box and is convex whenever ``2 a_i`` dominates the negative
curvature of ``g`` there.  Two certified ways to pick the shift:

* uniform: half the spectral radius of the lower-bounding Hessian ``L_H``
  of the interval Hessian enclosure, estimated by a matrix-free power
  method.  ``L_H v`` is evaluated through the Hessian's rank-2 structure in
  ``O(degree * d * k)`` without ever materializing a ``d x d`` matrix.
* per-coordinate: a magnitude bound on every Hessian entry (the ``mn``
  operator, ``mn(x) = max(|LB(x)|, |UB(x)|)``) gives scaled off-diagonal
  row sums which, against a lower bound of the diagonal, yield one shift
  per input coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intervals import Box, ibp_gradient_bounds, ibp_hidden_bounds, linear_bounds, mul_bounds
from .networks import CcpNetwork, Objective, objective_gradient, objective_value

__all__ = [
    "AlphaShift",
    "PowerMethodConfig",
    "ConvergenceFailure",
    "LowerHessianOperator",
    "lh_matvec",
    "power_method_uniform_alpha",
    "mn_hessian_rowsum",
    "hessian_diag_lower",
    "nonuniform_alpha",
    "alpha_objective_value",
    "alpha_objective_gradient",
]

# Width floor used when turning box widths into row-sum scaling ratios.
_WIDTH_FLOOR = 1e-12


class ConvergenceFailure(RuntimeError):
    """Power method failed to converge; callers fall back to plain IBP."""


@dataclass(frozen=True)
class AlphaShift:
    """The convexification certificate: a single shift or one per coordinate.

    ``alphas`` is a scalar array for the uniform variant, a ``(d,)`` array
    for the per-coordinate variant.
    """

    alphas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        if a.ndim not in (0, 1):
            raise ValueError("shift must be a scalar or a vector")
        if not np.all(np.isfinite(a)):
            raise ValueError("shift entries must be finite")
        if np.any(a < 0):
            raise ValueError("shift entries must be non-negative")
        object.__setattr__(self, "alphas", a)

    @classmethod
    def uniform(cls, alpha: float) -> "AlphaShift":
        return cls(np.asarray(float(alpha)))

    @classmethod
    def per_coordinate(cls, alphas) -> "AlphaShift":
        return cls(np.atleast_1d(np.asarray(alphas, dtype=np.float64)))

    @property
    def is_uniform(self) -> bool:
        return self.alphas.ndim == 0

    def vector(self, d: int) -> np.ndarray:
        if self.is_uniform:
            return np.full(d, float(self.alphas))
        if self.alphas.shape != (d,):
            raise ValueError(f"shift has dim {self.alphas.shape[0]}, expected {d}")
        return self.alphas


@dataclass(frozen=True)
class PowerMethodConfig:
    tol: float = 1e-6
    max_iter: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter <= 0:
            raise ValueError("max_iter must be positive")


def _delta_scaled_levels(obj: Objective, box: Box):
    """Rank-2 decomposition of the interval Hessian enclosure.

    Walking the Hessian recursion from the output layer down, each level
    ``n`` contributes ``sum_i (w_i u_i.T + u_i w_i.T)`` where
    ``u_i = delta_i * (previous-level gradient row i)`` and ``delta`` is the
    running interval weight (seeded with the margin's output row, rescaled
    by the level multiplier on the way down).  Yields one
    ``(W_n, slo, shi)`` triple per level with ``[slo, shi]`` bounding the
    ``u`` rows.
    """
    net = obj.network
    grads = ibp_gradient_bounds(net, box)
    hidden = ibp_hidden_bounds(net, box)
    dlo = obj.c_row.copy()
    dhi = obj.c_row.copy()
    for n in range(net.degree - 1, 0, -1):
        prev = grads[n - 1]
        if isinstance(net, CcpNetwork):
            glo, ghi = prev.lo, prev.hi
        else:
            glo, ghi = linear_bounds(net.S[n - 1].T, prev.lo, prev.hi)
        slo, shi = mul_bounds(dlo[:, None], dhi[:, None], glo, ghi)
        yield net.W[n], slo, shi
        if isinstance(net, CcpNetwork):
            dlo, dhi = mul_bounds(dlo, dhi, hidden.xhat[n].lo + 1.0, hidden.xhat[n].hi + 1.0)
        else:
            plo, phi = mul_bounds(dlo, dhi, hidden.xhat[n].lo, hidden.xhat[n].hi)
            dlo, dhi = linear_bounds(net.S[n - 1], plo, phi)


class LowerHessianOperator:
    """Matrix-free ``L_H`` of the interval Hessian enclosure ``[LB, UB]``::

        L_H = (LB + UB) / 2 + diag((LB @ 1 - UB @ 1) / 2)

    whose minimum eigenvalue under-bounds the minimum eigenvalue of every
    Hessian in the enclosure.  Construction precomputes the rank-2 terms
    once; each ``matvec`` is ``O(degree * d * k)``.
    """

    def __init__(self, obj: Objective, box: Box):
        self.dim = obj.network.input_dim
        self._terms = []
        for W, slo, shi in _delta_scaled_levels(obj, box):
            self._terms.append((np.maximum(W, 0.0), np.minimum(W, 0.0), slo, shi))
        lb1, ub1 = self._endpoint_matvecs(np.ones(self.dim))
        self._diag_shift = 0.5 * (lb1 - ub1)

    def _endpoint_matvecs(self, v: np.ndarray):
        """``LB @ v`` and ``UB @ v`` accumulated over the rank-2 terms."""
        lv = np.zeros(self.dim)
        uv = np.zeros(self.dim)
        for Wp, Wm, slo, shi in self._terms:
            sl_v = slo @ v
            sh_v = shi @ v
            wp_v = Wp.T @ v
            wm_v = Wm.T @ v
            lv += Wp @ sl_v + Wm @ sh_v + slo.T @ wp_v + shi.T @ wm_v
            uv += Wp @ sh_v + Wm @ sl_v + shi.T @ wp_v + slo.T @ wm_v
        return lv, uv

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValueError(f"vector has shape {v.shape}, expected ({self.dim},)")
        lv, uv = self._endpoint_matvecs(v)
        return 0.5 * (lv + uv) + self._diag_shift * v

    def diag_lower(self) -> np.ndarray:
        """Diagonal of ``LB``: a lower bound on every Hessian diagonal."""
        diag = np.zeros(self.dim)
        for Wp, Wm, slo, shi in self._terms:
            diag += 2.0 * ((Wp * slo.T).sum(axis=1) + (Wm * shi.T).sum(axis=1))
        return diag


def lh_matvec(obj: Objective, box: Box, v) -> np.ndarray:
    """One-shot ``L_H @ v`` (builds the operator, then a single matvec)."""
    return LowerHessianOperator(obj, box).matvec(v)


def _random_unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.uniform(0.0, 1.0, size=d)
    norm = np.linalg.norm(v)
    if norm == 0.0:  # astronomically unlikely; uniform [0,1] draws
        v[0] = 1.0
        norm = 1.0
    return v / norm


def power_method_uniform_alpha(obj: Objective, box: Box, cfg: PowerMethodConfig) -> float:
    """Uniform shift ``rho(L_H) / 2`` via the doubled-step power method.

    Applies the operator twice per iteration (so a dominant negative
    eigenvalue cannot make the iterate flip sign forever) and stops when
    the normalized iterate moves less than ``cfg.tol`` in 2-norm.  A zero
    image means the start vector sits in the kernel: retried with fresh
    random vectors a few times, after which the operator is (numerically)
    zero and the shift is 0.

    Raises ``ConvergenceFailure`` after ``cfg.max_iter`` iterations; the
    caller keeps soundness by falling back to a plain IBP lower bound.
    """
    op = LowerHessianOperator(obj, box)
    rng = np.random.default_rng(cfg.seed)
    v = _random_unit(rng, op.dim)
    prev = np.zeros(op.dim)
    r = 0.0
    retries = 0
    iters = 0
    while np.linalg.norm(v - prev) > cfg.tol:
        if iters >= cfg.max_iter:
            raise ConvergenceFailure(
                f"power method did not converge within {cfg.max_iter} iterations"
            )
        iters += 1
        prev = v
        restarted = False
        for _ in range(2):
            image = op.matvec(v)
            r = float(np.linalg.norm(image))
            if r == 0.0:
                if retries >= 3:
                    return 0.0
                retries += 1
                v = _random_unit(rng, op.dim)
                prev = np.zeros(op.dim)
                restarted = True
                break
            v = image / r
        if restarted:
            continue
    return r / 2.0


def mn_hessian_rowsum(obj: Objective, box: Box, dvec) -> np.ndarray:
    """Scaled off-diagonal row sums of the entrywise Hessian magnitude bound.

    Entry ``i`` of the result is an upper bound on
    ``sum_{j != i} mn(h_ij) * dvec_j / dvec_i`` where ``mn`` bounds the
    magnitude of each Hessian entry over the box.  The magnitude bound has
    the same rank-2 level structure as the Hessian itself, so the row sums
    come out of matrix-vector products with ``dvec`` -- no ``d x d``
    matrix is formed.
    """
    net = obj.network
    dvec = np.asarray(dvec, dtype=np.float64)
    if dvec.shape != (net.input_dim,):
        raise ValueError(f"dvec has shape {dvec.shape}, expected ({net.input_dim},)")
    if np.any(dvec <= 0):
        raise ValueError("dvec entries must be strictly positive")
    grads = ibp_gradient_bounds(net, box)
    hidden = ibp_hidden_bounds(net, box)
    m = np.abs(obj.c_row)
    Md = np.zeros(net.input_dim)
    diag = np.zeros(net.input_dim)
    for n in range(net.degree - 1, 0, -1):
        prev = grads[n - 1]
        if isinstance(net, CcpNetwork):
            gm = np.maximum(np.abs(prev.lo), np.abs(prev.hi))
        else:
            qlo, qhi = linear_bounds(net.S[n - 1].T, prev.lo, prev.hi)
            gm = np.maximum(np.abs(qlo), np.abs(qhi))
        Wa = np.abs(net.W[n])
        wd = Wa.T @ dvec
        gd = gm @ dvec
        Md += gm.T @ (m * wd) + Wa @ (m * gd)
        diag += 2.0 * ((gm.T * Wa) @ m)
        xh = hidden.xhat[n]
        if isinstance(net, CcpNetwork):
            m = m * np.maximum(np.abs(xh.lo + 1.0), np.abs(xh.hi + 1.0))
        else:
            m = np.abs(net.S[n - 1]) @ (m * np.maximum(np.abs(xh.lo), np.abs(xh.hi)))
    # Md - diag*dvec is a sum of non-negative terms; clip float dust.
    return np.maximum((Md - diag * dvec) / dvec, 0.0)


def hessian_diag_lower(obj: Objective, box: Box) -> np.ndarray:
    """Lower bound of every Hessian diagonal entry over the box."""
    return LowerHessianOperator(obj, box).diag_lower()


def nonuniform_alpha(obj: Objective, box: Box) -> AlphaShift:
    """Per-coordinate shift from diagonal lower bounds and scaled row sums.

    Uses the box widths as the scaling vector (degenerate coordinates get a
    floored width inside the ratios and a zero shift, since their
    convexification term is identically zero).
    """
    width = box.width()
    dvec = np.maximum(width, _WIDTH_FLOOR)
    rowsum = mn_hessian_rowsum(obj, box, dvec)
    diag_lo = hessian_diag_lower(obj, box)
    alphas = np.maximum(0.0, -0.5 * (diag_lo - rowsum))
    alphas[width <= 0.0] = 0.0
    return AlphaShift.per_coordinate(alphas)


def _check_in_box(box: Box, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not box.contains(z):
        raise ValueError("point lies outside the box")
    return z


def alpha_objective_value(obj: Objective, shift: AlphaShift, box: Box, z) -> float:
    z = _check_in_box(box, z)
    a = shift.vector(box.dim)
    return objective_value(obj, z) + float(np.sum(a * (z - box.lo) * (z - box.hi)))


def alpha_objective_gradient(obj: Objective, shift: AlphaShift, box: Box, z) -> np.ndarray:
    z = _check_in_box(box, z)
    a = shift.vector(box.dim)
    return objective_gradient(obj, z) + a * (2.0 * z - box.lo - box.hi)
