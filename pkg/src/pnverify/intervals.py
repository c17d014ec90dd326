"""Interval arithmetic and interval bound propagation for polynomial networks.

Bounds are propagated through the product recursions three times over:
outputs, input gradients (one ``k x d`` interval Jacobian per level), and
-- for small ``d`` -- a dense interval enclosure of the objective Hessian.

Endpoint arithmetic is plain round-to-nearest float64 (no outward rounding);
call ``.inflate(slack)`` on any result to widen endpoints if desired.
Products of two intervals always take the explicit min/max over the four
endpoint products, never sign-case shortcuts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .networks import CcpNetwork, Network, NcpNetwork, Objective

__all__ = [
    "Interval",
    "Box",
    "IntervalVector",
    "IntervalMatrix",
    "HiddenBounds",
    "interval_mul",
    "interval_linear",
    "ibp_hidden_bounds",
    "ibp_output_bounds",
    "ibp_objective_lower",
    "ibp_gradient_bounds",
    "ibp_hessian_bounds_dense",
]


def mul_bounds(alo, ahi, blo, bhi):
    """Elementwise interval product: explicit min/max over the 4 products."""
    products = np.stack([alo * blo, alo * bhi, ahi * blo, ahi * bhi])
    return products.min(axis=0), products.max(axis=0)


def linear_bounds(A: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Bounds of ``A @ h`` for exact ``A`` and elementwise bounds on ``h``."""
    Ap = np.maximum(A, 0.0)
    An = np.minimum(A, 0.0)
    return Ap @ lo + An @ hi, Ap @ hi + An @ lo


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def inflate(self, slack: float) -> "Interval":
        return Interval(self.lo - slack, self.hi + slack)

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= value <= self.hi + tol


@dataclass(frozen=True)
class IntervalVector:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def inflate(self, slack: float) -> "IntervalVector":
        return IntervalVector(self.lo - slack, self.hi + slack)

    def contains(self, v, tol: float = 0.0) -> bool:
        v = np.asarray(v, dtype=np.float64)
        return bool(np.all(self.lo - tol <= v) and np.all(v <= self.hi + tol))


@dataclass(frozen=True)
class IntervalMatrix:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.ndim != 2 or lo.shape != hi.shape:
            raise ValueError("bounds must be 2-D arrays of equal shape")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def inflate(self, slack: float) -> "IntervalMatrix":
        return IntervalMatrix(self.lo - slack, self.hi + slack)

    def contains(self, M, tol: float = 0.0) -> bool:
        M = np.asarray(M, dtype=np.float64)
        return bool(np.all(self.lo - tol <= M) and np.all(M <= self.hi + tol))


@dataclass(frozen=True)
class Box:
    """Axis-aligned input region [lo, hi]; the branch-and-bound unit."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def linf_ball(cls, center, radius: float, clamp: tuple[float, float] = (0.0, 1.0)) -> "Box":
        """The radius-ball around ``center`` intersected with the domain box."""
        if radius < 0:
            raise ValueError("radius must be non-negative")
        center = np.asarray(center, dtype=np.float64)
        return cls(np.maximum(clamp[0], center - radius), np.minimum(clamp[1], center + radius))

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z, dtype=np.float64)
        return bool(np.all(self.lo - tol <= z) and np.all(z <= self.hi + tol))

    def clamp(self, z) -> np.ndarray:
        return np.clip(np.asarray(z, dtype=np.float64), self.lo, self.hi)


def interval_mul(a: Interval, b: Interval) -> Interval:
    lo, hi = mul_bounds(a.lo, a.hi, b.lo, b.hi)
    return Interval(float(lo), float(hi))


def interval_linear(w, h: IntervalVector) -> Interval:
    """Bounds of the dot product of exact ``w`` with an interval vector."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != h.lo.shape:
        raise ValueError(f"weight shape {w.shape} does not match bounds {h.lo.shape}")
    wp = np.maximum(w, 0.0)
    wn = np.minimum(w, 0.0)
    return Interval(float(wp @ h.lo + wn @ h.hi), float(wp @ h.hi + wn @ h.lo))


@dataclass(frozen=True)
class HiddenBounds:
    """Per-level bounds on the pre-product values and hidden states.

    ``inner`` carries the affine-mix bounds for nested-factorization
    networks (``None`` for the skip-product kind).
    """

    xhat: tuple[IntervalVector, ...]
    x: tuple[IntervalVector, ...]
    inner: tuple[IntervalVector, ...] | None


def _check_box(net: Network, box: Box) -> None:
    if box.dim != net.input_dim:
        raise ValueError(f"box has dim {box.dim}, network expects {net.input_dim}")


def ibp_hidden_bounds(net: Network, box: Box) -> HiddenBounds:
    """Sound elementwise bounds on every level's hidden state over the box."""
    _check_box(net, box)
    xhat = []
    for Wn in net.W:
        lo, hi = linear_bounds(Wn.T, box.lo, box.hi)
        xhat.append(IntervalVector(lo, hi))
    x = [xhat[0]]
    inner: list[IntervalVector] | None
    if isinstance(net, CcpNetwork):
        inner = None
        for n in range(1, net.degree):
            lo, hi = mul_bounds(xhat[n].lo + 1.0, xhat[n].hi + 1.0, x[-1].lo, x[-1].hi)
            x.append(IntervalVector(lo, hi))
    else:
        inner = []
        for n in range(1, net.degree):
            ylo, yhi = linear_bounds(net.S[n - 1].T, x[-1].lo, x[-1].hi)
            ylo = ylo + net.b[n - 1]
            yhi = yhi + net.b[n - 1]
            inner.append(IntervalVector(ylo, yhi))
            lo, hi = mul_bounds(xhat[n].lo, xhat[n].hi, ylo, yhi)
            x.append(IntervalVector(lo, hi))
    return HiddenBounds(tuple(xhat), tuple(x), tuple(inner) if inner is not None else None)


def ibp_output_bounds(net: Network, box: Box) -> IntervalVector:
    """Bounds on ``f(z)`` over the box: output-map split plus bias."""
    hidden = ibp_hidden_bounds(net, box)
    last = hidden.x[-1]
    lo, hi = linear_bounds(net.C, last.lo, last.hi)
    return IntervalVector(lo + net.beta, hi + net.beta)


def ibp_objective_lower(obj: Objective, box: Box) -> float:
    """A sound lower bound on the margin: LB(f_t) - UB(f_gamma)."""
    out = ibp_output_bounds(obj.network, box)
    return float(out.lo[obj.t] - out.hi[obj.gamma])


def ibp_gradient_bounds(net: Network, box: Box) -> list[IntervalMatrix]:
    """Per-level bounds on the ``k x d`` Jacobians of the hidden states.

    Mirrors the gradient recursion: the ``w * state`` term uses the sign
    split of the exact weights, the rescaling term is a 4-product interval
    multiply against the previous level's Jacobian bounds.
    """
    _check_box(net, box)
    hidden = ibp_hidden_bounds(net, box)
    W1T = net.W[0].T
    levels = [IntervalMatrix(W1T.copy(), W1T.copy())]
    for n in range(1, net.degree):
        WnT = net.W[n].T
        Wp = np.maximum(WnT, 0.0)
        Wm = np.minimum(WnT, 0.0)
        prev = levels[-1]
        if isinstance(net, CcpNetwork):
            state = hidden.x[n - 1]
            t1lo = Wp * state.lo[:, None] + Wm * state.hi[:, None]
            t1hi = Wp * state.hi[:, None] + Wm * state.lo[:, None]
            mlo, mhi = hidden.xhat[n].lo + 1.0, hidden.xhat[n].hi + 1.0
            t2lo, t2hi = mul_bounds(mlo[:, None], mhi[:, None], prev.lo, prev.hi)
        else:
            assert hidden.inner is not None
            state = hidden.inner[n - 1]
            t1lo = Wp * state.lo[:, None] + Wm * state.hi[:, None]
            t1hi = Wp * state.hi[:, None] + Wm * state.lo[:, None]
            qlo, qhi = linear_bounds(net.S[n - 1].T, prev.lo, prev.hi)
            mlo, mhi = hidden.xhat[n].lo, hidden.xhat[n].hi
            t2lo, t2hi = mul_bounds(mlo[:, None], mhi[:, None], qlo, qhi)
        levels.append(IntervalMatrix(t1lo + t2lo, t1hi + t2hi))
    return levels


def ibp_hessian_bounds_dense(obj: Objective, box: Box) -> IntervalMatrix:
    """Dense interval enclosure of the objective Hessian over the box.

    Built by expanding the Hessian recursion from the output layer down:
    a running interval weight (seeded with the margin's output row) scales
    each level's symmetric rank-2 contribution ``w u.T + u w.T``, where
    ``u`` ranges over the previous level's Jacobian bound rows.  This is
    exactly the interval matrix the matrix-free machinery in
    ``convexify`` works with, materialized for small-``d`` oracle use.
    """
    net = obj.network
    _check_box(net, box)
    d = net.input_dim
    hidden = ibp_hidden_bounds(net, box)
    grads = ibp_gradient_bounds(net, box)
    dlo = obj.c_row.copy()
    dhi = obj.c_row.copy()
    Mlo = np.zeros((d, d))
    Mhi = np.zeros((d, d))
    for n in range(net.degree - 1, 0, -1):
        prev = grads[n - 1]
        if isinstance(net, CcpNetwork):
            glo, ghi = prev.lo, prev.hi
        else:
            glo, ghi = linear_bounds(net.S[n - 1].T, prev.lo, prev.hi)
        slo, shi = mul_bounds(dlo[:, None], dhi[:, None], glo, ghi)
        Wn = net.W[n]
        Wp = np.maximum(Wn, 0.0)
        Wm = np.minimum(Wn, 0.0)
        lo_half = Wp @ slo + Wm @ shi
        hi_half = Wp @ shi + Wm @ slo
        Mlo += lo_half + lo_half.T
        Mhi += hi_half + hi_half.T
        if isinstance(net, CcpNetwork):
            dlo, dhi = mul_bounds(dlo, dhi, hidden.xhat[n].lo + 1.0, hidden.xhat[n].hi + 1.0)
        else:
            plo, phi = mul_bounds(dlo, dhi, hidden.xhat[n].lo, hidden.xhat[n].hi)
            dlo, dhi = linear_bounds(net.S[n - 1], plo, phi)
    return IntervalMatrix(Mlo, Mhi)
