"""Brute-force references for testing: grids, dense eigensolves, finite
differences, and a sampling harness.

Everything here is deliberately independent of the production bounding code:
the only imports are exact network evaluation and the dense interval-Hessian
entry point.  Margin evaluation over grids uses its own batched forward pass
rather than the per-point recursion, so the two implementations cross-check
each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intervals import Box, ibp_hessian_bounds_dense
from .networks import CcpNetwork, Objective, objective_gradient, objective_value

__all__ = [
    "GridSpec",
    "grid_minimize",
    "dense_lh",
    "dense_spectral_radius",
    "finite_diff_gradient",
    "finite_diff_hessian",
    "sampling_soundness",
]

_DENSE_DIM_CAP = 64


@dataclass(frozen=True)
class GridSpec:
    """Exhaustive grid search settings; 401 points per axis suits d = 2.

    With ``polish`` enabled the best grid point is refined by a monotone
    projected descent (step halving on failure), which removes the grid
    quantization error for smooth objectives.
    """

    resolution: int = 401
    polish: bool = True
    polish_iterations: int = 200

    def __post_init__(self):
        if self.resolution < 3:
            raise ValueError("resolution must be at least 3")
        if self.polish_iterations < 0:
            raise ValueError("polish_iterations must be non-negative")


def _batch_margin(obj: Objective, P: np.ndarray) -> np.ndarray:
    """Margin of every row of ``P``, via a batched forward pass."""
    net = obj.network
    XH = [P @ Wn for Wn in net.W]
    X = XH[0]
    for n in range(1, net.degree):
        if isinstance(net, CcpNetwork):
            X = (XH[n] + 1.0) * X
        else:
            X = XH[n] * (X @ net.S[n - 1] + net.b[n - 1])
    return X @ obj.c_row + (net.beta[obj.t] - net.beta[obj.gamma])


def _polish(obj: Objective, box: Box, z: np.ndarray, value: float, spec: GridSpec):
    step = float(box.width().max()) / (spec.resolution - 1)
    for _ in range(spec.polish_iterations):
        if step < 1e-15:
            break
        grad = objective_gradient(obj, z)
        cand = np.clip(z - step * grad, box.lo, box.hi)
        cval = objective_value(obj, cand)
        if cval < value:
            z, value = cand, cval
        else:
            step *= 0.5
    return value, z


def grid_minimize(obj: Objective, box: Box, spec: GridSpec = GridSpec()) -> tuple[float, np.ndarray]:
    """Exhaustive grid minimum of the margin, optionally descent-polished.

    Ties resolve to the lexicographically first grid point.  Limited to
    d <= 3; pick the resolution so ``resolution**d`` stays affordable.
    """
    d = box.dim
    if d > 3:
        raise ValueError("grid oracle supports d <= 3 only")
    axes = [np.linspace(box.lo[i], box.hi[i], spec.resolution) for i in range(d)]
    best_val = np.inf
    best_pt = box.center()

    def scan(points: np.ndarray) -> None:
        nonlocal best_val, best_pt
        vals = _batch_margin(obj, points)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_pt = points[i]

    if d <= 2:
        mesh = np.meshgrid(*axes, indexing="ij")
        scan(np.stack(mesh, axis=-1).reshape(-1, d))
    else:
        # one plane per leading-axis value keeps memory flat for d = 3
        for x0 in axes[0]:
            mesh = np.meshgrid(*axes[1:], indexing="ij")
            plane = np.stack(mesh, axis=-1).reshape(-1, d - 1)
            points = np.column_stack([np.full(len(plane), x0), plane])
            scan(points)

    if spec.polish:
        best_val, best_pt = _polish(obj, box, best_pt.copy(), best_val, spec)
    return best_val, best_pt


def dense_lh(obj: Objective, box: Box) -> np.ndarray:
    """Dense assembly of the lower-bounding Hessian (small-d reference)."""
    if box.dim > _DENSE_DIM_CAP:
        raise ValueError(f"dense operator capped at d <= {_DENSE_DIM_CAP}")
    bounds = ibp_hessian_bounds_dense(obj, box)
    lb, ub = bounds.lo, bounds.hi
    return 0.5 * (lb + ub) + np.diag(0.5 * (lb.sum(axis=1) - ub.sum(axis=1)))


def dense_spectral_radius(matrix) -> float:
    M = np.asarray(matrix, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(M, M.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    return float(np.abs(np.linalg.eigvalsh(M)).max())


def finite_diff_gradient(fn, z, h: float = 1e-5) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    grad = np.zeros_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        grad[i] = (fn(z + e) - fn(z - e)) / (2.0 * h)
    return grad


def finite_diff_hessian(fn, z, h: float = 1e-4) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    d = z.size
    H = np.zeros((d, d))
    f0 = fn(z)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (fn(z + ei) - 2.0 * f0 + fn(z - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            mixed = (
                fn(z + ei + ej) - fn(z + ei - ej) - fn(z - ei + ej) + fn(z - ei - ej)
            ) / (4.0 * h**2)
            H[i, j] = H[j, i] = mixed
    return H


def sampling_soundness(target, box: Box, n_samples: int, checks, seed: int = 0) -> int:
    """Count sampled points that violate any supplied bound.

    Each check is called as ``check(target, samples)`` with the full
    ``(n_samples, d)`` matrix and returns a boolean violation mask (True
    where the bound fails).  The result is the number of points flagged by
    at least one check -- soundness means 0.
    """
    rng = np.random.default_rng(seed)
    samples = rng.uniform(box.lo, box.hi, size=(n_samples, box.dim))
    violated = np.zeros(n_samples, dtype=bool)
    for check in checks:
        mask = np.asarray(check(target, samples), dtype=bool)
        if mask.shape != (n_samples,):
            raise ValueError("check must return one flag per sample")
        violated |= mask
    return int(violated.sum())
