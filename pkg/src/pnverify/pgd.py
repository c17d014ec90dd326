"""Projected gradient descent on a box, plus the two bounding wrappers.

``upper_bound`` minimizes the exact margin (any feasible point's value is a
valid upper bound of the box minimum).  ``lower_bound_alpha`` minimizes the
shifted margin and converts the best iterate into a certified lower bound by
subtracting a first-order suboptimality slack: for a convex function,
``min f >= f(z) - <proj. gradient, feasible directions>`` and Cauchy-Schwarz
bounds the inner product by ``||pg||_2 * ||u - l||_2``.  The slack vanishes
exactly at a box-constrained stationary point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .convexify import AlphaShift, alpha_objective_gradient, alpha_objective_value
from .intervals import Box
from .networks import Objective, objective_gradient, objective_value

__all__ = ["PgdConfig", "NumericalError", "pgd_minimize", "upper_bound", "lower_bound_alpha"]

ValueGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


class NumericalError(RuntimeError):
    """Objective or gradient evaluated to a non-finite value."""


@dataclass(frozen=True)
class PgdConfig:
    iterations: int = 100
    step_scale: float = 0.1
    restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0 or self.restarts <= 0:
            raise ValueError("iterations and restarts must be positive")
        if self.step_scale <= 0:
            raise ValueError("step_scale must be positive")


def _eval(value_grad: ValueGrad, z: np.ndarray) -> tuple[float, np.ndarray]:
    value, grad = value_grad(z)
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite objective data at z={z!r}")
    return float(value), grad


def pgd_minimize(value_grad: ValueGrad, box: Box, cfg: PgdConfig) -> tuple[np.ndarray, float]:
    """Fixed-step PGD; returns the best iterate and its value.

    Step size is ``step_scale`` times the mean box width.  Restart 0 starts
    at the box center, later restarts at seeded uniform points; the best
    value over all iterates of all restarts wins, earliest restart on ties.
    """
    rng = np.random.default_rng(cfg.seed)
    step = cfg.step_scale * float(np.mean(box.width()))
    best_value = np.inf
    best_point = box.center()
    for restart in range(cfg.restarts):
        z = box.center() if restart == 0 else rng.uniform(box.lo, box.hi)
        value, grad = _eval(value_grad, z)
        if value < best_value:
            best_value, best_point = value, z
        for _ in range(cfg.iterations):
            z = np.clip(z - step * grad, box.lo, box.hi)
            value, grad = _eval(value_grad, z)
            if value < best_value:
                best_value, best_point = value, z
    return best_point.copy(), best_value


def upper_bound(obj: Objective, box: Box, cfg: PgdConfig) -> tuple[np.ndarray, float]:
    """Best margin value found by PGD; exact evaluation at a feasible point."""

    def value_grad(z):
        return objective_value(obj, z), objective_gradient(obj, z)

    return pgd_minimize(value_grad, box, cfg)


def lower_bound_alpha(obj: Objective, box: Box, shift: AlphaShift, cfg: PgdConfig) -> float:
    """Certified lower bound of the margin on the box via the shifted margin.

    Sound whenever ``shift`` makes the shifted margin convex on the box: the
    shifted value at the PGD point, minus the projected-gradient slack,
    under-bounds the shifted minimum, which under-bounds the true minimum.
    """

    def value_grad(z):
        return (
            alpha_objective_value(obj, shift, box, z),
            alpha_objective_gradient(obj, shift, box, z),
        )

    z, value = pgd_minimize(value_grad, box, cfg)
    grad = alpha_objective_gradient(obj, shift, box, z)
    pg = grad.copy()
    pg[(z <= box.lo) & (pg > 0.0)] = 0.0
    pg[(z >= box.hi) & (pg < 0.0)] = 0.0
    slack = float(np.linalg.norm(pg)) * float(np.linalg.norm(box.width()))
    return value - slack
