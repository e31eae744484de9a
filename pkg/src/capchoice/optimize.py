"""Projected gradient ascent for smooth concave objectives on a box."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

ARMIJO_C = 1e-4
MIN_STEP = 1e-12


@dataclass(frozen=True)
class AscentResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool


def _projected_gradient(x, g, lower, upper):
    pg = g.copy()
    at_lower = x <= lower
    pg[at_lower] = np.maximum(pg[at_lower], 0.0)
    if upper is not None:
        at_upper = x >= upper
        pg[at_upper] = np.minimum(pg[at_upper], 0.0)
    return pg


def projected_ascent(
    value: Callable[[np.ndarray], float],
    value_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    lower: float = 0.0,
    upper: float | None = None,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> AscentResult:
    """Maximize a concave objective subject to lower <= x <= upper.

    Backtracking (Armijo) line search from unit step, halving on
    rejection.  Convergence is declared when the projected-gradient
    infinity norm drops below ``tol`` or the accepted step collapses
    below machine-scale resolution, which at a stationary point of a
    concave objective is equivalent.
    """
    x = np.array(x0, dtype=float)
    x = np.clip(x, lower, upper)
    f, g = value_grad(x)
    converged = False
    it = 0
    pg = _projected_gradient(x, g, lower, upper)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(pg)) < tol:
            converged = True
            it -= 1
            break
        step = 1.0
        accepted = False
        while step >= MIN_STEP:
            x_new = np.clip(x + step * g, lower, upper)
            direction = x_new - x
            if np.max(np.abs(direction)) == 0.0:
                break
            f_new = value(x_new)
            if f_new >= f + ARMIJO_C * float(g @ direction):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no admissible ascent step: stationary to working precision
            converged = True
            break
        if np.max(np.abs(x_new - x)) < MIN_STEP:
            x = x_new
            converged = True
            break
        x = x_new
        f, g = value_grad(x)
        pg = _projected_gradient(x, g, lower, upper)
    grad_norm = float(np.max(np.abs(pg))) if pg.size else 0.0
    return AscentResult(x, f, g, it, grad_norm, converged)
