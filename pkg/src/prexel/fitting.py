"""Small damped Gauss-Newton solver for the model fits.

Levenberg-style damping on the normal equations: solve
(J^T J + lam * diag(J^T J)) step = -J^T r, shrink ``lam`` after accepted
steps and grow it after rejected ones.  Convergence is declared when the
largest relative parameter step falls below ``rel_step_tol``.

Written for the handful of low-dimensional fits in this package; it wants
an analytic Jacobian and makes no attempt at sparsity or bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class FitError(Exception):
    pass


@dataclass
class FitResult:
    params: np.ndarray
    cost: float
    iterations: int
    converged: bool

    @property
    def rms_residual(self) -> float:
        return float(np.sqrt(self.cost))


def gauss_newton(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    max_iter: int = 200,
    rel_step_tol: float = 1e-9,
    lam0: float = 1e-3,
) -> FitResult:
    """Minimize 0.5 * mean(residual(x)^2) from ``x0``.

    Parameters
    ----------
    residual : callable
        Maps parameters (p,) to residuals (n,).
    jacobian : callable
        Maps parameters to the (n, p) matrix of d residual / d param.
    x0 : array
        Starting point; scale matters, normalize ill-scaled problems first.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    cost = 0.5 * float(r @ r) / r.size
    lam = lam0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        jac = np.asarray(jacobian(x), dtype=float)
        if jac.shape != (r.size, x.size):
            raise FitError(
                f"jacobian shape {jac.shape} does not match "
                f"{r.size} residuals x {x.size} params")
        g = jac.T @ r
        h = jac.T @ jac
        accepted = False
        for _ in range(25):
            damped = h + lam * np.diag(np.maximum(np.diag(h), 1e-300))
            try:
                step = np.linalg.solve(damped, -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            r_new = residual(x_new)
            cost_new = 0.5 * float(r_new @ r_new) / r_new.size
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        rel_step = float(np.max(np.abs(step) / np.maximum(np.abs(x_new), 1e-12)))
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam * 0.3, 1e-12)
        if rel_step < rel_step_tol:
            converged = True
            break
    return FitResult(params=x, cost=cost, iterations=it, converged=converged)


def multi_start(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    starts: Sequence[np.ndarray],
    **kwargs,
) -> FitResult:
    """Run :func:`gauss_newton` from several starts, keep the best cost."""
    best: FitResult | None = None
    for x0 in starts:
        result = gauss_newton(residual, jacobian, np.asarray(x0, dtype=float), **kwargs)
        if best is None or result.cost < best.cost:
            best = result
    if best is None:
        raise FitError("no starting points supplied")
    return best
