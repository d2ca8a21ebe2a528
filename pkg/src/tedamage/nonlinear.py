"""Newton iteration for smooth and piecewise-smooth (semismooth) residuals."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InvalidArgument, SolverBreakdown

log = logging.getLogger(__name__)

ABS_FLOOR = 1e-14


@dataclass(frozen=True)
class NewtonConfig:
    tol_rel: float = 1e-8
    max_iter: int = 50
    line_search: str = "off"  # "off" | "backtracking"

    def __post_init__(self):
        if not self.tol_rel > 0:
            raise InvalidArgument("tol_rel must be positive")
        if self.max_iter < 1:
            raise InvalidArgument("max_iter must be at least 1")
        if self.line_search not in ("off", "backtracking"):
            raise InvalidArgument(f"unknown line search {self.line_search!r}")


@dataclass
class NewtonReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")


def newton_solve(residual_and_jacobian, x0, cfg: NewtonConfig = NewtonConfig()):
    """Solve R(x) = 0 by (semismooth) Newton.

    ``residual_and_jacobian(x)`` returns ``(R, J)`` with ``J`` a sparse or dense
    matrix (a generalized Jacobian at kinks). Iteration stops once
    ``||R|| <= tol_rel * ||R(x0)||`` or ``||R|| <= 1e-14``. Backtracking on
    ``||R||^2`` is used when configured, and switched on automatically if a
    full step increases the residual.

    Returns ``(x, report)``; non-convergence is reported, not raised.
    """
    x = np.array(x0, dtype=float, copy=True)
    R, J = residual_and_jacobian(x)
    r0 = float(np.linalg.norm(R))
    report = NewtonReport(residuals=[r0])
    target = max(cfg.tol_rel * r0, ABS_FLOOR)
    if r0 <= target:
        report.converged = True
        return x, report

    best_x, best_r = x.copy(), r0
    search = cfg.line_search == "backtracking"
    rnorm = r0
    for it in range(1, cfg.max_iter + 1):
        dx = _linear_solve(J, -R)
        alpha = 1.0
        x_new = x + dx
        R_new, J_new = residual_and_jacobian(x_new)
        r_new = float(np.linalg.norm(R_new))
        if r_new > rnorm and not search:
            log.debug("residual increased (%.3e -> %.3e); enabling backtracking", rnorm, r_new)
            search = True
        if search:
            for _ in range(30):
                if r_new**2 <= (1.0 - 2e-4 * alpha) * rnorm**2:
                    break
                alpha *= 0.5
                x_new = x + alpha * dx
                R_new, J_new = residual_and_jacobian(x_new)
                r_new = float(np.linalg.norm(R_new))
        x, R, J, rnorm = x_new, R_new, J_new, r_new
        report.iterations = it
        report.residuals.append(rnorm)
        if rnorm < best_r:
            best_x, best_r = x.copy(), rnorm
        if rnorm <= target:
            report.converged = True
            return x, report
        if not np.isfinite(rnorm):
            break
    log.warning("Newton did not converge: residual %.3e after %d iterations", best_r, report.iterations)
    return best_x, report


def _linear_solve(J, b):
    if hasattr(J, "tocsr"):
        return linalg.solve_direct(J, b)
    J = np.atleast_2d(np.asarray(J, dtype=float))
    try:
        return np.linalg.solve(J, b)
    except np.linalg.LinAlgError as exc:
        raise SolverBreakdown(f"singular Jacobian: {exc}") from exc
