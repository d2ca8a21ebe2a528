"""
Time loop of the fully discrete scheme.

Each step solves damage, then displacement, then temperature. Every
cross-coupling is lagged by the scheme itself (damage sees ``u^k``, the
momentum equation sees ``phi^{k+1}`` and ``theta^k``, heat sees ``u^{k+1}``),
so the sequence solves the coupled step exactly rather than splitting it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import assembly, linalg, space, tensor
from .assembly import BCSpec, ModelParams
from .errors import InvalidArgument, SolverBreakdown, StepFailure
from .mesh import Mesh
from .nonlinear import ABS_FLOOR, NewtonConfig, NewtonReport, newton_solve
from .space import SCALAR, VECTOR, Field

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Stencils and time grid
# ---------------------------------------------------------------------------


def stencil_ddt2(v_km1, v_k, v_kp1, tau):
    """Second difference ``(v^{k-1} - 2 v^k + v^{k+1}) / tau^2``."""
    if not tau > 0:
        raise InvalidArgument("tau must be positive")
    return (v_km1 - 2.0 * v_k + v_kp1) / tau**2


def stencil_centered(v_km1, v_kp1, tau):
    """Centered difference ``(v^{k+1} - v^{k-1}) / (2 tau)``."""
    if not tau > 0:
        raise InvalidArgument("tau must be positive")
    return (v_kp1 - v_km1) / (2.0 * tau)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise InvalidArgument(f"M must be a positive integer, got {self.M}")
        if not self.T > 0:
            raise InvalidArgument(f"T must be positive, got {self.T}")

    @classmethod
    def from_tau(cls, tau: float, M: int) -> "TimeGrid":
        return cls(tau * M, M)

    @property
    def tau(self) -> float:
        return self.T / self.M

    def t(self, k: int) -> float:
        return k * self.tau

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.M + 1)


# ---------------------------------------------------------------------------
# State, data and settings
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateHistory:
    """Fields needed to advance from level k: ``u^{k-1}, u^k, phi^k, theta^k``."""

    u_prev: Field
    u_curr: Field
    phi_curr: Field
    theta_curr: Field
    k: int = 0

    def __post_init__(self):
        mesh = self.u_curr.mesh
        if any(f.mesh is not mesh for f in (self.u_prev, self.phi_curr, self.theta_curr)):
            raise InvalidArgument("state fields must share one mesh")
        if self.u_curr.kind != VECTOR or self.u_prev.kind != VECTOR:
            raise InvalidArgument("displacements must be vector fields")
        if self.phi_curr.kind != SCALAR or self.theta_curr.kind != SCALAR:
            raise InvalidArgument("damage and temperature must be scalar fields")

    @property
    def mesh(self) -> Mesh:
        return self.u_curr.mesh


FieldState = StateHistory


def _zero_vector(x, t=None):
    return np.zeros((len(x), 2))


def _zero_scalar(x, t=None):
    return np.zeros(len(x))


def _one_scalar(x, t=None):
    return np.ones(len(x))


@dataclass(frozen=True)
class ProblemData:
    """Volume data ``f(x, t), gamma(x, t)`` and initial data ``u0, v0, phi0, theta0``.

    Callables take an ``(N, 2)`` point array; time-dependent ones also ``t``.
    Boundary data (including the heat flux gbar) lives in :class:`BCSpec`.
    """

    f: Callable = _zero_vector
    gamma: Callable = _zero_scalar
    u0: Callable = _zero_vector
    v0: Callable = _zero_vector
    phi0: Callable = _one_scalar
    theta0: Callable = _zero_scalar


@dataclass(frozen=True)
class SolverSettings:
    """
    freeze_damage keeps phi at its initial value (decoupled verification
    problems); clip_damage truncates negative damage values after each
    solve; monolithic re-solves the stacked three-field residual by Newton
    starting from the sequential result.
    """

    newton: NewtonConfig = NewtonConfig()
    freeze_damage: bool = False
    clip_damage: bool = False
    monolithic: bool = False


@dataclass
class StepReport:
    k: int  # level reached by this step
    newton_iters: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)  # relative residual of each sub-solve
    penalty_violation: float = 0.0  # int [phi^{k+1} - phi^k]_+
    phi_min: float = 0.0
    phi_max: float = 0.0
    theta_max: float = 0.0
    converged: bool = True
    # stability monitor inputs at the new level L = k
    theta_l2sq: float = 0.0
    theta_grad_sq: float = 0.0
    strain_sq: float = 0.0
    strain_A_sq: float = 0.0
    strain_rate_sq: float = 0.0  # ||E(delta_tau u^{L-1})||^2
    # data norms at the previous level t_{k-1}, as entered in the step
    f_norm: float = 0.0
    gamma_norm: float = 0.0
    gammabar_norm: float = 0.0


# ---------------------------------------------------------------------------
# Initialization and one step
# ---------------------------------------------------------------------------


def initialize(mesh: Mesh, u0, v0, phi0, theta0, grid: TimeGrid) -> StateHistory:
    """``u^{-1} = I_h u0 - tau I_h v0``, ``u^0 = I_h u0``, ``phi^0 = I_h phi0``, ``theta^0 = I_h theta0``."""
    u_curr = space.interpolate_nodal(mesh, u0, VECTOR)
    v = space.interpolate_nodal(mesh, v0, VECTOR)
    u_prev = u_curr - grid.tau * v
    phi = space.interpolate_nodal(mesh, phi0, SCALAR)
    theta = space.interpolate_nodal(mesh, theta0, SCALAR)
    return StateHistory(u_prev, u_curr, phi, theta, 0)


def _constrained(fun, dofs, vals):
    """Wrap a residual/Jacobian callback so that ``x[dofs] = vals`` holds."""
    if len(dofs) == 0:
        return fun
    n = None
    keep = None

    def wrapped(x):
        nonlocal n, keep
        R, J = fun(x)
        if keep is None:
            n = len(x)
            keep = np.ones(n)
            keep[dofs] = 0.0
        R = R.copy()
        R[dofs] = x[dofs] - vals
        D = sp.diags(keep)
        J = D @ J @ D + sp.diags(1.0 - keep)
        return R, linalg.as_system_matrix(J)

    return wrapped


def _newton(fun, x0, dofs, vals, cfg, name):
    x0 = np.array(x0, dtype=float)
    x0[dofs] = vals
    x, rep = newton_solve(_constrained(fun, dofs, vals), x0, cfg)
    return x, rep


def _rel(rep: NewtonReport) -> float:
    r0 = rep.residuals[0]
    # a start already below the absolute floor counts as solved exactly
    return rep.final_residual / r0 if r0 > ABS_FLOOR else 0.0


def solve_damage(state, p, bcs, grid, settings):
    mesh = state.mesh
    phi_k = state.phi_curr
    if settings.freeze_damage:
        return phi_k.copy(), NewtonReport(iterations=0, residuals=[0.0], converged=True)
    dofs, vals = assembly.dirichlet_dofs(phi_k.dofmap, bcs.damage, grid.t(state.k + 1))

    def fun(x):
        return assembly.assemble_damage(phi_k.with_coeffs(x), phi_k, state.u_curr, p)

    x, rep = _newton(fun, phi_k.coeffs, dofs, vals, settings.newton, "damage")
    if settings.clip_damage:
        x = np.maximum(x, 0.0)
    return phi_k.with_coeffs(x), rep


def momentum_system(state, phi_new, f_k, p, bcs, grid):
    """Constrained momentum system ``(A, b, dofs, vals, A_raw, b_raw)`` for the step from ``state``."""
    mesh = state.mesh
    tau = grid.tau
    traction = assembly.boundary_load(mesh, bcs.displacement, grid.t(state.k), VECTOR)
    A, b = assembly.assemble_momentum(state.u_curr, state.u_prev, phi_new, state.theta_curr, f_k, p, tau,
                                      traction)
    dofs, vals = assembly.dirichlet_dofs(state.u_curr.dofmap, bcs.displacement, grid.t(state.k + 1))
    Ac, bc = linalg.apply_dirichlet(A, b, dofs, vals)
    return Ac, bc, dofs, vals, A, b


def _free_relative(r, b, dofs):
    free = np.ones(len(r), bool)
    free[dofs] = False
    denom = np.linalg.norm(b[free])
    num = np.linalg.norm(r[free])
    return num / denom if denom > 0 else num


def solve_heat(state, u_new, gamma_k, gbar_vec, p, bcs, grid, settings):
    theta_k = state.theta_curr
    dofs, vals = assembly.dirichlet_dofs(theta_k.dofmap, bcs.temperature, grid.t(state.k + 1))

    def fun(x):
        return assembly.assemble_heat(theta_k.with_coeffs(x), theta_k, u_new, state.u_prev, gamma_k,
                                      gbar_vec, p, grid.tau)

    x, rep = _newton(fun, theta_k.coeffs, dofs, vals, settings.newton, "heat")
    return theta_k.with_coeffs(x), rep


def _monolithic(state, phi, u, theta, f_k, gamma_k, gbar_vec, p, bcs, grid, settings):
    """Newton on the stacked residual ``[R_phi, R_u, R_theta]`` from the sequential solution."""
    mesh = state.mesh
    n_s, n_v = phi.dofmap.n_dofs, u.dofmap.n_dofs
    tau = grid.tau
    traction = assembly.boundary_load(mesh, bcs.displacement, grid.t(state.k), VECTOR)
    t1 = grid.t(state.k + 1)
    d_phi, v_phi = assembly.dirichlet_dofs(phi.dofmap, bcs.damage, t1)
    d_u, v_u = assembly.dirichlet_dofs(u.dofmap, bcs.displacement, t1)
    d_th, v_th = assembly.dirichlet_dofs(theta.dofmap, bcs.temperature, t1)
    dofs = np.concatenate([d_phi, n_s + d_u, n_s + n_v + d_th]).astype(np.int64)
    vals = np.concatenate([v_phi, v_u, v_th])

    def split(x):
        return (phi.with_coeffs(x[:n_s]), u.with_coeffs(x[n_s:n_s + n_v]), theta.with_coeffs(x[n_s + n_v:]))

    def fun(x):
        ph, uu, th = split(x)
        if settings.freeze_damage:
            R_p = ph.coeffs - state.phi_curr.coeffs
            J_pp = sp.identity(n_s, format="csr")
        else:
            R_p, J_pp = assembly.assemble_damage(ph, state.phi_curr, state.u_curr, p)
        A, b = assembly.assemble_momentum(state.u_curr, state.u_prev, ph, state.theta_curr, f_k, p, tau,
                                          traction)
        R_u = A @ uu.coeffs - b
        J_up = assembly.momentum_damage_coupling(uu, ph, p)
        R_t, J_tt = assembly.assemble_heat(th, state.theta_curr, uu, state.u_prev, gamma_k, gbar_vec, p, tau)
        J_tu = assembly.heat_displacement_coupling(state.theta_curr, uu, p, tau)
        J = sp.bmat([[J_pp, None, None], [J_up, A, None], [None, J_tu, J_tt]], format="csr")
        return np.concatenate([R_p, R_u, R_t]), J

    x0 = np.concatenate([phi.coeffs, u.coeffs, theta.coeffs])
    wrapped = _constrained(fun, dofs, vals)
    # scale for the relative test: residual at the explicit predictor
    pred = np.concatenate([state.phi_curr.coeffs, 2 * state.u_curr.coeffs - state.u_prev.coeffs,
                           state.theta_curr.coeffs])
    pred[dofs] = vals
    r_pred = np.linalg.norm(wrapped(pred)[0])
    r_seq = np.linalg.norm(wrapped(x0)[0])
    if r_seq <= max(settings.newton.tol_rel * r_pred, 1e-14):
        return (phi, u, theta), NewtonReport(0, [r_seq], True), (r_seq / r_pred if r_pred else 0.0)
    x, rep = newton_solve(wrapped, x0, settings.newton)
    return split(x), rep, (rep.final_residual / r_pred if r_pred else 0.0)


def step(state: StateHistory, p: ModelParams, bcs: BCSpec, data: ProblemData, grid: TimeGrid,
         settings: SolverSettings = SolverSettings()):
    """Advance one level: damage, momentum, heat.

    Returns ``(new_state, StepReport)``. Raises :class:`StepFailure` when a
    sub-solve does not converge or a linear solve breaks down.
    """
    mesh = state.mesh
    if state.k >= grid.M:
        raise InvalidArgument(f"state is already at the final level {grid.M}")
    tk = grid.t(state.k)
    report = StepReport(k=state.k + 1)
    f_k = space.interpolate_nodal(mesh, data.f, VECTOR, t=tk)
    gamma_k = space.interpolate_nodal(mesh, data.gamma, SCALAR, t=tk)
    gbar_vec = assembly.boundary_load(mesh, bcs.temperature, tk, SCALAR)
    report.f_norm = space.norm(f_k)
    report.gamma_norm = space.norm(gamma_k)
    report.gammabar_norm = assembly.boundary_norm(mesh, bcs.temperature, tk)

    try:
        phi_new, rep_d = solve_damage(state, p, bcs, grid, settings)
        report.newton_iters["damage"] = rep_d.iterations
        report.residuals["damage"] = _rel(rep_d)
        if not rep_d.converged:
            report.converged = False
            raise StepFailure(f"damage Newton did not converge at step {state.k + 1}", report)

        A, b, dofs, vals, A_raw, b_raw = momentum_system(state, phi_new, f_k, p, bcs, grid)
        u_coeffs = linalg.solve_direct(A, b)
        u_new = state.u_curr.with_coeffs(u_coeffs)
        report.newton_iters["momentum"] = 1
        report.residuals["momentum"] = float(_free_relative(A_raw @ u_coeffs - b_raw, b_raw, dofs))

        theta_new, rep_h = solve_heat(state, u_new, gamma_k, gbar_vec, p, bcs, grid, settings)
        report.newton_iters["heat"] = rep_h.iterations
        report.residuals["heat"] = _rel(rep_h)
        if not rep_h.converged:
            report.converged = False
            raise StepFailure(f"heat Newton did not converge at step {state.k + 1}", report)

        if settings.monolithic:
            (phi_new, u_new, theta_new), rep_m, rel = _monolithic(
                state, phi_new, u_new, theta_new, f_k, gamma_k, gbar_vec, p, bcs, grid, settings)
            report.newton_iters["monolithic"] = rep_m.iterations
            report.residuals["monolithic"] = rel
            if not rep_m.converged:
                report.converged = False
                raise StepFailure(f"monolithic Newton did not converge at step {state.k + 1}", report)
    except SolverBreakdown as exc:
        report.converged = False
        raise StepFailure(f"linear solver breakdown at step {state.k + 1}: {exc}", report) from exc

    geom = space.geometry(mesh)
    inc = space.values_at_qp(phi_new - state.phi_curr, geom)
    report.penalty_violation = space.integrate(np.maximum(inc, 0.0), geom)
    report.phi_min = float(phi_new.coeffs.min())
    report.phi_max = float(phi_new.coeffs.max())
    report.theta_max = float(theta_new.coeffs.max())
    report.theta_l2sq = space.norm(theta_new) ** 2
    report.theta_grad_sq = space.norm(theta_new, space.H1SEMI) ** 2
    E = space.strain_at_qp(u_new, geom)
    report.strain_sq = space.integrate(E**2, geom)
    report.strain_A_sq = space.integrate(tensor.B_array(p.moduli, E), geom)
    Ed = space.strain_at_qp(u_new - state.u_prev, geom) / (2.0 * grid.tau)
    report.strain_rate_sq = space.integrate(Ed**2, geom)

    new_state = StateHistory(state.u_curr, u_new, phi_new, theta_new, state.k + 1)
    return new_state, report


def joint_residuals(old: StateHistory, new: StateHistory, p: ModelParams, bcs: BCSpec, data: ProblemData,
                    grid: TimeGrid) -> dict:
    """Residual norms of all three discrete equations at a computed level, on free dofs.

    Each value is relative to the residual obtained with the previous level
    substituted for the unknown, which is the scale Newton measures against.
    """
    mesh = old.mesh
    tk = grid.t(old.k)
    t1 = grid.t(old.k + 1)
    f_k = space.interpolate_nodal(mesh, data.f, VECTOR, t=tk)
    gamma_k = space.interpolate_nodal(mesh, data.gamma, SCALAR, t=tk)
    gbar_vec = assembly.boundary_load(mesh, bcs.temperature, tk, SCALAR)
    out = {}

    d, _ = assembly.dirichlet_dofs(old.phi_curr.dofmap, bcs.damage, t1)
    r_new, _ = assembly.assemble_damage(new.phi_curr, old.phi_curr, old.u_curr, p)
    r_old, _ = assembly.assemble_damage(old.phi_curr, old.phi_curr, old.u_curr, p)
    out["damage"] = _free_relative(r_new, r_old, d)

    A, b, d, _, A_raw, b_raw = momentum_system(old, new.phi_curr, f_k, p, bcs, grid)
    out["momentum"] = _free_relative(A_raw @ new.u_curr.coeffs - b_raw, b_raw, d)

    d, _ = assembly.dirichlet_dofs(old.theta_curr.dofmap, bcs.temperature, t1)
    r_new, _ = assembly.assemble_heat(new.theta_curr, old.theta_curr, new.u_curr, old.u_prev, gamma_k,
                                      gbar_vec, p, grid.tau)
    r_old, _ = assembly.assemble_heat(old.theta_curr, old.theta_curr, new.u_curr, old.u_prev, gamma_k,
                                      gbar_vec, p, grid.tau)
    out["heat"] = _free_relative(r_new, r_old, d)
    return out


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Snapshots at levels ``stride, 2 stride, ...`` and ``M``, plus every step report."""

    initial: StateHistory
    snapshots: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    grid: TimeGrid | None = None
    stride: int = 1

    @property
    def final(self) -> StateHistory:
        return self.snapshots[-1] if self.snapshots else self.initial

    @property
    def levels(self) -> list:
        return [s.k for s in self.snapshots]


def run(mesh: Mesh, p: ModelParams, bcs: BCSpec, data: ProblemData, grid: TimeGrid,
        settings: SolverSettings = SolverSettings(), stride: int = 1, callback=None) -> Trajectory:
    """Execute all M steps.

    ``callback(state, report)`` is invoked after each step (for streaming
    output). On failure a :class:`StepFailure` is raised whose
    ``trajectory`` holds the steps completed so far.
    """
    if stride < 1:
        raise InvalidArgument("snapshot stride must be at least 1")
    bcs.check_tags(mesh)
    state = initialize(mesh, data.u0, data.v0, data.phi0, data.theta0, grid)
    traj = Trajectory(initial=state, grid=grid, stride=stride)
    for _ in range(grid.M):
        try:
            state, rep = step(state, p, bcs, data, grid, settings)
        except StepFailure as exc:
            if exc.report is not None:
                traj.reports.append(exc.report)
            exc.trajectory = traj
            raise
        traj.reports.append(rep)
        if state.k % stride == 0 or state.k == grid.M:
            traj.snapshots.append(state)
        if callback is not None:
            callback(state, rep)
    return traj
