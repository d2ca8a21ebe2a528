"""
Post-processing: errors against reference solutions, convergence rates, the
a priori data functionals, the stability monitor and the checker for the
step-size hypotheses of the error estimate.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import space
from .assembly import ModelParams, boundary_norm
from .errors import InvalidArgument
from .mesh import Mesh, nested_node_map
from .space import ANORM, H1SEMI, L2, SCALAR, VECTOR, Field

FIELDS = ("u", "phi", "theta")
NORMS = (L2, H1SEMI)

# errors below this fraction of the field magnitude are rounding noise
NOISE_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Errors against a reference solution
# ---------------------------------------------------------------------------


def _pick(obj, name):
    """Field ``name`` of a state or trajectory (final level), or ``obj`` itself."""
    if isinstance(obj, Field):
        return obj
    state = getattr(obj, "final", obj)
    attr = {"u": "u_curr", "phi": "phi_curr", "theta": "theta_curr"}.get(name)
    if attr is None:
        raise InvalidArgument(f"unknown field {name!r}; expected one of {FIELDS}")
    return getattr(state, attr)


def restrict(reference: Field, coarse_mesh: Mesh) -> Field:
    """Nodal restriction of a field on a nested finer mesh to ``coarse_mesh``."""
    idx = nested_node_map(coarse_mesh, reference.mesh)
    vals = reference.nodal()[idx]
    return space.Field(space.DofMap(coarse_mesh, reference.kind), vals.reshape(-1))


def error_vs_reference(coarse, reference, field: str = "u", norm_kind: str = L2, moduli=None) -> float:
    """Error of a coarse solution measured against a solution on a nested finer mesh.

    Solution values are compared at the coarse nodes. For the H1 seminorm
    the gradients of both solutions are first recovered at the nodes from
    their Gauss-point values, then compared at the coarse nodes.
    """
    fc = _pick(coarse, field)
    fr = _pick(reference, field)
    if fc.kind != fr.kind:
        raise InvalidArgument("fields of different kinds cannot be compared")
    mesh = fc.mesh
    if norm_kind == L2:
        return space.norm(fc - restrict(fr, mesh), L2)
    if norm_kind == H1SEMI:
        idx = nested_node_map(mesh, fr.mesh)
        g_ref = space.recovered_gradient(fr)[idx]
        g_c = space.recovered_gradient(fc)
        return space.nodal_l2(mesh, g_c - g_ref)
    if norm_kind == ANORM:
        return space.norm(fc - restrict(fr, mesh), ANORM, moduli)
    raise InvalidArgument(f"unknown norm kind {norm_kind!r}")


def field_scale(obj, field: str) -> float:
    """Magnitude of a field, used to decide when an error is rounding noise.

    For a trajectory this is the larger L2 norm of the initial and final
    levels, so a field that decays to zero keeps its original scale.
    """
    scale = space.norm(_pick(obj, field), L2)
    initial = getattr(obj, "initial", None)
    if initial is not None:
        scale = max(scale, space.norm(_pick(initial, field), L2))
    return scale


# ---------------------------------------------------------------------------
# Error tables and rates
# ---------------------------------------------------------------------------


@dataclass
class ErrorRow:
    h: float
    tau: float
    errors: dict = field(default_factory=dict)  # (field, norm) -> error
    rates: dict = field(default_factory=dict)  # (field, norm) -> rate vs previous row
    scales: dict = field(default_factory=dict)  # field -> magnitude of the solution


@dataclass
class ErrorTable:
    rows: list = field(default_factory=list)
    fields: tuple = FIELDS
    norms: tuple = NORMS

    def column(self, fld: str, norm: str) -> np.ndarray:
        return np.array([r.errors.get((fld, norm), np.nan) for r in self.rows])

    def rate_column(self, fld: str, norm: str) -> np.ndarray:
        return np.array([r.rates.get((fld, norm), np.nan) for r in self.rows])

    def final_rate(self, fld: str, norm: str) -> float:
        return float(self.rate_column(fld, norm)[-1])

    def fitted_rate(self, fld: str, norm: str) -> float:
        """Least-squares slope of log(error) against log(h) over all rows."""
        e = self.column(fld, norm)
        h = np.array([r.h for r in self.rows])
        if np.any(~np.isfinite(self.rate_column(fld, norm)[1:])):
            return float("nan")
        return float(np.polyfit(np.log(h), np.log(e), 1)[0])

    def to_csv(self, path=None) -> str:
        """One row per mesh: h, tau, then error and rate for each field and norm."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["h", "tau"]
        for f in self.fields:
            for n in self.norms:
                head += [f"{f}_{n}_error", f"{f}_{n}_rate"]
        w.writerow(head)
        for r in self.rows:
            line = [repr(r.h), repr(r.tau)]
            for f in self.fields:
                for n in self.norms:
                    e = r.errors.get((f, n), float("nan"))
                    rate = r.rates.get((f, n), float("nan"))
                    line += [f"{e:.6e}", "" if math.isnan(rate) else f"{rate:.4f}"]
            w.writerow(line)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def rate(e_prev: float, e_curr: float, h_prev: float = 2.0, h_curr: float = 1.0,
         floor: float = 0.0) -> float:
    """Observed order ``log(e_prev / e_curr) / log(h_prev / h_curr)``; NaN if undefined."""
    if not (e_prev > floor and e_curr > floor) or not (np.isfinite(e_prev) and np.isfinite(e_curr)):
        return float("nan")
    return math.log(e_prev / e_curr) / math.log(h_prev / h_curr)


def convergence_rates(table: ErrorTable) -> ErrorTable:
    """Fill ``rates`` from the second row on; the first row has none.

    A rate is undefined (NaN) when either error is zero or below the
    rounding floor ``NOISE_FLOOR`` times the solution magnitude.
    """
    if len(table.rows) < 2:
        raise InvalidArgument("rates need at least two rows")
    hs = [r.h for r in table.rows]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise InvalidArgument("rows must be sorted by decreasing h")
    for prev, cur in zip(table.rows, table.rows[1:]):
        for key, e in cur.errors.items():
            if key not in prev.errors:
                continue
            scale = max(prev.scales.get(key[0], 0.0), cur.scales.get(key[0], 0.0))
            cur.rates[key] = rate(prev.errors[key], e, prev.h, cur.h, NOISE_FLOOR * scale)
    return table


def error_table(levels, reference, h_values, tau, fields=FIELDS, norms=NORMS, moduli=None) -> ErrorTable:
    """Errors of each level's final state against ``reference`` with rates filled in."""
    table = ErrorTable(fields=tuple(fields), norms=tuple(norms))
    for lev, h in zip(levels, h_values):
        row = ErrorRow(h=h, tau=tau)
        for f in fields:
            row.scales[f] = field_scale(reference, f)
            for n in norms:
                row.errors[(f, n)] = error_vs_reference(lev, reference, f, n, moduli)
        table.rows.append(row)
    return convergence_rates(table)


# ---------------------------------------------------------------------------
# Data functionals
# ---------------------------------------------------------------------------


@dataclass
class DataSeries:
    """Norms of the data at levels k = 0..M-1 (the levels that enter a step)."""

    f: np.ndarray  # ||I_h f^k||_{L2}
    gamma: np.ndarray  # ||I_h gamma^k||_{L2}
    gammabar: np.ndarray  # ||gbar^k||_{L2(Gamma)}
    tau: float
    area: float

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.gammabar = np.asarray(self.gammabar, dtype=float)
        if not (len(self.f) == len(self.gamma) == len(self.gammabar)):
            raise InvalidArgument("data series must have equal length")

    @property
    def M(self) -> int:
        return len(self.f)

    @classmethod
    def from_problem(cls, mesh: Mesh, data, bcs, grid) -> "DataSeries":
        fs, gs, bs = [], [], []
        for k in range(grid.M):
            t = grid.t(k)
            fs.append(space.norm(space.interpolate_nodal(mesh, data.f, VECTOR, t=t)))
            gs.append(space.norm(space.interpolate_nodal(mesh, data.gamma, SCALAR, t=t)))
            bs.append(boundary_norm(mesh, bcs.temperature, t))
        return cls(np.array(fs), np.array(gs), np.array(bs), grid.tau, mesh.area)

    @classmethod
    def from_reports(cls, reports, tau: float, area: float) -> "DataSeries":
        return cls([r.f_norm for r in reports], [r.gamma_norm for r in reports],
                   [r.gammabar_norm for r in reports], tau, area)


@dataclass
class AprioriQuantities:
    L: int
    gamma_kappa: float
    alpha_kappa: float
    L1L: float
    L1L_hat: float
    f_sq_sum: float  # sum_{k<L} ||f^k||^2
    f_sum: float  # sum_{k<L} ||f^k||
    lhs: dict = field(default_factory=dict)


def f_exponent(beta: float) -> float:
    return (beta + 2.0) ** 2 / (beta + 1.0) ** 2


def compute_L1L(series: DataSeries, p: ModelParams, L: int, c_ell: float | None = None) -> AprioriQuantities:
    """Data functionals over the levels k = 0..L-1.

    ``c_ell`` is the ellipticity constant of the elasticity operator;
    defaults to the provable value 2 mu.
    """
    if not 0 <= L <= series.M:
        raise InvalidArgument(f"L must lie in [0, {series.M}], got {L}")
    c_ell = p.moduli.ellipticity_constant if c_ell is None else c_ell
    gk = p.gamma_kappa
    e = f_exponent(p.conductivity.beta)
    gb = float(np.sum(series.gammabar[:L] ** 2))
    fe = float(np.sum(series.f[:L] ** e))
    gm = series.tau * float(np.sum(series.gamma[:L] ** 2))
    L1L = gb + gk * fe + gm + (gk + 1.0) * series.area**2
    L1L_hat = gb + fe / p.kappa + gm + series.area**2
    return AprioriQuantities(
        L=L, gamma_kappa=gk, alpha_kappa=p.kappa * c_ell, L1L=L1L, L1L_hat=L1L_hat,
        f_sq_sum=float(np.sum(series.f[:L] ** 2)), f_sum=float(np.sum(series.f[:L])),
    )


# ---------------------------------------------------------------------------
# Step-size hypotheses
# ---------------------------------------------------------------------------


@dataclass
class Bullet:
    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return bool(self.lhs <= self.rhs)


@dataclass
class AssumptionReport:
    bullets: list

    @property
    def overall(self) -> bool:
        return all(b.holds for b in self.bullets)

    def as_text(self) -> str:
        lines = [f"{b.name}: lhs={b.lhs:.6e} rhs={b.rhs:.6e} {'holds' if b.holds else 'violated'}"
                 for b in self.bullets]
        lines.append(f"overall: {'pass' if self.overall else 'fail'}")
        return "\n".join(lines) + "\n"

    def as_keyvalue(self) -> str:
        out = []
        for b in self.bullets:
            out += [f"{b.name}.lhs={b.lhs!r}", f"{b.name}.rhs={b.rhs!r}", f"{b.name}.holds={b.holds}"]
        out.append(f"overall={self.overall}")
        return "\n".join(out) + "\n"


def check_theorem_assumptions(p: ModelParams, series: DataSeries, c_ell: float | None = None) -> AssumptionReport:
    """Evaluate the four step-size conditions of the error estimate.

    Sums over the data run over the M available levels. Each condition is
    reported with its two sides; a violated condition is not an error.
    """
    q = compute_L1L(series, p, series.M, c_ell)
    tau, rho, kappa, ell, a = series.tau, p.rho, p.kappa, p.ell, q.alpha_kappa
    b1 = ell * (rho**2 * tau**2 / kappa * q.L1L_hat + tau**2 / kappa * q.f_sq_sum)
    b2 = ell * (rho * tau / a * math.sqrt(q.L1L) + tau / math.sqrt(2 * a) * q.f_sq_sum)
    b3 = 2 * tau**2 * q.L1L
    b4 = rho * tau / math.sqrt(a) * math.sqrt(q.L1L) + tau / math.sqrt(a) * q.f_sum
    return AssumptionReport([
        Bullet("bullet1", b1, 1.0),
        Bullet("bullet2", b2, 1.0),
        Bullet("bullet3", b3, a),
        Bullet("bullet4", b4, 1.0),
    ])


# ---------------------------------------------------------------------------
# Stability monitor
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    C_theta: float
    C_strain: float
    C_energy: float
    per_step: dict = field(default_factory=dict)  # name -> array over L = 1..M

    def as_dict(self) -> dict:
        return {"C_theta": self.C_theta, "C_strain": self.C_strain, "C_energy": self.C_energy}


def _ratio(num, den):
    num, den = np.asarray(num, float), np.asarray(den, float)
    out = np.zeros_like(num)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    out[~pos & (num > 0)] = np.inf
    return out


def stability_monitor(trajectory, p: ModelParams, series: DataSeries | None = None,
                      c_ell: float | None = None) -> StabilityReport:
    """Fitted constants of the discrete a priori bounds, maximized over all levels.

    For each level L the observed left-hand side is divided by the data
    bound evaluated with the functional over k < L:

    * C_theta:  (||theta^L||^2 + tau ||grad theta^L||^2) / (tau L1L)
    * C_strain: (tau^2/2 ||E(delta u)||^2 + ||E(u^L)||^2) /
      (rho^2 tau^2 / alpha L1L + tau^2 / (2 alpha) sum ||f||^2)
    * C_energy: ||E(u^L)||_A^2 / (rho^2 tau^2 / kappa L1L_hat + tau^2 / kappa sum ||f||^2)

    The monitor reads the per-step reports, so the snapshot stride does
    not affect it.
    """
    reports = trajectory.reports
    tau = trajectory.grid.tau
    if series is None:
        series = DataSeries.from_reports(reports, tau, trajectory.initial.mesh.area)
    Ls = np.array([r.k for r in reports])
    qs = [compute_L1L(series, p, int(L), c_ell) for L in Ls]
    L1 = np.array([q.L1L for q in qs])
    L1h = np.array([q.L1L_hat for q in qs])
    fsq = np.array([q.f_sq_sum for q in qs])
    a = qs[0].alpha_kappa if qs else p.kappa * p.moduli.ellipticity_constant
    th = np.array([r.theta_l2sq + tau * r.theta_grad_sq for r in reports])
    st = np.array([tau**2 / 2 * r.strain_rate_sq + r.strain_sq for r in reports])
    en = np.array([r.strain_A_sq for r in reports])
    c_th = _ratio(th, tau * L1)
    c_st = _ratio(st, p.rho**2 * tau**2 / a * L1 + tau**2 / (2 * a) * fsq)
    c_en = _ratio(en, p.rho**2 * tau**2 / p.kappa * L1h + tau**2 / p.kappa * fsq)

    def mx(v):
        return float(v.max()) if len(v) else 0.0

    return StabilityReport(mx(c_th), mx(c_st), mx(c_en),
                           {"L": Ls, "C_theta": c_th, "C_strain": c_st, "C_energy": c_en})
