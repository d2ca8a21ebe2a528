"""
Self-contained property suite run by ``tedamage verify``.

Every check draws random samples from a seeded generator and returns a
:class:`CheckResult`. ``lipschitz_factor`` scales the Lipschitz constant
under test; values below 1 make the bound false and serve as a negative
control for the suite itself.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import assembly, space, stepper, tensor
from .assembly import ConductivityModel, ModelParams
from .mesh import build_unit_square
from .nonlinear import newton_solve

N_SAMPLES = 1000


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def _rand_sym(rng, d):
    a = rng.normal(size=(d, d))
    return tensor.SymTensor2.from_matrix(a + a.T)


def _rand_moduli(rng, d):
    return tensor.ElasticModuli(rng.uniform(0.1, 10), rng.uniform(0.1, 10), d)


def check_lipschitz(rng, factor=1.0):
    worst = 0.0
    for _ in range(N_SAMPLES):
        d = int(rng.choice([2, 3]))
        m = _rand_moduli(rng, d)
        t, s = _rand_sym(rng, d), _rand_sym(rng, d)
        lhs = (tensor.apply_A(m, t) - tensor.apply_A(m, s)).norm()
        rhs = factor * m.lipschitz_constant * (t - s).norm()
        worst = max(worst, lhs / rhs)
    return worst <= 1.0, f"max ratio {worst:.4f}"


def check_coercivity(rng):
    worst = np.inf
    for _ in range(N_SAMPLES):
        d = int(rng.choice([2, 3]))
        m = _rand_moduli(rng, d)
        t = _rand_sym(rng, d)
        worst = min(worst, tensor.apply_A(m, t).inner(t) - m.ellipticity_constant * t.inner(t))
    return worst >= -1e-12, f"min margin {worst:.3e}"


def check_sqrt(rng):
    worst = 0.0
    for _ in range(N_SAMPLES):
        d = int(rng.choice([2, 3]))
        m = _rand_moduli(rng, d)
        s = _rand_sym(rng, d)
        a = tensor.apply_A(m, s)
        err = (tensor.apply_A_sqrt(m, tensor.apply_A_sqrt(m, s)) - a).norm() / a.norm()
        worst = max(worst, err)
    return worst <= 1e-12, f"max rel error {worst:.2e}"


def check_dev(rng):
    ok = True
    for _ in range(N_SAMPLES):
        d = int(rng.choice([2, 3]))
        t, s = _rand_sym(rng, d), _rand_sym(rng, d)
        dt, ds = tensor.dev(t), tensor.dev(s)
        scale = 1 + t.inner(t) + s.inner(s)
        ok &= dt.norm() <= t.norm() * (1 + 1e-14)
        ok &= abs(dt.inner(s) - t.inner(ds)) <= 1e-12 * scale
        ok &= abs(dt.inner(dt) - (t.inner(t) - t.trace**2 / d)) <= 1e-12 * scale
        ok &= abs(dt.trace) <= 1e-12 * scale
    return bool(ok), ""


def check_positive_part(rng):
    c, d = rng.normal(size=(2, N_SAMPLES)) * 10
    pc = np.array([tensor.positive_part(v) for v in c])
    pd = np.array([tensor.positive_part(v) for v in d])
    ok1 = np.all((pc - pd) * (c - d) >= (pc - pd) ** 2 - 1e-12)
    ok2 = np.all(np.abs(pc - pd) <= np.abs(c - d) + 1e-12)
    return bool(ok1 and ok2), ""


def check_linearity(rng):
    worst = 0.0
    for _ in range(N_SAMPLES):
        m = _rand_moduli(rng, 2)
        t, s = _rand_sym(rng, 2), _rand_sym(rng, 2)
        a, b = rng.normal(size=2)
        lhs = tensor.apply_A(m, t * a + s * b)
        rhs = tensor.apply_A(m, t) * a + tensor.apply_A(m, s) * b
        worst = max(worst, (lhs - rhs).norm() / (1 + rhs.norm()))
    return worst <= 1e-13, f"max deviation {worst:.2e}"


def check_stencils(rng):
    """Exactness up to rounding: the bound is a few ulps of the samples over tau^2 (tau)."""
    eps = np.finfo(float).eps
    ok = True
    for _ in range(N_SAMPLES):
        tau = rng.uniform(1e-3, 1.0)
        t0 = rng.uniform(-2, 2)
        a, b, c = rng.normal(size=3)
        ts = np.array([t0 - tau, t0, t0 + tau])
        q = a * ts**2 + b * ts + c
        ddt = stepper.stencil_ddt2(q[0], q[1], q[2], tau)
        mag = (abs(a) * ts**2 + abs(b) * np.abs(ts) + abs(c)).max()
        ok &= abs(ddt - 2 * a) <= 16 * eps * mag / tau**2
        lin = b * ts + c
        cen = stepper.stencil_centered(lin[0], lin[2], tau)
        ok &= abs(cen - b) <= 16 * eps * (abs(b) * np.abs(ts) + abs(c)).max() / tau
    return bool(ok), ""


def _small_problem(rng, kind="power-law"):
    mesh = build_unit_square(2, "triangle")
    cond = ConductivityModel(kind, 1.0, 0.5, 0.7, 2.0, 1.5)
    p = ModelParams(tensor.ElasticModuli(2.0, 3.0), 0.3, 0.1, 0.5, 2.0, 50.0, cond)
    return mesh, p


def check_penalty_monotone(rng):
    mesh, p = _small_problem(rng)
    sdm = space.scalar_space(mesh)
    geom = space.geometry(mesh)
    phik = space.Field(sdm, rng.normal(size=sdm.n_dofs))
    worst = np.inf
    for _ in range(100):
        a = space.Field(sdm, rng.normal(size=sdm.n_dofs))
        b = space.Field(sdm, rng.normal(size=sdm.n_dofs))
        pa = np.maximum(space.values_at_qp(a - phik, geom), 0)
        pb = np.maximum(space.values_at_qp(b - phik, geom), 0)
        worst = min(worst, space.integrate((pa - pb) * space.values_at_qp(a - b, geom), geom))
    return worst >= -1e-12, f"min pairing {worst:.3e}"


def check_mass_closed_form(rng):
    mesh = build_unit_square(1, "triangle")
    M = assembly.mass_matrix(space.scalar_space(mesh)).toarray()
    ok = True
    for cell in mesh.cells:
        area = 0.5
        ref = area / 12 * (np.ones((3, 3)) + np.eye(3))
        ok &= np.all(M[np.ix_(cell, cell)] >= ref - 1e-15)
    return bool(ok and abs(M.sum() - 1.0) < 1e-14), ""


def _fd_check(fun, x, h=1e-6):
    R, J = fun(x)
    J = J.toarray()
    fd = np.zeros_like(J)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        fd[:, j] = (fun(x + e)[0] - fun(x - e)[0]) / (2 * h)
    return np.abs(fd - J).max() / max(np.abs(J).max(), 1e-300)


def check_jacobians(rng):
    mesh, p = _small_problem(rng)
    sdm, vdm = space.scalar_space(mesh), space.vector_space(mesh)
    u = space.Field(vdm, 0.1 * rng.normal(size=vdm.n_dofs))
    u2 = space.Field(vdm, 0.1 * rng.normal(size=vdm.n_dofs))
    phik = space.Field(sdm, rng.normal(size=sdm.n_dofs))
    thk = space.Field(sdm, rng.normal(size=sdm.n_dofs))
    gam = space.Field(sdm, rng.normal(size=sdm.n_dofs))
    x = phik.coeffs + rng.uniform(0.2, 0.5, size=sdm.n_dofs) * rng.choice([-1, 1], size=sdm.n_dofs)
    e1 = _fd_check(lambda c: assembly.assemble_damage(phik.with_coeffs(c), phik, u, p), x)
    e2 = _fd_check(lambda c: assembly.assemble_heat(thk.with_coeffs(c), thk, u, u2, gam, None, p, 0.1),
                   thk.coeffs + 0.5)
    worst = max(e1, e2)
    return worst <= 1e-6, f"max rel FD deviation {worst:.2e}"


def check_newton(rng):
    x, rep = newton_solve(lambda x: (x**2 - 4, np.diag(2 * x)), np.array([3.0]))
    ok = rep.converged and abs(x[0] - 2) < 1e-10
    for c, want in ((0.5, 0.5), (12.0, 2.0)):
        x, rep = newton_solve(
            lambda x: (x + 10 * np.maximum(x - 1, 0) - c, np.diag(1 + 10 * (x > 1))), np.array([0.0]))
        ok &= rep.converged and abs(x[0] - want) < 1e-10
    return bool(ok), ""


CHECKS = [
    ("tensor: Lipschitz bound 2*lam*d + 2*mu", "lipschitz"),
    ("tensor: coercivity with 2*mu", check_coercivity),
    ("tensor: A^(1/2) composition", check_sqrt),
    ("tensor: dev identities", check_dev),
    ("tensor: positive-part monotonicity", check_positive_part),
    ("tensor: linearity of A", check_linearity),
    ("stepper: stencil exactness", check_stencils),
    ("assembly: penalty monotonicity", check_penalty_monotone),
    ("assembly: P1 mass matrix", check_mass_closed_form),
    ("assembly: Jacobians vs finite differences", check_jacobians),
    ("nonlinear: smooth and semismooth Newton", check_newton),
]


def run_all(seed: int = 0, lipschitz_factor: float = 1.0) -> list:
    results = []
    for name, fn in CHECKS:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        try:
            if fn == "lipschitz":
                ok, detail = check_lipschitz(rng, lipschitz_factor)
            else:
                ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failed property
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
