import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tedamage import analysis, config, space, stepper
from tedamage.analysis import DataSeries, ErrorRow, ErrorTable
from tedamage.assembly import BCSpec, BoundaryCondition, ConductivityModel, ModelParams
from tedamage.errors import InvalidArgument
from tedamage.mesh import build_notched_square, build_unit_square, refine
from tedamage.space import H1SEMI, L2
from tedamage.stepper import ProblemData, TimeGrid
from tedamage.tensor import ElasticModuli

# -- rates ---------------------------------------------------------------------------


def test_rate_printed_phi_pair():
    # [PAPER] printed phi errors of consecutive rows and their printed rate
    assert abs(analysis.rate(0.2081, 0.122) - 0.778) <= 0.01


def test_rate_printed_u_pair():
    # [PAPER] printed u errors of consecutive rows and their printed rate
    assert abs(analysis.rate(8.10e-4, 4.25e-4) - 0.930) <= 5e-4


@given(st.floats(1e-12, 1e6))
def test_rate_halving_is_one(c):
    assert analysis.rate(c, c / 2) == pytest.approx(1.0, abs=1e-12)


def test_rate_nonuniform_ratio():
    assert analysis.rate(9.0, 1.0, 3.0, 1.0) == pytest.approx(2.0)


def test_rate_undefined():
    assert math.isnan(analysis.rate(0.0, 1.0))
    assert math.isnan(analysis.rate(1.0, 0.0))
    assert math.isnan(analysis.rate(1e-15, 1e-16, floor=1e-12))
    assert math.isnan(analysis.rate(float("inf"), 1.0))


def _table(errs, hs=(0.5, 0.25, 0.125)):
    rows = []
    for h, e in zip(hs, errs):
        rows.append(ErrorRow(h=h, tau=1e-3, errors={("u", L2): e}, scales={"u": 1.0}))
    return ErrorTable(rows, fields=("u",), norms=(L2,))


def test_convergence_rates_fill():
    t = analysis.convergence_rates(_table([0.4, 0.1, 0.025]))
    r = t.rate_column("u", L2)
    assert math.isnan(r[0]) and np.allclose(r[1:], 2.0)
    assert t.final_rate("u", L2) == pytest.approx(2.0)
    assert t.fitted_rate("u", L2) == pytest.approx(2.0)


def test_convergence_rates_noise_floor():
    t = analysis.convergence_rates(_table([1e-3, 1e-14, 1e-15]))
    assert np.all(np.isnan(t.rate_column("u", L2)))
    assert math.isnan(t.fitted_rate("u", L2))


def test_convergence_rates_validation():
    with pytest.raises(InvalidArgument):
        analysis.convergence_rates(_table([1.0]))
    with pytest.raises(InvalidArgument):
        analysis.convergence_rates(_table([1.0, 0.5], hs=(0.25, 0.5)))


def test_to_csv_layout(tmp_path):
    t = analysis.convergence_rates(_table([0.4, 0.1, 0.025]))
    text = t.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == text
    lines = text.splitlines()
    assert lines[0] == "h,tau,u_L2_error,u_L2_rate"
    assert lines[1] == "0.5,0.001,4.000000e-01,"
    assert lines[2] == "0.25,0.001,1.000000e-01,2.0000"
    assert len(lines) == 4


# -- errors against a reference -------------------------------------------------------


def _fields(n_coarse=4, levels=1, f=lambda x: np.sin(3 * x[:, 0]) * x[:, 1], kind="quadrilateral"):
    coarse = build_unit_square(n_coarse, kind)
    fine = refine(coarse, levels)
    return space.interpolate_nodal(coarse, f), space.interpolate_nodal(fine, f)


def test_error_of_restricted_interpolant_is_zero_in_l2():
    c, r = _fields()
    assert analysis.error_vs_reference(c, r, "phi", L2) == pytest.approx(0.0, abs=1e-15)
    assert analysis.error_vs_reference(c, c, "phi", H1SEMI) == 0.0


def test_constant_shift():
    c, r = _fields()
    shift = 0.3
    c2 = c.with_coeffs(c.coeffs + shift)
    # [DERIVED] ||c||_{L2(unit square)} = c
    assert analysis.error_vs_reference(c2, r, "phi", L2) == pytest.approx(shift, rel=1e-12)


def test_constant_shift_on_notched_area():
    m = build_notched_square(4, 0.5, 1e-3)
    f = space.interpolate_nodal(m, lambda x: np.zeros(len(x)))
    g = f.with_coeffs(f.coeffs + 2.0)
    assert analysis.error_vs_reference(g, f, "phi", L2) == pytest.approx(2.0 * math.sqrt(m.area), rel=1e-12)


@settings(max_examples=25)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(-2, 2))
def test_error_is_a_metric(coefs, alpha):
    a, b, c = coefs
    base = build_unit_square(2)
    fine = refine(base, 1)
    x = space.interpolate_nodal(base, lambda p: a * p[:, 0] ** 2 + b * p[:, 1])
    y = space.interpolate_nodal(fine, lambda p: c * p[:, 0] * p[:, 1])
    z = space.interpolate_nodal(fine, lambda p: np.cos(p[:, 0] + c))
    for norm in (L2, H1SEMI):
        d_xy = analysis.error_vs_reference(x, y, "phi", norm)
        d_xz = analysis.error_vs_reference(x, z, "phi", norm)
        yz = analysis.error_vs_reference(analysis.restrict(y, base), z, "phi", norm)
        assert d_xy >= 0
        assert d_xz <= d_xy + yz + 1e-12
        # homogeneity
        xs = x * alpha
        ys = y * alpha
        assert analysis.error_vs_reference(xs, ys, "phi", norm) == pytest.approx(abs(alpha) * d_xy, rel=1e-10,
                                                                               abs=1e-14)


def test_non_nested_meshes_rejected():
    c = space.interpolate_nodal(build_unit_square(3), lambda x: x[:, 0])
    r = space.interpolate_nodal(build_unit_square(4), lambda x: x[:, 0])
    with pytest.raises(InvalidArgument):
        analysis.error_vs_reference(c, r, "phi", L2)


def test_unknown_field_and_kind_mismatch():
    m = build_unit_square(2)
    traj_like = stepper.initialize(m, lambda x: x, lambda x: 0 * x, 1.0, 0.0, TimeGrid(1, 1))
    with pytest.raises(InvalidArgument):
        analysis.error_vs_reference(traj_like, traj_like, "pressure")
    with pytest.raises(InvalidArgument):
        analysis.error_vs_reference(traj_like.u_curr, traj_like.phi_curr)


@pytest.mark.parametrize("kind", ["triangle", "quadrilateral"])
def test_recovered_gradient_error_converges(kind):
    # nodal values of interpolants coincide, so only the recovered gradients differ
    f = lambda x: np.sin(np.pi * x[:, 0]) * np.cos(2 * x[:, 1])
    ref = space.interpolate_nodal(build_unit_square(64, kind), f)
    errs = [analysis.error_vs_reference(space.interpolate_nodal(build_unit_square(n, kind), f), ref, "phi", H1SEMI)
            for n in (4, 8, 16)]
    assert analysis.error_vs_reference(space.interpolate_nodal(build_unit_square(4, kind), f), ref, "phi", L2) \
        == pytest.approx(0.0, abs=1e-14)
    rates = [analysis.rate(a, b) for a, b in zip(errs, errs[1:])]
    assert all(r >= 0.9 for r in rates), rates


def test_error_table_noise_is_nan():
    mesh = build_unit_square(2)
    init = stepper.initialize(mesh, lambda x: x, lambda x: 0 * x, lambda x: x[:, 0], 0.0, TimeGrid(1, 1))
    ref_mesh = refine(mesh, 3)
    ref = stepper.initialize(ref_mesh, lambda x: x, lambda x: 0 * x, lambda x: x[:, 0], 0.0, TimeGrid(1, 1))
    levels = [stepper.initialize(refine(mesh, i), lambda x: x, lambda x: 0 * x, lambda x: x[:, 0], 0.0,
                                 TimeGrid(1, 1)) for i in range(3)]
    t = analysis.error_table(levels, ref, [0.5, 0.25, 0.125], 1.0, fields=("u", "theta"), norms=(L2,))
    # linear fields are interpolated exactly: rates undefined, theta identically zero
    assert np.all(np.isnan(t.rate_column("u", L2)))
    assert np.all(np.isnan(t.rate_column("theta", L2)))
    assert init.u_curr.mesh is mesh


# -- data functionals -------------------------------------------------------------


def _params(kappa=0.1, rho=0.5, beta=1.5):
    return ModelParams(ElasticModuli(2.0, 3.0), rho, kappa, 0.1, 1.0, 10.0, ConductivityModel("constant", 1.0, beta=beta))


def oracle_L1L(fn, gn, bn, tau, area, rho, kappa, beta, L):
    # [DERIVED] term-by-term transcription of the data functional
    e = (beta + 2) ** 2 / (beta + 1) ** 2
    gk = rho**4 / kappa
    s_b = sum(bn[k] ** 2 for k in range(L))
    s_f = sum(fn[k] ** e for k in range(L))
    s_g = tau * sum(gn[k] ** 2 for k in range(L))
    full = s_b + gk * s_f + s_g + (gk + 1) * area**2
    hat = s_b + s_f / kappa + s_g + area**2
    return full, hat


def test_L1L_zero_data():
    s = DataSeries(np.zeros(5), np.zeros(5), np.zeros(5), 0.1, 0.75)
    p = _params()
    q = analysis.compute_L1L(s, p, 5)
    assert q.L1L == pytest.approx((p.gamma_kappa + 1) * 0.75**2)
    assert q.L1L_hat == pytest.approx(0.75**2)
    assert q.gamma_kappa == pytest.approx(0.5**4 / 0.1)


def test_halving_kappa_doubles_gamma_kappa():
    s = DataSeries(np.zeros(2), np.zeros(2), np.zeros(2), 0.1, 1.0)
    a = analysis.compute_L1L(s, _params(kappa=0.2), 2)
    b = analysis.compute_L1L(s, _params(kappa=0.1), 2)
    assert b.gamma_kappa == pytest.approx(2 * a.gamma_kappa)
    assert b.alpha_kappa == pytest.approx(a.alpha_kappa / 2)


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=8),
       st.floats(1e-4, 1), st.floats(0.05, 2), st.floats(0, 3), st.floats(1e-3, 1), st.floats(1.01, 1.99))
def test_L1L_matches_transcription(data, tau, area, rho, kappa, beta):
    fn, gn, bn = map(np.array, zip(*data))
    s = DataSeries(fn, gn, bn, tau, area)
    p = _params(kappa, rho, beta)
    prev = -np.inf
    for L in range(len(fn) + 1):
        q = analysis.compute_L1L(s, p, L)
        full, hat = oracle_L1L(fn, gn, bn, tau, area, rho, kappa, beta, L)
        assert q.L1L == pytest.approx(full, rel=1e-12)
        assert q.L1L_hat == pytest.approx(hat, rel=1e-12)
        assert q.L1L >= prev
        prev = q.L1L


def test_L1L_range_checked():
    s = DataSeries(np.ones(3), np.ones(3), np.ones(3), 0.1, 1.0)
    with pytest.raises(InvalidArgument):
        analysis.compute_L1L(s, _params(), 4)
    with pytest.raises(InvalidArgument):
        analysis.compute_L1L(s, _params(), -1)
    with pytest.raises(InvalidArgument):
        DataSeries(np.ones(3), np.ones(2), np.ones(3), 0.1, 1.0)


def test_f_exponent():
    assert analysis.f_exponent(0.0) == 4.0
    assert analysis.f_exponent(1.5) == pytest.approx(3.5**2 / 2.5**2)


def test_c_ell_override():
    s = DataSeries(np.ones(2), np.zeros(2), np.zeros(2), 0.1, 1.0)
    p = _params()
    assert analysis.compute_L1L(s, p, 2).alpha_kappa == pytest.approx(p.kappa * 2 * 3.0)
    assert analysis.compute_L1L(s, p, 2, c_ell=1 / 6).alpha_kappa == pytest.approx(p.kappa / 6)


# -- step-size conditions -------------------------------------------------------------


def test_assumptions_hold_for_small_tau():
    s = DataSeries(np.ones(10), np.ones(10), np.ones(10), 1e-5, 1.0)
    rep = analysis.check_theorem_assumptions(_params(), s)
    assert rep.overall and len(rep.bullets) == 4
    assert "overall: pass" in rep.as_text()
    assert rep.as_keyvalue().strip().endswith("overall=True")


def test_assumptions_fail_for_large_tau():
    s = DataSeries(np.ones(10), np.ones(10), np.ones(10), 10.0, 1.0)
    rep = analysis.check_theorem_assumptions(_params(), s)
    assert not rep.overall and "violated" in rep.as_text()


def test_assumption_scaling_in_tau():
    a = DataSeries(np.full(4, 2.0), np.zeros(4), np.full(4, 1.0), 1e-3, 1.0)
    b = DataSeries(np.full(4, 2.0), np.zeros(4), np.full(4, 1.0), 2e-3, 1.0)
    ra = analysis.check_theorem_assumptions(_params(), a).bullets
    rb = analysis.check_theorem_assumptions(_params(), b).bullets
    factors = [y.lhs / x.lhs for x, y in zip(ra, rb)]
    assert factors == pytest.approx([4.0, 2.0, 4.0, 2.0], rel=1e-12)


def test_assumptions_on_notched_preset():
    prob = config.build_problem(config.preset("sens-notch"))
    s = DataSeries.from_problem(prob.mesh, prob.data, prob.bcs, prob.grid)
    assert s.M == prob.grid.M
    # only the notch-front flux is nonzero; |gbar| = 300 over a facet of length 1e-3
    assert s.gammabar[0] == pytest.approx(300 * math.sqrt(1e-3), rel=1e-10)
    rep = analysis.check_theorem_assumptions(prob.params, s)
    assert all(np.isfinite([b.lhs for b in rep.bullets]))


# -- stability monitor --------------------------------------------------------------


def test_monitor_zero_data():
    mesh = build_unit_square(2)
    bcs = BCSpec(displacement=(BoundaryCondition("bottom", "dirichlet", lambda x, t: np.zeros((len(x), 2))),))
    traj = stepper.run(mesh, _params(), bcs, ProblemData(), TimeGrid.from_tau(0.1, 3))
    rep = analysis.stability_monitor(traj, _params())
    assert rep.as_dict() == {"C_theta": 0.0, "C_strain": 0.0, "C_energy": 0.0}
    assert list(rep.per_step["L"]) == [1, 2, 3]


def test_monitor_series_from_reports_matches_problem():
    mesh = build_unit_square(3)
    data = ProblemData(f=lambda x, t: np.column_stack([x[:, 0] + t, 0 * x[:, 0]]),
                       gamma=lambda x, t: np.full(len(x), 2.0 + t))
    bcs = BCSpec(displacement=(BoundaryCondition("bottom", "dirichlet", lambda x, t: np.zeros((len(x), 2))),),
                 temperature=(BoundaryCondition("top", "neumann", lambda x, t: np.full(len(x), 1.0 + t)),))
    grid = TimeGrid.from_tau(0.1, 3)
    traj = stepper.run(mesh, _params(), bcs, data, grid)
    a = DataSeries.from_reports(traj.reports, grid.tau, mesh.area)
    b = DataSeries.from_problem(mesh, data, bcs, grid)
    for x, y in ((a.f, b.f), (a.gamma, b.gamma), (a.gammabar, b.gammabar)):
        assert np.allclose(x, y, rtol=1e-12)
    rep = analysis.stability_monitor(traj, _params())
    assert rep.C_theta > 0 and rep.C_strain > 0 and rep.C_energy > 0
