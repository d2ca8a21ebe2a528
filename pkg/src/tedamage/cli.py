"""
Command-line driver.

    tedamage run (--config FILE | --preset NAME) [--set section.key=value ...] [--out DIR]
    tedamage convergence (--config FILE | --preset NAME) --levels K [--out DIR]
    tedamage verify
    tedamage preset NAME            print a preset as an INI file

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 step failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from . import analysis, config, io, mms, space, stepper, verification
from .errors import InvalidArgument, StepFailure
from .mesh import refine

log = logging.getLogger("tedamage")

THREADS_ENV = "TEDAMAGE_NUM_THREADS"

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_STEP = 0, 1, 2, 3


def _load(args) -> config.RunConfig:
    if args.config and args.preset:
        raise config.ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = config.load(args.config)
    elif args.preset:
        cfg = config.preset(args.preset)
    else:
        raise config.ConfigError("one of --config or --preset is required")
    cfg = config.apply_overrides(cfg, args.set)
    if getattr(args, "out", None):
        cfg.output.directory = args.out
    return cfg


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def exact_errors(cfg: config.RunConfig, state) -> dict:
    """Errors of the final state against the analytic solution of an MMS preset."""
    if cfg.analysis.exact == "mms-elastic":
        u = state.u_curr
        return {"u_L2": space.error_norm(u, mms.elastic_exact),
                "u_H1semi": space.error_norm(u, mms.elastic_exact, space.H1SEMI, mms.elastic_exact_grad)}
    if cfg.analysis.exact == "mms-heat":
        th = state.theta_curr
        return {"theta_L2": space.error_norm(th, mms.heat_exact),
                "theta_H1semi": space.error_norm(th, mms.heat_exact, space.H1SEMI, mms.heat_exact_grad)}
    return {}


def execute(cfg: config.RunConfig, write: bool = True):
    """Run one configuration; write all outputs when ``write`` is set. Returns the trajectory."""
    prob = config.build_problem(cfg)
    out = Path(cfg.output.directory)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(cfg.to_ini())

    def snapshot(state, rep=None):
        if write and cfg.output.vtk and (state.k % cfg.output.stride == 0 or state.k == prob.grid.M):
            io.write_state_vtk(out / f"state_{state.k:05d}.vtk", state)

    initial = stepper.initialize(prob.mesh, prob.data.u0, prob.data.v0, prob.data.phi0, prob.data.theta0,
                                 prob.grid)
    snapshot(initial)
    try:
        traj = stepper.run(prob.mesh, prob.params, prob.bcs, prob.data, prob.grid, prob.settings,
                           cfg.output.stride, callback=snapshot)
    except StepFailure as exc:
        if write and exc.trajectory is not None:
            io.write_step_reports(out / "steps.csv", exc.trajectory.reports)
        raise
    if not write:
        return traj

    io.write_step_reports(out / "steps.csv", traj.reports)
    io.write_nodal_csv(out / "final_nodal.csv", traj.final)
    c_ell = cfg.analysis.c_ell_value(prob.params)
    series = analysis.DataSeries.from_reports(traj.reports, prob.grid.tau, prob.mesh.area)
    q = analysis.compute_L1L(series, prob.params, prob.grid.M, c_ell)
    io.write_keyvalue(out / "apriori.txt", {
        "L": q.L, "gamma_kappa": q.gamma_kappa, "alpha_kappa": q.alpha_kappa,
        "L1L": q.L1L, "L1L_hat": q.L1L_hat, **prob.params.advisory(prob.h),
    })
    rep = analysis.check_theorem_assumptions(prob.params, series, c_ell)
    (out / "assumptions.txt").write_text(rep.as_text())
    (out / "assumptions.kv").write_text(rep.as_keyvalue())
    stab = analysis.stability_monitor(traj, prob.params, series, c_ell)
    io.write_keyvalue(out / "stability.txt", stab.as_dict())
    errs = exact_errors(cfg, traj.final)
    if errs:
        io.write_keyvalue(out / "mms_errors.txt", errs)
    return traj


def cmd_run(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    try:
        traj = execute(cfg)
    except StepFailure as exc:
        print(f"step failure: {exc}", file=sys.stderr)
        return EXIT_STEP
    last = traj.reports[-1]
    print(f"completed {len(traj.reports)} steps in {time.perf_counter() - t0:.1f} s; "
          f"phi in [{last.phi_min:.3e}, {last.phi_max:.3e}], max theta {last.theta_max:.3e}; "
          f"outputs in {cfg.output.directory}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------


def default_runner(cfg: config.RunConfig, mesh, h: float):
    prob = config.build_problem(cfg, mesh=mesh, h=h)
    return stepper.run(mesh, prob.params, prob.bcs, prob.data, prob.grid, prob.settings, stride=prob.grid.M)


def run_convergence(cfg: config.RunConfig, levels: int, runner=None, on_level=None) -> analysis.ErrorTable:
    """Run on the configured mesh and ``levels - 1`` uniform refinements, plus one
    further refinement as reference, and tabulate errors and rates.

    ``runner(cfg, mesh, h)`` returns a trajectory or state; it is injectable
    so the harness can be tested with synthetic solutions. ell follows
    the configured rule (e.g. 2h) at every level.
    """
    if levels < 3:
        raise InvalidArgument(f"a convergence study needs at least 3 levels, got {levels}")
    runner = runner or default_runner
    base = cfg.mesh.build()
    h0 = cfg.mesh.h
    results, hs = [], []
    for i in range(levels + 1):
        mesh = refine(base, i)
        h = h0 / 2**i
        results.append(runner(cfg, mesh, h))
        hs.append(h)
        if on_level is not None:
            on_level(i, h, results[-1])
    moduli = cfg.material.params(h0).moduli
    return analysis.error_table(results[:-1], results[-1], hs[:-1], cfg.time.tau, moduli=moduli)


def cmd_convergence(args) -> int:
    cfg = _load(args)
    try:
        t0 = time.perf_counter()
        table = run_convergence(cfg, args.levels, on_level=lambda i, h, _: print(
            f"level {i}: h = {h:.5g} done ({time.perf_counter() - t0:.1f} s)"))
    except StepFailure as exc:
        print(f"step failure: {exc}", file=sys.stderr)
        return EXIT_STEP
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    text = table.to_csv(out / "convergence.csv")
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    results = verification.run_all(seed=args.seed, lipschitz_factor=args.lipschitz_factor)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        extra = f" ({r.detail})" if r.detail else ""
        print(f"{status}  {r.name}{extra}")
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} properties hold ({time.perf_counter() - t0:.1f} s)")
    return EXIT_OK if n_fail == 0 else EXIT_VERIFY


def cmd_preset(args) -> int:
    print(config.preset(args.name).to_ini(), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tedamage", description="Thermo-elastic-damage solver")
    ap.add_argument("--deterministic", action="store_true",
                    help="force single-threaded, bitwise-reproducible execution")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def problem_args(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--preset", help=f"built-in configuration: {', '.join(sorted(config.PRESETS))}")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a configuration value (repeatable)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="run one configuration")
    problem_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("convergence", help="mesh-refinement study against a finer reference")
    problem_args(p)
    p.add_argument("--levels", type=int, required=True, help="number of meshes in the table (>= 3)")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lipschitz-factor", type=float, default=1.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("preset", help="print a preset configuration")
    p.add_argument("name", choices=sorted(config.PRESETS))
    p.set_defaults(func=cmd_preset)
    return ap


def _limit_threads(n: str) -> None:
    # effective for BLAS pools created after this point
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.deterministic:
        _limit_threads("1")
    elif os.environ.get(THREADS_ENV):
        _limit_threads(os.environ[THREADS_ENV])
    try:
        return args.func(args)
    except config.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgument as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
