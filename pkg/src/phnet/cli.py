"""Command line front-end: ``phnet {analyze,transform,simulate,control,verify}``.

Exit codes: 0 success / certified, 1 not certified, 2 input error,
3 internal invariant violation.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import report
from .boundary import check_m_form, check_wb_maccretive
from .config import exact_tol
from .errors import InvariantViolation, NotCertifiedError, PhNetError, SolverError
from .evolve import Trajectory, prepare, simulate, solve_boundary_control, transport_cfl
from .problemfile import ProblemFileError, bundled_problems, load_problem
from .transform import boundary_matrix_c, build_congruence
from .verify import CHECKS, run_checks

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2, 3


_LABELS = {"accretive_maximal": "maximal accretive", "accretive_not_maximal": "accretive, not maximal",
           "not_accretive": "not accretive"}


def _fmt(a):
    a = np.asarray(a)
    if a.size == 1:
        return f"{a.item():.6g}"
    return np.array2string(a, precision=6, suppress_small=True, separator=", ")


def _out_dir(args):
    d = Path(args.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(args):
    if not args.input:
        raise ProblemFileError("--input is required")
    return load_problem(args.input)


def _certificate(spec):
    if spec.W_B is not None:
        plan = build_congruence(spec.net, spec.P1)
        C = boundary_matrix_c(plan, spec.P1, check_tol=exact_tol())
        return check_wb_maccretive(spec.W_B, spec.P1, C)
    return check_m_form(spec.M)


def cmd_analyze(args):
    spec = _load(args)
    cert = _certificate(spec)
    label = _LABELS[cert.verdict]
    if cert.maximal:
        print(f"{label}, M = {_fmt(cert.M)}")
        print(f"L = {_fmt(cert.L)}")
    else:
        print(label)
        if cert.M is not None:
            print(f"M (zero extension, not unique) = {_fmt(cert.M)}")
        if cert.witness is not None:
            print(f"witness: out = {_fmt(cert.witness['out'])}, in = {_fmt(cert.witness['in'])}")
    if args.output_dir:
        name = spec.outputs.get("certificate", f"{spec.name}_certificate.yaml")
        report.write_yaml(_out_dir(args) / name, {"problem": spec.name, **cert.to_dict()})
    return EXIT_OK if cert.maximal else EXIT_NOT_CERTIFIED


def cmd_transform(args):
    spec = _load(args)
    plan = build_congruence(spec.net, spec.P1)
    data = {"problem": spec.name, "plan": plan.to_dict()}
    if spec.net.all_bounded_equal:
        C = boundary_matrix_c(plan, spec.P1, check_tol=exact_tol())
        data["C"] = C.C
        data["C_identity_residual"] = C.residual()
    print(f"reference channels: {', '.join(plan.reference_kinds)}")
    print(f"K = {_fmt(plan.K)}")
    print(f"D1 = {_fmt(np.diag(plan.D1))}, D2 = {_fmt(np.diag(plan.D2))}")
    print(f"reflections = {list(plan.reflections)}, Q order = {list(plan.order)}")
    if "C" in data:
        print(f"C = {_fmt(data['C'])}")
    if args.output_dir:
        name = spec.outputs.get("plan", f"{spec.name}_plan.yaml")
        report.write_yaml(_out_dir(args) / name, data)
    return EXIT_OK


def _problem(spec, args):
    return spec.evo_problem(h=args.h, dt=args.dt)


def cmd_simulate(args):
    spec = _load(args)
    problem = _problem(spec, args)
    stride = spec.outputs.get("stride", 1)
    disc = prepare(problem, rho=args.rho)
    if spec.evolution.get("scheme") == "cfl":
        w0 = spec.initial_function()
        z0 = disc.Vsinv @ (disc.phys_grid.sample(w0).values if w0 else disc.phys_grid.zeros().values)
        steps = int(round(problem.T / disc.ref_grid.channels[0].h))
        zs = transport_cfl(disc.op, z0, steps)
        vals = np.array([disc.Vs @ z for z in zs])
        traj = Trajectory(np.arange(steps + 1) * disc.ref_grid.channels[0].h, vals, disc.phys_grid,
                          np.array([disc.energy(v) for v in vals]))
    else:
        traj = simulate(problem, spec.initial_function(), disc=disc)
    out = _out_dir(args)
    csv_path = report.write_trajectory_csv(out / spec.outputs.get("csv", f"{spec.name}_trajectory.csv"),
                                           traj, seed=args.seed, stride=stride)
    svg = spec.outputs.get("svg", f"{spec.name}_energy.svg")
    report.plot_energy(out / svg, traj, title=f"{spec.name}: energy")
    report.plot_profile(out / svg.replace(".svg", "_profile.svg"), traj, title=f"{spec.name}: final state")
    e0, e1 = traj.energy[0], traj.energy[-1]
    print(f"steps = {traj.times.size - 1}, energy(0) = {e0:.6g}, energy(T) = {e1:.6g}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_control(args):
    spec = _load(args)
    problem = _problem(spec, args)
    disc = prepare(problem, rho=args.rho)
    traj = solve_boundary_control(problem, disc=disc, w0=spec.initial_function())
    out = _out_dir(args)
    stride = spec.outputs.get("stride", 1)
    csv_path = report.write_control_csv(out / spec.outputs.get("csv", f"{spec.name}_control.csv"),
                                        traj, seed=args.seed, stride=stride)
    report.plot_control(out / spec.outputs.get("svg", f"{spec.name}_control.svg"), traj,
                        title=f"{spec.name}: control and observation")
    if traj.observations is not None:
        print(f"y(T) = {_fmt(traj.observations[-1])}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_verify(args):
    names = None
    if args.only is not None:
        names = [n for n in args.only.split(",") if n]
        if not names:
            print("no checks selected")
            return EXIT_OK
    if args.suite:
        paths = bundled_problems()
    elif args.input:
        paths = [Path(args.input)]
    else:
        raise ProblemFileError("give --input or --suite")
    rows, failed = [], 0
    for path in paths:
        spec = load_problem(path)
        results = run_checks(spec, names, refinements=args.refinements, h0=args.h, seed=args.seed,
                             inject_norm=args.inject_norm)
        for r in results:
            status = "PASS" if r.passed else "FAIL"
            failed += not r.passed
            print(f"{status} {spec.name} {r.name} level={r.level} h={r.h:.3g} value={r.value:.6g}"
                  + (f" ({r.detail})" if r.detail else ""))
            rows.append({"problem": spec.name, **r.to_dict()})
    print(f"summary: {len(rows) - failed} passed, {failed} failed")
    if args.output_dir:
        report.write_yaml(_out_dir(args) / "verify_report.yaml",
                          {"seed": args.seed, "passed": failed == 0, "results": rows})
    return EXIT_OK if failed == 0 else EXIT_NOT_CERTIFIED


def build_parser():
    parser = argparse.ArgumentParser(prog="phnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", help="problem file (YAML)")
        p.add_argument("--output-dir", default=None, help="directory for CSV/SVG/YAML output")
        p.add_argument("--h", type=float, default=None, help="reference grid spacing")
        p.add_argument("--dt", type=float, default=None, help="time step")
        p.add_argument("--rho", type=float, default=None, help="exponential weight")
        p.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
        p.add_argument("--refinements", type=int, default=3, help="number of grid levels")
        return p

    common(sub.add_parser("analyze", help="classify the boundary condition")).set_defaults(func=cmd_analyze)
    common(sub.add_parser("transform", help="print the congruence and C")).set_defaults(func=cmd_transform)
    p = common(sub.add_parser("simulate", help="homogeneous boundary conditions"))
    p.set_defaults(func=cmd_simulate, output_dir=".")
    p = common(sub.add_parser("control", help="boundary control with observations"))
    p.set_defaults(func=cmd_control, output_dir=".")
    p = common(sub.add_parser("verify", help="run the invariant battery"))
    p.add_argument("--suite", action="store_true", help="run on all bundled example problems")
    p.add_argument("--only", default=None,
                   help=f"comma-separated subset of: {', '.join(CHECKS)}")
    p.add_argument("--inject-norm", type=float, default=None,
                   help="rescale M to this norm (negative control)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        exact_tol()
        return args.func(args)
    except (ProblemFileError, FileNotFoundError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NotCertifiedError, SolverError) as exc:
        print(f"not certified: {exc}", file=sys.stderr)
        return EXIT_NOT_CERTIFIED
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (PhNetError, ValueError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
