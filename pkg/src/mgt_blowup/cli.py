"""Command-line entry point: ``mgt-blowup <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as be
from .config import ConfigError, ProblemParams, classify_regime, load_config
from .experiments import (
    FitRefusal,
    SweepPlan,
    collate,
    compare_bounds,
    fit_critical,
    fit_subcritical,
    read_records_csv,
    run_sweep,
    theory_bundle,
    write_records_csv,
)
from .functionals import read_trace_csv, run_with_trace, write_trace_csv
from .mgt_system import RadialMesh, evolve, homogeneous_state, make_initial_data, write_snapshot
from .special_functions import estimate_C1, phi


def _g12(x: float) -> str:
    return f"{x:.12g}"


def cmd_phi(args) -> int:
    print(_g12(phi(args.n, args.r)))
    return 0


def cmd_c1(args) -> int:
    print(_g12(estimate_C1(args.n, args.R, args.horizon)))
    return 0


class _SnapshotWriter:
    def __init__(self, out_dir: Path, every: int, figures: bool):
        self.out_dir = out_dir
        self.every = every
        self.figures = figures
        self.count = 0
        self.paths: list[Path] = []

    def __call__(self, state, mesh):
        if self.count % self.every == 0:
            path = self.out_dir / f"snapshot_{len(self.paths):05d}.csv"
            write_snapshot(path, state, mesh)
            self.paths.append(path)
        self.count += 1


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    params, shape, solver = config.problem, config.data, config.solver
    probes = []
    writer = None
    if args.dump_every:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = _SnapshotWriter(out_dir, args.dump_every, not args.no_figures)
        probes.append(writer)
    eps = params.epsilon
    if args.homogeneous:
        mesh = RadialMesh(params.n, 3, solver.dr)
        initial = homogeneous_state(eps * shape.amplitude_u1, eps * shape.amplitude_u2,
                                    mesh.num_cells + 1, eps * shape.amplitude_u0)
    else:
        mesh = RadialMesh.from_extent(params.n, solver.r_max, solver.num_cells)
        initial = make_initial_data(params, shape, mesh)
    record = evolve(initial, params, solver, probes, mesh=mesh,
                    nonlinear=not args.linear, homogeneous=args.homogeneous)
    print(f"status={record.status} t_detect={record.t_detect} t_end={record.t_end:.12g} "
          f"steps={record.steps} sup_v={record.sup_norm_history[-1][1]:.6g}")
    if writer is not None:
        if writer.figures and writer.paths:
            from .mgt_system import read_snapshot
            from .plotting import figure_path, plot_snapshot

            last = writer.paths[-1]
            t, data = read_snapshot(last)
            plot_snapshot(data[:, 0], data[:, 1], data[:, 2], t, figure_path(last))
        print(f"wrote {len(writer.paths)} snapshot(s) to {writer.out_dir}")
    return 0


def cmd_functionals(args) -> int:
    config = load_config(args.config)
    record, trace = run_with_trace(config.problem, config.data, config.solver)
    write_trace_csv(args.out, trace)
    if not args.no_figures and len(trace.times) >= 3:
        from .plotting import figure_path, plot_trace

        plot_trace(read_trace_csv(args.out), figure_path(args.out))
    res = np.asarray(trace.identity_residual)
    window = res
    if record.t_detect is not None:
        # near blow-up the grid no longer resolves the solution
        window = res[np.asarray(trace.times) <= 0.95 * record.t_detect]
    print(f"status={record.status} t_detect={record.t_detect} points={len(trace.times)} "
          f"max_residual={res.max():.3e} max_residual_pre_blowup={window.max():.3e}")
    return 0


def cmd_bounds(args) -> int:
    config = load_config(args.config)
    bundle = theory_bundle(config, J_max=args.jmax)
    report = be.bundle_report(bundle)
    report.update(n=config.problem.n, p=config.problem.p, beta=config.problem.beta,
                  R=config.problem.R, epsilon=config.problem.epsilon)
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"regime={report['regime']} eps0={report['eps0']} "
          f"lifespan_bound={report['lifespan_bound']} -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    plan = SweepPlan.from_config(config)
    bundle = theory_bundle(config)
    if bundle.regime == be.SUBCRITICAL:
        plan.check_eps0(bundle.eps0)
    entries = run_sweep(plan, config, workers=args.workers, bound=bundle)
    rows = collate(entries, plan) if plan.epsilons else []
    write_records_csv(args.out, rows)
    for e in entries:
        if getattr(e.record, "error", None):
            print(f"run failed: eps={e.record.epsilon} cells={e.record.resolution}: "
                  f"{e.record.error}", file=sys.stderr)
    if not args.no_figures and rows:
        from .plotting import figure_path, plot_lifespans

        fit = None
        try:
            fit = _fit(rows, config.problem.n, config.problem.p, classify_regime(config.problem),
                       config)
        except FitRefusal:
            pass
        plot_lifespans(rows, figure_path(args.out), fit)
    print(f"wrote {len(rows)} record(s) to {args.out}")
    return 0


def _fit(rows, n, p, regime, config=None):
    if regime == be.SUBCRITICAL:
        return fit_subcritical(rows, n, p)
    # slope of the upper bound log T <= log L + (Etilde eps)^(1-p); needs the data shape
    slope = math.nan
    if config is not None:
        slope = theory_bundle(config).Etilde ** (1.0 - p)
    return fit_critical(rows, n, p, regime=regime, theory_slope=slope)


def cmd_fit(args) -> int:
    rows = read_records_csv(args.records)
    config = None
    if args.config:
        config = load_config(args.config)
        params = config.problem
    else:
        params = ProblemParams(n=args.n, p=args.p)
    actual = classify_regime(params)
    if actual != args.regime:
        print(f"refused: regime tag {args.regime!r} does not match (n={params.n}, p={params.p}) "
              f"which is {actual}", file=sys.stderr)
        return 2
    try:
        fit = _fit(rows, params.n, params.p, args.regime, config)
    except FitRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                      for k, v in fit.__dict__.items()}, indent=2))
    return 0


def cmd_compare(args) -> int:
    rows = read_records_csv(args.records)
    with open(args.bundle) as fh:
        report = json.load(fh)
    result = compare_bounds(rows, report)
    for line in result.lines():
        print(line)
    return 0 if result.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mgt-blowup",
                                 description="Semilinear MGT blow-up experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phi", help="evaluate the radial eigenfunction")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--r", type=float, required=True)
    s.set_defaults(func=cmd_phi)

    s = sub.add_parser("c1", help="estimate the ball-integral constant C1")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--R", type=float, required=True)
    s.add_argument("--horizon", type=float, default=200.0)
    s.set_defaults(func=cmd_c1)

    s = sub.add_parser("simulate", help="run one evolution")
    s.add_argument("--config", required=True)
    s.add_argument("--linear", action="store_true", help="switch the nonlinearity off")
    s.add_argument("--homogeneous", action="store_true",
                   help="spatially constant reduction (no Laplacian)")
    s.add_argument("--dump-every", type=int, default=0, metavar="K",
                   help="write a state snapshot every K accepted steps")
    s.add_argument("--out-dir", default="snapshots")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("functionals", help="record the functional trace of one run")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_functionals)

    s = sub.add_parser("bounds", help="evaluate the bound-engine constant chain")
    s.add_argument("--config", required=True)
    s.add_argument("--jmax", type=int, default=40)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("sweep", help="run an amplitude sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit", help="fit a lifespan scaling law to sweep records")
    s.add_argument("--records", required=True)
    s.add_argument("--regime", required=True, choices=[be.SUBCRITICAL, be.CRITICAL])
    s.add_argument("--config")
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--p", type=float, default=2.0)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("compare", help="check sweep records against the lifespan bound")
    s.add_argument("--records", required=True)
    s.add_argument("--bundle", required=True)
    s.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, be.RegimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
