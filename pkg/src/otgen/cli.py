"""Command-line harness.

Subcommands: ot-discrete, geodesic, train, generate, baseline, sample-pfode,
synth, run. Exit codes: 0 success, 2 validation error, 3 training
divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    # accepted before or after the subcommand; SUPPRESS keeps a late
    # subparser default from clobbering a value parsed globally
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the seed from configs/defaults")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="output directory override")
    p = argparse.ArgumentParser(
        prog="otgen", parents=[common],
        description="Transport-based generation of physical data "
                    "distributions across operating conditions.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    d = add_parser("ot-discrete",
                   help="exact assignment between two discrete uniform "
                        "distributions")
    d.add_argument("--src", required=True, help="CSV: position components, mass")
    d.add_argument("--dst", required=True)
    d.add_argument("--time-dependent", action="store_true",
                   help="also print straight-line trajectory knots")

    g = add_parser("geodesic", help="integrate a metric geodesic with RK4")
    g.add_argument("--metric", choices=["euclidean", "lobachevsky"],
                   default="euclidean")
    g.add_argument("--x0", required=True, help="comma-separated start position")
    g.add_argument("--v0", required=True, help="comma-separated start velocity")
    g.add_argument("--t-end", type=float, default=1.0)
    g.add_argument("--steps", type=int, default=1000)
    g.add_argument("--out", default="trajectory.csv")

    t = add_parser("train", help="train a transport model from a run config")
    t.add_argument("--data", required=True)
    t.add_argument("--config", required=True, help="run config JSON")
    t.add_argument("--out", default="model.json")

    ge = add_parser("generate",
                    help="generate mean data at a target condition from a "
                         "trained model")
    ge.add_argument("--model", required=True)
    ge.add_argument("--target", type=float, required=True,
                    help="raw condition value")
    ge.add_argument("--out", default="gen.csv")
    ge.add_argument("--samples", type=int, default=2048)
    ge.add_argument("--plot", default=None, help="optional SVG path")
    ge.add_argument("--reference", default=None,
                    help="optional truth CSV for an NRMSE diagnostic")

    b = add_parser("baseline",
                   help="mode-decomposition + GP regression curve baseline")
    b.add_argument("--data", required=True)
    b.add_argument("--target", type=float, required=True)
    b.add_argument("--out", default="pred.csv")
    b.add_argument("--grid-points", type=int, default=50)

    s = add_parser("sample-pfode",
                   help="reverse probability-flow sampling from a score")
    s.add_argument("--score", required=True,
                   help="'gaussian:<std>' or a network weight JSON")
    s.add_argument("--n", type=int, default=1000, help="chain count")
    s.add_argument("--dim", type=int, default=1)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--sigma-min", type=float, default=0.01)
    s.add_argument("--sigma-max", type=float, default=50.0)
    s.add_argument("--out", default="samples.csv")

    sy = add_parser("synth", help="write a synthetic benchmark dataset")
    sy.add_argument("--kind", choices=["curves", "fields"], required=True)
    sy.add_argument("--taus", default=None,
                    help="comma-separated training conditions in [0,1)")
    sy.add_argument("--params", default=None, help="family params JSON")

    r = add_parser("run", help="full pipeline: ingest, train, generate, score")
    r.add_argument("--config", required=True, help="run config JSON")
    return p


def _read_distribution(path):
    from .discrete import DiscreteDistribution
    rows = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                continue  # header line
    if not rows:
        raise ValueError(f"{path}: no numeric rows")
    arr = np.asarray(rows)
    return DiscreteDistribution(arr[:, :-1], arr[:, -1])


def cmd_ot_discrete(args) -> int:
    from .discrete import solve_monge, solve_monge_time_dependent
    src = _read_distribution(args.src)
    dst = _read_distribution(args.dst)
    tmap, cost = solve_monge(src, dst)
    print("source -> target assignment:")
    for i, j in enumerate(tmap.assignment):
        print(f"  {src.points[i].tolist()} -> {dst.points[j].tolist()}")
    print(f"total cost: {cost:.12g}")
    if args.time_dependent:
        traj = solve_monge_time_dependent(src, dst)
        print("straight-line trajectories (t=0 -> t=1):")
        for i in range(src.size):
            print(f"  {traj.knot_positions[i, 0].tolist()} -> "
                  f"{traj.knot_positions[i, 1].tolist()}")
    return EXIT_OK


def cmd_geodesic(args) -> int:
    from .geodesic import euclidean_metric, integrate_geodesic, lobachevsky_metric
    x0 = np.array([float(v) for v in args.x0.split(",")])
    v0 = np.array([float(v) for v in args.v0.split(",")])
    metric = (lobachevsky_metric() if args.metric == "lobachevsky"
              else euclidean_metric(len(x0)))
    if metric.dim != len(x0) or len(x0) != len(v0):
        raise ValueError("x0/v0 dimension mismatch with metric")
    traj = integrate_geodesic(metric, x0, v0, args.t_end, args.steps)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        n = metric.dim
        w.writerow(["t"] + [f"x{i+1}" for i in range(n)]
                   + [f"v{i+1}" for i in range(n)])
        for k in range(len(traj.times)):
            w.writerow([f"{traj.times[k]:.12g}"]
                       + [f"{v:.12g}" for v in traj.positions[k]]
                       + [f"{v:.12g}" for v in traj.velocities[k]])
    status = "complete" if traj.complete else "aborted at domain boundary"
    print(f"wrote {len(traj.times)} states to {args.out} ({status})")
    return EXIT_OK


def _load_run_config(args, data=None):
    from .experiment import RunConfig
    with open(args.config) as f:
        doc = json.load(f)
    if data is not None:
        doc["data"] = data
    seed = getattr(args, "seed", None)
    out_dir = getattr(args, "out_dir", None)
    if seed is not None:
        doc["seed"] = seed
    if out_dir is not None:
        doc["out_dir"] = out_dir
    return RunConfig.from_dict(doc)


def cmd_train(args) -> int:
    from . import dataio
    from .experiment import run_experiment
    config = _load_run_config(args, data=args.data)
    report, model, artifacts = run_experiment(config)
    model_path = Path(artifacts["model"])
    if str(model_path) != args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(model_path.read_text())
    print(f"trained model written to {args.out}")
    print(f"report: {artifacts['report']}")
    return EXIT_OK


def cmd_generate(args) -> int:
    from . import dataio
    from .density import GaussianCurveDensity
    from .experiment import AffineScaler
    from .transport import generate_density, generate_mean, nrmse
    model, preprocessing = dataio.load_model(args.model)
    if not model.trained:
        raise ValueError("model was saved untrained; re-run training")
    scaler = None
    if preprocessing and "scaler" in preprocessing:
        scaler = AffineScaler.from_dict(preprocessing["scaler"])
        if model.pca_basis is not None:
            model.coeff_scaler = scaler
    t = model.normalizer.normalize(args.target)
    diag = {"target_raw": args.target, "t_norm": t}
    if isinstance(model.reference_density, GaussianCurveDensity):
        curve = generate_mean(model, t)
        if scaler is not None:
            curve = scaler.inverse(curve)
        dataio.write_curves(args.out, [
            _curve_snapshot(args.target, curve[:, 0], curve[:, 1])])
        cloud = generate_density(model, t, n=args.samples, seed=model.config.seed)
        diag["dropped_j_fraction"] = cloud.dropped_fraction
        if args.reference:
            ref = dataio.ingest_curves(args.reference)[0]
            grid = np.linspace(max(curve[0, 0], ref.strains[0]),
                               min(curve[-1, 0], ref.strains[-1]), 50)
            diag["nrmse_vs_reference"] = nrmse(
                np.interp(grid, curve[:, 0], curve[:, 1]),
                np.interp(grid, ref.strains, ref.stresses))
        if args.plot:
            from . import svgplot
            series = [("generated", curve)]
            if args.reference:
                series.append(("reference", ref.points))
            svgplot.plot_curves(series, args.plot, title="generated curve")
    else:
        mean_field = generate_mean(model, t, n=args.samples,
                                   seed=model.config.seed)
        dataio.write_fields(args.out, [args.target], mean_field[None, :])
        cloud = generate_density(model, t, n=args.samples, seed=model.config.seed)
        diag["dropped_j_fraction"] = cloud.dropped_fraction
        if args.reference:
            _, rows = dataio.ingest_fields(args.reference)
            diag["nrmse_vs_reference"] = nrmse(mean_field, rows[0])
        if args.plot:
            from . import svgplot
            idx = np.arange(len(mean_field), dtype=float)
            svgplot.plot_curves([("generated", np.column_stack([idx, mean_field]))],
                                args.plot, xlabel="component", ylabel="value",
                                title="generated field")
    sidecar = Path(args.out).with_suffix(".diag.json")
    diag["loss_history"] = [list(row) for row in model.loss_history]
    with open(sidecar, "w") as f:
        json.dump(diag, f, sort_keys=True, indent=1)
    print(f"generated data written to {args.out} (diagnostics: {sidecar})")
    return EXIT_OK


def _curve_snapshot(cond, x, y):
    from .density import CurveSnapshot
    return CurveSnapshot(cond, np.column_stack([x, y]))


def cmd_baseline(args) -> int:
    from . import dataio, fpca_gpr
    snapshots = dataio.ingest_curves(args.data)
    lo = max(s.strains[0] for s in snapshots)
    hi = min(s.strains[-1] for s in snapshots)
    grid = np.linspace(lo, hi, args.grid_points)
    curves = np.stack([np.interp(grid, s.strains, s.stresses) for s in snapshots])
    conds = np.array([s.condition_raw for s in snapshots])
    mean, std = fpca_gpr.fit_predict_baseline(grid, curves, conds, args.target)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["strain", "mean", "std"])
        for g, m, s in zip(grid, mean, std):
            w.writerow([f"{g:.12g}", f"{m:.12g}", f"{s:.12g}"])
    print(f"baseline prediction written to {args.out}")
    return EXIT_OK


def cmd_sample_pfode(args) -> int:
    from . import nn
    from .pfode import VeSchedule, gaussian_score, sample_chains, trained_score
    schedule = VeSchedule(args.sigma_min, args.sigma_max)
    if args.score.startswith("gaussian:"):
        std = float(args.score.split(":", 1)[1])
        score = gaussian_score(std, schedule)
        dim = args.dim
    else:
        net = nn.load_mlp(args.score)
        score = trained_score(net)
        dim = net.in_dim - 1
    seed = getattr(args, "seed", 0)
    out = sample_chains(score, schedule, args.n, dim, seed, n_steps=args.steps)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{i+1}" for i in range(dim)])
        for row in np.atleast_2d(out):
            w.writerow([f"{v:.12g}" for v in np.atleast_1d(row)])
    print(f"{args.n} samples written to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .fixtures import synth_fixture
    taus = ([float(v) for v in args.taus.split(",")] if args.taus else None)
    params = json.loads(args.params) if args.params else None
    seed = getattr(args, "seed", 0)
    out_dir = getattr(args, "out_dir", "fixtures")
    paths = synth_fixture(args.kind, out_dir, seed=seed, taus=taus,
                          params=params)
    for key, path in paths.items():
        print(f"{key}: {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiment import run_experiment
    config = _load_run_config(args)
    report, _, artifacts = run_experiment(config)
    print(json.dumps(report.to_dict(), sort_keys=True, indent=1))
    print(f"artifacts in {config.out_dir}")
    return EXIT_OK


_COMMANDS = {
    "ot-discrete": cmd_ot_discrete,
    "geodesic": cmd_geodesic,
    "train": cmd_train,
    "generate": cmd_generate,
    "baseline": cmd_baseline,
    "sample-pfode": cmd_sample_pfode,
    "synth": cmd_synth,
    "run": cmd_run,
}


def main(argv=None) -> int:
    from .dataio import DataFormatError
    from .experiment import StageError
    from .transport import TrainingDivergence
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StageError as e:
        cause = e.cause
        if isinstance(cause, TrainingDivergence):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_DIVERGENCE
        if isinstance(cause, (OSError, FileNotFoundError)):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingDivergence as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (DataFormatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
