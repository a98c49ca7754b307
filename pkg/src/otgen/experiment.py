"""End-to-end experiment pipeline: ingest, train, generate, compare.

A run is fully described by a RunConfig (JSON-serializable); every random
choice derives from its seed, so two runs with the same config produce
bit-identical reports. Wall-clock goes to a separate meta file to keep the
report deterministic.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dataio, fpca_gpr, svgplot
from .density import GaussianCurveDensity, ReducedGaussianDensity, field_to_samples
from .pca import fit_pca, project, reconstruct, subspace_residual
from .transport import (ConditionNormalizer, Snapshot, SnapshotDataset,
                        TrainConfig, generate_density, generate_mean, nrmse,
                        train)


class StageError(RuntimeError):
    """Pipeline failure wrapped with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    """Everything needed to reproduce one experiment.

    task            "curves" or "fields"
    data            training CSV path
    target_raw      condition to generate at (mapped to pseudo-time 1 when
                    it is the largest condition)
    reference       optional CSV with the held-out truth for scoring
    time_mode       "linear" or "log10" condition normalization
    unit            condition unit tag carried into reports
    sigma_frac      stress noise scale as a fraction of each snapshot's
                    stress range (curves)
    reduced_sigma   isotropic density std in normalized reduced space (fields)
    field_sigma_frac  field-space noise (fraction of pooled value range)
                    used to synthesize PCA fitting samples (fields)
    pca_d           retained reduced dimensions (fields)
    pca_samples     noisy samples per snapshot for the PCA fit (fields)
    grid_points     common strain grid size (curves)
    boundary_anchors  matched anchor count along the mean curve (curves);
                    2 means endpoints only
    mean_anchor     use snapshot means as matched anchor pairs (fields)
    train           TrainConfig for the transport networks
    baseline        also fit the mode-regression baseline and report it
    gen_samples     particle count for generation
    plots           write SVG overlays
    """

    task: str
    data: str
    target_raw: float
    reference: str | None = None
    time_mode: str = "linear"
    unit: str = "dimensionless"
    sigma_frac: float = 0.02
    reduced_sigma: float = 0.05
    field_sigma_frac: float = 0.02
    pca_d: int = 6
    pca_samples: int = 64
    grid_points: int = 50
    boundary_anchors: int = 2
    mean_anchor: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    baseline: bool = False
    gen_samples: int = 2048
    plots: bool = False
    out_dir: str = "runs/out"
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("curves", "fields"):
            raise ValueError("task must be 'curves' or 'fields'")
        if self.boundary_anchors < 2:
            raise ValueError("need at least the two endpoint anchors")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["train"]["dnn_hidden"] = list(doc["train"]["dnn_hidden"])
        doc["train"]["fnn_hidden"] = list(doc["train"]["fnn_hidden"])
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        tr = dict(doc.get("train", {}))
        for key in ("dnn_hidden", "fnn_hidden"):
            if key in tr:
                tr[key] = tuple(tr[key])
        doc["train"] = TrainConfig(**tr)
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class ExperimentReport:
    task: str
    seed: int
    target_raw: float
    training_nrmse: dict
    target_nrmse: float | None
    dropped_j_fraction: float
    loss_first: float
    loss_best: float
    loss_last: float
    epochs_run: int
    baseline_nrmse: float | None = None
    pca_target_residual: float | None = None
    untrained: bool = False

    def to_dict(self) -> dict:
        doc = asdict(self)
        for key, val in doc.items():
            if isinstance(val, float) and not np.isfinite(val):
                raise ValueError(f"non-finite report field {key}")
        return doc


@dataclass
class AffineScaler:
    """Per-dimension affine map onto roughly [0, 1]."""

    offset: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_bounds(cls, lo, hi):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        scale = np.where(hi > lo, hi - lo, 1.0)
        return cls(lo, scale)

    def forward(self, x):
        return (np.asarray(x, dtype=np.float64) - self.offset) / self.scale

    def inverse(self, y):
        return np.asarray(y, dtype=np.float64) * self.scale + self.offset

    def to_dict(self):
        from .nn import _arr_out
        return {"offset": _arr_out(self.offset), "scale": _arr_out(self.scale)}

    @classmethod
    def from_dict(cls, doc):
        return cls(np.array(doc["offset"], dtype=np.float64),
                   np.array(doc["scale"], dtype=np.float64))


def _stage(name):
    class _Ctx:
        def __enter__(self):
            return None

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Ctx()


def _build_normalizer(config: RunConfig, conditions) -> ConditionNormalizer:
    raw_min = float(np.min(conditions))
    raw_max = float(max(np.max(conditions), config.target_raw))
    return ConditionNormalizer(config.time_mode, raw_min, raw_max, config.unit)


def _anchor_indices(m, count):
    return np.unique(np.linspace(0, m - 1, count).round().astype(int))


def prepare_curve_dataset(config: RunConfig, snapshots):
    """Resample curves to a common grid, normalize, build densities."""
    lo = max(s.strains[0] for s in snapshots)
    hi = min(s.strains[-1] for s in snapshots)
    if hi <= lo:
        raise ValueError("curves share no common strain range")
    grid = np.linspace(lo, hi, config.grid_points)
    means = np.stack([np.interp(grid, s.strains, s.stresses) for s in snapshots])
    scaler = AffineScaler.from_bounds([lo, means.min()], [hi, means.max()])
    grid_n = scaler.forward(np.column_stack([grid, np.zeros_like(grid)]))[:, 0]
    anchors = _anchor_indices(len(grid), config.boundary_anchors)

    densities = []
    for mean in means:
        mean_n = (mean - scaler.offset[1]) / scaler.scale[1]
        span = float(mean_n.max() - mean_n.min())
        sigma = max(config.sigma_frac * span, 1e-4)
        densities.append(GaussianCurveDensity(grid_n, mean_n, sigma,
                                              strain_range=(grid_n[0], grid_n[-1])))
    ref_pts = np.column_stack([grid_n[anchors],
                               (means[0] - scaler.offset[1])[anchors] / scaler.scale[1]])
    snaps = []
    normalizer = _build_normalizer(config, [s.condition_raw for s in snapshots])
    for snap, dens, mean in zip(snapshots, densities, means):
        t = normalizer.normalize(snap.condition_raw)
        dst = np.column_stack([grid_n[anchors],
                               (mean - scaler.offset[1])[anchors] / scaler.scale[1]])
        snaps.append(Snapshot(t, dens, (ref_pts, dst)))
    return SnapshotDataset(snaps), normalizer, scaler, grid, means


def run_curve_experiment(config: RunConfig):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    with _stage("ingest"):
        snapshots = dataio.ingest_curves(config.data)
        if any(s.condition_raw > config.target_raw for s in snapshots) \
                and config.time_mode == "linear":
            warnings.warn("target condition lies inside the training range")

    with _stage("prepare"):
        dataset, normalizer, scaler, grid, means = prepare_curve_dataset(
            config, snapshots)

    with _stage("train"):
        tcfg = config.train
        if tcfg.seed != config.seed:
            tcfg = replace(tcfg, seed=config.seed)
        model = train(dataset, tcfg, normalizer=normalizer)

    if not model.trained:
        report, artifacts = _emit_untrained(config, model, out, "curves")
    else:
        report, artifacts = _score_and_emit_curves(
            config, model, normalizer, scaler, grid, means, snapshots, out)
    _write_meta(out, config, time.perf_counter() - t_start)
    return report, model, artifacts


def _emit_untrained(config, model, out, task):
    # zero-epoch runs persist the initial model but skip generation
    with _stage("emit"):
        dataio.save_model(model, out / "model.json")
        report = ExperimentReport(
            task=task, seed=config.seed, target_raw=config.target_raw,
            training_nrmse={}, target_nrmse=None, dropped_j_fraction=0.0,
            loss_first=-1.0, loss_best=-1.0, loss_last=-1.0, epochs_run=0,
            untrained=True)
        _write_report(out / "report.json", report)
    return report, {"model": str(out / "model.json"),
                    "report": str(out / "report.json")}


def _mean_curve_raw(model, t, scaler):
    curve_n = generate_mean(model, t)
    return scaler.inverse(curve_n)


def _score_and_emit_curves(config, model, normalizer, scaler, grid,
                           means, snapshots, out):
    with _stage("generate"):
        t_target = normalizer.normalize(config.target_raw)
        gen_curve = _mean_curve_raw(model, t_target, scaler)
        gen_on_grid = np.interp(grid, gen_curve[:, 0], gen_curve[:, 1])
        cloud = generate_density(model, t_target, n=config.gen_samples,
                                 seed=config.seed)

    with _stage("score"):
        training_nrmse = {}
        for snap, mean in zip(snapshots, means):
            t_i = normalizer.normalize(snap.condition_raw)
            fit_curve = _mean_curve_raw(model, t_i, scaler)
            fit_on_grid = np.interp(grid, fit_curve[:, 0], fit_curve[:, 1])
            training_nrmse[str(snap.condition_raw)] = nrmse(fit_on_grid, mean)
        target_nrmse = None
        ref_on_grid = None
        if config.reference:
            ref_snaps = dataio.ingest_curves(config.reference)
            ref = ref_snaps[0]
            ref_on_grid = np.interp(grid, ref.strains, ref.stresses)
            target_nrmse = nrmse(gen_on_grid, ref_on_grid)

        baseline_nrmse = None
        if config.baseline:
            conds = np.array([s.condition_raw for s in snapshots])
            base_mean, _ = fpca_gpr.fit_predict_baseline(
                grid, means, conds, config.target_raw)
            if ref_on_grid is not None:
                baseline_nrmse = nrmse(base_mean, ref_on_grid)
            dataio.write_curves(out / "baseline_pred.csv", [
                _as_snapshot(config.target_raw, grid, base_mean)])

    with _stage("emit"):
        dataio.write_curves(out / "generated.csv",
                            [_as_snapshot(config.target_raw, gen_curve[:, 0],
                                          gen_curve[:, 1])])
        dataio.save_model(model, out / "model.json",
                          preprocessing={"scaler": scaler.to_dict(),
                                         "grid": [float(g) for g in grid]})
        _write_loss_history(out / "loss_history.csv", model.loss_history)
        hist = model.loss_history
        report = ExperimentReport(
            task="curves", seed=config.seed, target_raw=config.target_raw,
            training_nrmse=training_nrmse, target_nrmse=target_nrmse,
            dropped_j_fraction=cloud.dropped_fraction,
            loss_first=hist[0][0] if hist else -1.0,
            loss_best=min(h[0] for h in hist) if hist else -1.0,
            loss_last=hist[-1][0] if hist else -1.0,
            epochs_run=len(hist), baseline_nrmse=baseline_nrmse)
        _write_report(out / "report.json", report)
        artifacts = {"generated": str(out / "generated.csv"),
                     "model": str(out / "model.json"),
                     "report": str(out / "report.json")}
        if config.plots:
            series = [(f"train {s.condition_raw:g}",
                       np.column_stack([grid, m]))
                      for s, m in zip(snapshots, means)]
            series.append((f"generated {config.target_raw:g}",
                           np.column_stack([grid, gen_on_grid])))
            svgplot.plot_curves(series, out / "curves.svg",
                                title="generated vs training curves")
            pts_raw = scaler.inverse(cloud.points)
            svgplot.plot_cloud(pts_raw, out / "cloud.svg", weights=cloud.weights,
                               xlabel="strain", ylabel="stress",
                               title="transported density")
            artifacts["plots"] = [str(out / "curves.svg"), str(out / "cloud.svg")]
    return report, artifacts


def _as_snapshot(cond, x, y):
    from .density import CurveSnapshot
    return CurveSnapshot(cond, np.column_stack([x, y]))


def prepare_field_dataset(config: RunConfig, conditions, fields, seed):
    """Noise-augment fields, fit PCA, normalize reduced coordinates."""
    value_range = float(fields.max() - fields.min())
    sigma_f = max(config.field_sigma_frac * value_range, 1e-9)
    sample_blocks = [
        field_to_samples(fields[i], sigma_f, config.pca_samples,
                         seed=(seed * 7919 + i))
        for i in range(len(fields))
    ]
    pooled = np.vstack(sample_blocks)
    basis = fit_pca(pooled, config.pca_d)
    coeffs = project(basis, fields)          # snapshot means, reduced
    pooled_c = project(basis, pooled)
    scaler = AffineScaler.from_bounds(pooled_c.min(axis=0), pooled_c.max(axis=0))
    normalizer = _build_normalizer(config, conditions)
    snaps = []
    mu0 = scaler.forward(coeffs[0])
    for cond, mu in zip(conditions, coeffs):
        t = normalizer.normalize(cond)
        mu_n = scaler.forward(mu)
        dens = ReducedGaussianDensity(mu_n, config.reduced_sigma)
        pairs = (mu0[None, :], mu_n[None, :]) if config.mean_anchor else None
        snaps.append(Snapshot(t, dens, pairs))
    return SnapshotDataset(snaps), normalizer, scaler, basis


def run_field_experiment(config: RunConfig):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    with _stage("ingest"):
        conditions, fields = dataio.ingest_fields(config.data)

    with _stage("prepare"):
        dataset, normalizer, scaler, basis = prepare_field_dataset(
            config, conditions, fields, config.seed)

    with _stage("train"):
        tcfg = config.train
        if tcfg.seed != config.seed:
            tcfg = replace(tcfg, seed=config.seed)
        if config.mean_anchor is False and tcfg.w2 != 0.0:
            tcfg = replace(tcfg, w2=0.0)
        model = train(dataset, tcfg, normalizer=normalizer)
        model.pca_basis = basis
        model.coeff_scaler = scaler

    if not model.trained:
        report, artifacts = _emit_untrained(config, model, out, "fields")
        _write_meta(out, config, time.perf_counter() - t_start)
        return report, model, artifacts

    with _stage("generate"):
        t_target = normalizer.normalize(config.target_raw)
        cloud = generate_density(model, t_target, n=config.gen_samples,
                                 seed=config.seed)
        mean_reduced = scaler.inverse(cloud.weights @ cloud.points)
        gen_field = reconstruct(basis, mean_reduced)

    with _stage("score"):
        training_nrmse = {}
        for cond, fld in zip(conditions, fields):
            t_i = normalizer.normalize(cond)
            cl = generate_density(model, t_i, n=config.gen_samples,
                                  seed=config.seed)
            mr = scaler.inverse(cl.weights @ cl.points)
            training_nrmse[str(cond)] = nrmse(reconstruct(basis, mr), fld)
        target_nrmse = None
        pca_resid = None
        ref_field = None
        if config.reference:
            _, ref_rows = dataio.ingest_fields(config.reference)
            ref_field = ref_rows[0]
            target_nrmse = nrmse(gen_field, ref_field)
            pca_resid = subspace_residual(basis, ref_field)

        baseline_nrmse = None
        if config.baseline and ref_field is not None:
            coeffs = project(basis, fields)
            pred = np.empty(basis.d)
            for k in range(basis.d):
                g = fpca_gpr.gpr_fit(conditions, coeffs[:, k])
                pred[k], _ = fpca_gpr.gpr_predict(g, config.target_raw)
            baseline_nrmse = nrmse(reconstruct(basis, pred), ref_field)

    with _stage("emit"):
        dataio.write_fields(out / "generated.csv", [config.target_raw],
                            gen_field[None, :])
        dataio.save_model(model, out / "model.json",
                          preprocessing={"scaler": scaler.to_dict()})
        _write_loss_history(out / "loss_history.csv", model.loss_history)
        hist = model.loss_history
        report = ExperimentReport(
            task="fields", seed=config.seed, target_raw=config.target_raw,
            training_nrmse=training_nrmse, target_nrmse=target_nrmse,
            dropped_j_fraction=cloud.dropped_fraction,
            loss_first=hist[0][0] if hist else -1.0,
            loss_best=min(h[0] for h in hist) if hist else -1.0,
            loss_last=hist[-1][0] if hist else -1.0,
            epochs_run=len(hist), baseline_nrmse=baseline_nrmse,
            pca_target_residual=pca_resid)
        _write_report(out / "report.json", report)
        artifacts = {"generated": str(out / "generated.csv"),
                     "model": str(out / "model.json"),
                     "report": str(out / "report.json")}
        if config.plots and ref_field is not None:
            idx = np.arange(len(gen_field), dtype=float)
            svgplot.plot_curves(
                [("reference", np.column_stack([idx, ref_field])),
                 ("generated", np.column_stack([idx, gen_field]))],
                out / "field.svg", xlabel="component", ylabel="value",
                title="generated vs reference field")
            artifacts["plots"] = [str(out / "field.svg")]
    _write_meta(out, config, time.perf_counter() - t_start)
    return report, model, artifacts


def run_experiment(config: RunConfig):
    """Dispatch on task; returns (ExperimentReport, model, artifact paths)."""
    if not Path(config.data).exists():
        raise StageError("ingest", FileNotFoundError(config.data))
    if config.reference and not Path(config.reference).exists():
        raise StageError("ingest", FileNotFoundError(config.reference))
    if config.task == "curves":
        return run_curve_experiment(config)
    return run_field_experiment(config)


def _write_report(path, report: ExperimentReport):
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, sort_keys=True, indent=1)


def _write_meta(out, config, wall_clock):
    # wall-clock lives outside report.json so reports stay bit-reproducible
    with open(Path(out) / "run_meta.json", "w") as f:
        json.dump({"config": config.to_dict(), "wall_clock_s": wall_clock}, f,
                  sort_keys=True, indent=1)


def _write_loss_history(path, history):
    import csv as _csv
    with open(path, "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(["epoch", "total", "density", "boundary", "dynamics",
                    "dropped_fraction"])
        for i, row in enumerate(history):
            w.writerow([i] + [dataio._fmt(v) for v in row])
