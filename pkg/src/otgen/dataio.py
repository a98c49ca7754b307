"""CSV ingestion and versioned JSON persistence.

Curve files carry `condition,strain,stress` rows (many conditions per
file); field files carry one row per condition: `condition,v1..vD`. Model
documents bundle both network weights, the pseudo-time normalizer, the
reference density, preprocessing transforms, and training history; floats
are written with 17 significant digits so round trips are bit-exact.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict

import numpy as np

from . import nn
from .density import CurveSnapshot, GaussianCurveDensity, ReducedGaussianDensity
from .pca import basis_from_dict, basis_to_dict
from .transport import (BodyForceField, ConditionNormalizer, DisplacementField,
                        TrainConfig, TransportModel)

MODEL_FORMAT_VERSION = 1


class DataFormatError(ValueError):
    """Malformed input data file."""


def ingest_curves(path) -> list[CurveSnapshot]:
    """Parse a curve CSV into one snapshot per condition.

    Rows are grouped by condition and sorted by strain; duplicate strains
    within a condition are averaged with a warning. Errors carry the
    offending line number.
    """
    groups: dict[float, list] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        cols = [c.strip().lower() for c in header]
        for name in ("condition", "strain", "stress"):
            if name not in cols:
                raise DataFormatError(f"{path}: missing column {name!r}")
        ic, ia, io = cols.index("condition"), cols.index("strain"), cols.index("stress")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                cond = float(row[ic])
                strain = float(row[ia])
                stress = float(row[io])
            except (ValueError, IndexError) as e:
                raise DataFormatError(f"{path}:{lineno}: bad row {row!r}") from e
            groups.setdefault(cond, []).append((strain, stress))
    snapshots = []
    for cond in sorted(groups):
        pts = sorted(groups[cond])
        dedup = []
        i = 0
        merged = False
        while i < len(pts):
            j = i
            while j + 1 < len(pts) and pts[j + 1][0] == pts[i][0]:
                j += 1
            if j > i:
                merged = True
                stress = float(np.mean([p[1] for p in pts[i:j + 1]]))
            else:
                stress = pts[i][1]
            dedup.append((pts[i][0], stress))
            i = j + 1
        if merged:
            warnings.warn(f"{path}: duplicate strains at condition {cond} "
                          "averaged")
        if len(dedup) < 4:
            raise DataFormatError(
                f"{path}: condition {cond} has fewer than 4 points")
        snapshots.append(CurveSnapshot(cond, np.array(dedup)))
    return snapshots


def write_curves(path, snapshots: list[CurveSnapshot]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["condition", "strain", "stress"])
        for snap in snapshots:
            for strain, stress in snap.points:
                w.writerow([_fmt(snap.condition_raw), _fmt(strain), _fmt(stress)])


def ingest_fields(path):
    """Parse a field CSV: one row per condition, columns condition,v1..vD.

    Returns (conditions [n], fields [n, D]).
    """
    conditions = []
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        cols = [c.strip().lower() for c in header]
        if cols[0] != "condition":
            raise DataFormatError(f"{path}: first column must be 'condition'")
        width = len(cols) - 1
        if width < 1:
            raise DataFormatError(f"{path}: no value columns")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width + 1:
                raise DataFormatError(f"{path}:{lineno}: expected {width + 1} "
                                      f"columns, got {len(row)}")
            try:
                conditions.append(float(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as e:
                raise DataFormatError(f"{path}:{lineno}: bad row") from e
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    order = np.argsort(conditions, kind="stable")
    return (np.asarray(conditions, dtype=np.float64)[order],
            np.asarray(rows, dtype=np.float64)[order])


def write_fields(path, conditions, fields):
    fields = np.atleast_2d(np.asarray(fields, dtype=np.float64))
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["condition"] + [f"v{j + 1}" for j in range(fields.shape[1])])
        for cond, row in zip(np.atleast_1d(conditions), fields):
            w.writerow([_fmt(cond)] + [_fmt(v) for v in row])


def _fmt(x) -> str:
    return f"{float(x):.17g}"


# -- density and model documents ------------------------------------------------

def density_to_dict(dens) -> dict:
    if isinstance(dens, GaussianCurveDensity):
        return {
            "kind": "gaussian_curve",
            "strain_grid": nn._arr_out(dens.strain_grid),
            "mean_stress": nn._arr_out(dens.mean_stress),
            "sigma_stress": nn._fmt(dens.sigma_stress),
            "strain_range": [nn._fmt(dens.strain_range[0]),
                             nn._fmt(dens.strain_range[1])],
        }
    if isinstance(dens, ReducedGaussianDensity):
        return {
            "kind": "reduced_gaussian",
            "mean": nn._arr_out(dens.mean),
            "sigma": nn._fmt(dens.sigma),
        }
    raise TypeError(f"cannot serialize density of type {type(dens).__name__}")


def density_from_dict(doc: dict):
    if doc["kind"] == "gaussian_curve":
        return GaussianCurveDensity(
            np.array(doc["strain_grid"], dtype=np.float64),
            np.array(doc["mean_stress"], dtype=np.float64),
            float(doc["sigma_stress"]),
            (float(doc["strain_range"][0]), float(doc["strain_range"][1])),
        )
    if doc["kind"] == "reduced_gaussian":
        return ReducedGaussianDensity(np.array(doc["mean"], dtype=np.float64),
                                      float(doc["sigma"]))
    raise DataFormatError(f"unknown density kind {doc.get('kind')!r}")


def model_to_dict(model: TransportModel, preprocessing: dict | None = None) -> dict:
    cfg = asdict(model.config)
    cfg["dnn_hidden"] = list(cfg["dnn_hidden"])
    cfg["fnn_hidden"] = list(cfg["fnn_hidden"])
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "displacement": {
            "dim": model.displacement.dim,
            "net": nn.mlp_to_dict(model.displacement.net),
            "embedding": nn.embedding_to_dict(model.displacement.embedding),
            "output_scales": nn._arr_out(model.displacement.output_scales.value),
        },
        "body_force": {
            "dim": model.body_force.dim,
            "net": nn.mlp_to_dict(model.body_force.net),
        },
        "normalizer": {
            "mode": model.normalizer.mode,
            "raw_min": nn._fmt(model.normalizer.raw_min),
            "raw_max": nn._fmt(model.normalizer.raw_max),
            "unit": model.normalizer.unit,
        },
        "config": cfg,
        "loss_history": [[nn._fmt(v) for v in row] for row in model.loss_history],
        "dropped_fraction": nn._fmt(model.dropped_fraction),
        "reference_density": (density_to_dict(model.reference_density)
                              if model.reference_density is not None else None),
        "pca_basis": (basis_to_dict(model.pca_basis)
                      if model.pca_basis is not None else None),
        "preprocessing": preprocessing,
        "trained": model.trained,
    }
    return doc


def model_from_dict(doc: dict) -> tuple[TransportModel, dict | None]:
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise DataFormatError(f"unsupported model version {doc.get('version')}")
    ddoc = doc["displacement"]
    disp = DisplacementField(
        ddoc["dim"], nn.mlp_from_dict(ddoc["net"]),
        embedding=nn.embedding_from_dict(ddoc["embedding"]),
        output_scales=np.array(ddoc["output_scales"], dtype=np.float64))
    body = BodyForceField(doc["body_force"]["dim"],
                          nn.mlp_from_dict(doc["body_force"]["net"]))
    ndoc = doc["normalizer"]
    normalizer = ConditionNormalizer(ndoc["mode"], float(ndoc["raw_min"]),
                                     float(ndoc["raw_max"]), ndoc["unit"])
    cfg_doc = dict(doc["config"])
    cfg_doc["dnn_hidden"] = tuple(cfg_doc["dnn_hidden"])
    cfg_doc["fnn_hidden"] = tuple(cfg_doc["fnn_hidden"])
    config = TrainConfig(**cfg_doc)
    model = TransportModel(
        disp, body, normalizer, config,
        loss_history=[tuple(float(v) for v in row)
                      for row in doc["loss_history"]],
        dropped_fraction=float(doc["dropped_fraction"]),
        trained=bool(doc["trained"]),
    )
    if doc.get("reference_density") is not None:
        model.reference_density = density_from_dict(doc["reference_density"])
    if doc.get("pca_basis") is not None:
        model.pca_basis = basis_from_dict(doc["pca_basis"])
    return model, doc.get("preprocessing")


def save_model(model: TransportModel, path, preprocessing: dict | None = None):
    with open(path, "w") as f:
        json.dump(model_to_dict(model, preprocessing), f, sort_keys=True)


def load_model(path) -> tuple[TransportModel, dict | None]:
    with open(path) as f:
        return model_from_dict(json.load(f))
