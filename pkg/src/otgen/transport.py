"""Learned time-indexed transport of probability densities.

An operating condition (temperature, log strain rate, impact speed) is
normalized to a pseudo-time t in [0, 1]. A displacement network u(X, t)
moves points of the reference (t = 0) distribution; a body-force network
F_b(x, t) models the acceleration field those trajectories obey. Training
minimizes three terms:

  density match   mean_i || rho0(X)/J_i - rho_i(X + u(X, t_i)) ||^2
  boundary match  mean_i || bX + u(bX, t_i) - bx_i ||^2
  dynamics        mean_j || d2u/dt2(X, t'_j) - G lap_X u - F_b(X + u, t'_j) ||^2

with J_i = det(I + du/dX) the volume change of the map at t_i, so the
first term enforces Lagrangian mass conservation of the transported
density. All input derivatives are central finite differences composed of
ordinary forward passes, recorded on the tape so parameter gradients flow
through them. Generation pushes reference samples through the trained map
and reweights densities by 1/J.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import nn
from . import rng
from .density import GaussianCurveDensity

TIME_GUARD = (-0.05, 1.05)


class TrainingDivergence(RuntimeError):
    """Loss became non-finite during training."""


# -- pseudo-time ---------------------------------------------------------------

@dataclass(frozen=True)
class ConditionNormalizer:
    """Affine (or log10-affine) map from raw condition to t in [0, 1]."""

    mode: str  # "linear" | "log10"
    raw_min: float
    raw_max: float
    unit: str = "dimensionless"

    def __post_init__(self):
        if self.mode not in ("linear", "log10"):
            raise ValueError("mode must be 'linear' or 'log10'")
        if not self.raw_min < self.raw_max:
            raise ValueError("raw_min must be below raw_max")
        if self.mode == "log10" and self.raw_min <= 0:
            raise ValueError("log10 mode needs raw_min > 0")

    def normalize(self, raw: float) -> float:
        if raw < self.raw_min or raw > self.raw_max:
            raise ValueError(f"condition {raw} outside [{self.raw_min}, {self.raw_max}]")
        if self.mode == "linear":
            return (raw - self.raw_min) / (self.raw_max - self.raw_min)
        return ((math.log10(raw) - math.log10(self.raw_min))
                / (math.log10(self.raw_max) - math.log10(self.raw_min)))

    def denormalize(self, t: float) -> float:
        if self.mode == "linear":
            return self.raw_min + t * (self.raw_max - self.raw_min)
        lo = math.log10(self.raw_min)
        hi = math.log10(self.raw_max)
        return 10.0 ** (lo + t * (hi - lo))


def normalize_time(norm: ConditionNormalizer, raw: float) -> float:
    return norm.normalize(raw)


# -- network fields -------------------------------------------------------------

class DisplacementField:
    """u(X, t): spectral-feature MLP with per-dimension output scaling.

    The final layer starts near zero and the learnable scales start at one,
    so the initial map is close to the identity.
    """

    def __init__(self, dim, net: nn.Mlp, embedding=None, output_scales=None):
        self.dim = int(dim)
        self.net = net
        self.embedding = embedding
        if output_scales is None:
            output_scales = np.ones(dim)
        self.output_scales = ad.parameter(np.asarray(output_scales, dtype=np.float64))
        in_dim = embedding.in_dim if embedding is not None else net.in_dim
        if in_dim != dim + 1:
            raise ValueError("field input must be data dim + 1 (time)")
        if net.out_dim != dim:
            raise ValueError("field output must match data dim")

    def parameters(self) -> list[ad.Tensor]:
        ps = list(self.net.parameters())
        if self.embedding is not None:
            ps.extend(self.embedding.parameters())
        ps.append(self.output_scales)
        return ps

    def u(self, X, t) -> ad.Tensor:
        """Displacement at points X [n, dim] and time(s) t (scalar or [n])."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        tcol = np.broadcast_to(
            np.asarray(t, dtype=np.float64).reshape(-1, 1), (X.shape[0], 1))
        inp = ad.constant(np.concatenate([X, tcol], axis=1))
        out = nn.forward(self.net, self.embedding, inp, mode="eval")
        return ad.mul(out, self.output_scales)

    def u_values(self, X, t) -> np.ndarray:
        with ad.no_grad():
            return self.u(X, t).value


class BodyForceField:
    """F_b(x, t) network; dropout is active only in training mode."""

    def __init__(self, dim, net: nn.Mlp):
        self.dim = int(dim)
        self.net = net
        if net.in_dim != dim + 1 or net.out_dim != dim:
            raise ValueError("body-force network must map dim+1 -> dim")

    def parameters(self) -> list[ad.Tensor]:
        return self.net.parameters()

    def force(self, x: ad.Tensor, t, mode="eval", seed=0) -> ad.Tensor:
        tcol = np.broadcast_to(
            np.asarray(t, dtype=np.float64).reshape(-1, 1), (x.value.shape[0], 1))
        inp = ad.concat([x, ad.constant(tcol)], axis=-1)
        return self.net.forward(inp, mode=mode, seed=seed)


def make_displacement_field(dim, hidden=(256, 256, 256), fourier_m=32,
                            activation="softplus", activation_param=10.0,
                            final_std=1e-3, seed=0) -> DisplacementField:
    in_dim = dim + 1
    if fourier_m > 0:
        gen = rng.stream(seed, 0x20)
        emb = nn.FourierFeatureEmbedding(rng.normal(gen, (fourier_m, in_dim)), scale=1.0)
        first = emb.out_dim
    else:
        emb = None
        first = in_dim
    net = nn.init_mlp([first, *hidden, dim], activation, seed=seed + 1,
                      activation_param=activation_param, final_std=final_std)
    return DisplacementField(dim, net, embedding=emb)


def make_body_force_field(dim, hidden=(300,) * 7, activation="selu",
                          activation_param=0.0, dropout=0.1, seed=0) -> BodyForceField:
    net = nn.init_mlp([dim + 1, *hidden, dim], activation, seed=seed + 2,
                      dropout=dropout, activation_param=activation_param)
    return BodyForceField(dim, net)


# -- dataset --------------------------------------------------------------------

@dataclass(frozen=True)
class Snapshot:
    """Observed state: pseudo-time, density model, optional boundary pairs.

    `boundary_pairs` is (source_points [m, dim], target_points [m, dim]):
    matched anchor locations of the reference and this snapshot.
    """

    t_norm: float
    density: object
    boundary_pairs: tuple | None = None


class SnapshotDataset:
    def __init__(self, snapshots: list[Snapshot]):
        if len(snapshots) < 2:
            raise ValueError("transport needs at least two distinct pseudo-times")
        snaps = sorted(snapshots, key=lambda s: s.t_norm)
        ts = [s.t_norm for s in snaps]
        if len(set(ts)) != len(ts):
            raise ValueError("pseudo-times must be distinct")
        if abs(ts[0]) > 1e-12:
            raise ValueError("a reference snapshot at t = 0 is required")
        if ts[-1] > 1.0 + 1e-12:
            raise ValueError("pseudo-times must lie in [0, 1]")
        self.snapshots = snaps
        self.reference_index = 0

    @property
    def reference(self) -> Snapshot:
        return self.snapshots[self.reference_index]

    @property
    def dim(self) -> int:
        return self.reference.density.dim

    def __len__(self):
        return len(self.snapshots)


# -- config and model -----------------------------------------------------------

@dataclass
class TrainConfig:
    """Training hyperparameters; architecture knobs default to the large nets."""

    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    epochs: int = 2000
    n_samples: int = 2048          # density-match batch per snapshot per epoch
    n_collocation: int = 21        # interior times for the dynamics term
    n_samples_pde: int = 128       # sample batch for the dynamics term
    learning_rate: float = 1e-3
    fd_step: float = 1e-3
    shear_modulus: float = 0.0
    seed: int = 0
    auto_rescale_weights: bool = False
    checkpoint: str = "best"       # "best" training loss or "last" epoch
    dnn_hidden: tuple = (256, 256, 256)
    dnn_fourier_m: int = 32
    dnn_activation: str = "softplus"
    dnn_activation_param: float = 10.0
    fnn_hidden: tuple = (300,) * 7
    fnn_activation: str = "selu"
    fnn_activation_param: float = 0.0
    fnn_dropout: float = 0.1

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3) < 0 or self.w1 + self.w2 + self.w3 <= 0:
            raise ValueError("loss weights must be nonnegative with positive sum")
        if self.n_collocation < 2:
            raise ValueError("need at least two collocation times")
        if self.epochs < 0 or self.n_samples < 1:
            raise ValueError("bad epoch/batch configuration")
        if self.fd_step <= 0:
            raise ValueError("finite-difference step must be positive")
        if self.shear_modulus < 0:
            raise ValueError("shear modulus must be nonnegative")
        if self.checkpoint not in ("best", "last"):
            raise ValueError("checkpoint policy must be 'best' or 'last'")


@dataclass
class TransportModel:
    displacement: DisplacementField
    body_force: BodyForceField
    normalizer: ConditionNormalizer
    config: TrainConfig
    loss_history: list = field(default_factory=list)
    dropped_fraction: float = 0.0
    pca_basis: object = None
    coeff_scaler: object = None   # inverse() maps training coords to raw reduced
    reference_density: object = None
    trained: bool = False

    def parameters(self) -> list[ad.Tensor]:
        return self.displacement.parameters() + self.body_force.parameters()


def init_model(dataset: SnapshotDataset, normalizer: ConditionNormalizer,
               config: TrainConfig) -> TransportModel:
    dim = dataset.dim
    disp = make_displacement_field(
        dim, hidden=tuple(config.dnn_hidden), fourier_m=config.dnn_fourier_m,
        activation=config.dnn_activation,
        activation_param=config.dnn_activation_param, seed=config.seed)
    body = make_body_force_field(
        dim, hidden=tuple(config.fnn_hidden), activation=config.fnn_activation,
        activation_param=config.fnn_activation_param,
        dropout=config.fnn_dropout, seed=config.seed)
    return TransportModel(disp, body, normalizer, config)


# -- kinematics -----------------------------------------------------------------

def _check_time(t, h):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t - h < TIME_GUARD[0]) or np.any(t + h > TIME_GUARD[1]):
        raise ValueError(f"time stencil leaves guard band {TIME_GUARD}")


def spatial_jacobian_t(fieldo: DisplacementField, X, t, h) -> ad.Tensor:
    """du/dX by central differences: tape tensor [n, dim, dim]."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    cols = []
    for j in range(X.shape[1]):
        dX = np.zeros_like(X)
        dX[:, j] = h
        cols.append(ad.mul(ad.sub(fieldo.u(X + dX, t), fieldo.u(X - dX, t)),
                           1.0 / (2.0 * h)))
    return ad.stack_last(cols)


def time_derivs_t(fieldo: DisplacementField, X, t, h):
    """(u, du/dt, d2u/dt2) at fixed points, as tape tensors."""
    _check_time(t, h)
    u0 = fieldo.u(X, t)
    up = fieldo.u(X, np.asarray(t) + h)
    um = fieldo.u(X, np.asarray(t) - h)
    du = ad.mul(ad.sub(up, um), 1.0 / (2.0 * h))
    d2u = ad.mul(ad.sub(ad.add(up, um), ad.mul(u0, 2.0)), 1.0 / h**2)
    return u0, du, d2u


def deformation_gradient(model: TransportModel, X, t, h=None) -> np.ndarray:
    """F = I + du/dX at X (eval mode); [dim, dim] or [n, dim, dim]."""
    h = h or model.config.fd_step
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    Xb = np.atleast_2d(X)
    with ad.no_grad():
        jac = spatial_jacobian_t(model.displacement, Xb, t, h).value
    F = jac + np.eye(Xb.shape[1])
    return F[0] if single else F


def neo_hookean_energy(F, G) -> float:
    """Deformation energy 0.5 G (Tr(F F^T) - N); may be negative in compression."""
    F = np.asarray(F, dtype=np.float64)
    n = F.shape[-1]
    C = F @ np.swapaxes(F, -1, -2)
    return float(0.5 * G * (np.trace(C, axis1=-2, axis2=-1) - n))


def first_pk_stress(F, G) -> np.ndarray:
    """Stress conjugate to F for the energy above: P = G F."""
    return G * np.asarray(F, dtype=np.float64)


def eom_residual_t(model: TransportModel, X, t, h, mode="eval", seed=0) -> ad.Tensor:
    """Equation-of-motion residual d2u/dt2 - G lap(u) - F_b(X+u, t) on tape."""
    fieldo = model.displacement
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    u0, _, d2u = time_derivs_t(fieldo, X, t, h)
    r = d2u
    G = model.config.shear_modulus
    if G != 0.0:
        lap = None
        for j in range(X.shape[1]):
            dX = np.zeros_like(X)
            dX[:, j] = h
            term = ad.mul(
                ad.sub(ad.add(fieldo.u(X + dX, t), fieldo.u(X - dX, t)),
                       ad.mul(u0, 2.0)), 1.0 / h**2)
            lap = term if lap is None else ad.add(lap, term)
        r = ad.sub(r, ad.mul(lap, G))
    mapped = ad.add(ad.constant(X), u0)
    fb = model.body_force.force(mapped, t, mode=mode, seed=seed)
    return ad.sub(r, fb)


def eom_residual(model: TransportModel, X, t, h=None) -> np.ndarray:
    h = h or model.config.fd_step
    with ad.no_grad():
        return eom_residual_t(model, X, t, h).value


# -- loss -----------------------------------------------------------------------

@dataclass
class LossResult:
    total: float
    l1: float
    l2: float
    l3: float
    dropped: int = 0
    evaluated: int = 0
    tape: ad.Tensor | None = None

    def __iter__(self):
        return iter((self.total, self.l1, self.l2, self.l3))

    @property
    def dropped_fraction(self) -> float:
        return self.dropped / self.evaluated if self.evaluated else 0.0


def _masked_mean(values: ad.Tensor, mask: np.ndarray) -> ad.Tensor:
    """Stable mean over unmasked entries; mask is a constant 0/1 array."""
    kept = float(mask.sum())
    if kept == 0:
        raise TrainingDivergence("every sample was dropped from the density term")
    scaled = ad.mul(values, ad.Tensor(mask * (len(mask) / kept)))
    return ad.stable_mean(scaled)


def compute_loss(model: TransportModel, dataset: SnapshotDataset,
                 config: TrainConfig | None = None, epoch_seed: int = 0,
                 build_tape: bool = True, train_mode: bool = False) -> LossResult:
    """Three-term training loss for one Monte-Carlo batch.

    Batches are drawn from the reference density with streams keyed by
    (config.seed, epoch_seed), so a (config, epoch) pair always sees the
    same batch. Samples where the map degenerates (J <= 0) are excluded
    from the density term and counted.
    """
    config = config or model.config
    fieldo = model.displacement
    ref = dataset.reference.density
    h = config.fd_step
    n_snap = len(dataset)
    dim = dataset.dim
    n = config.n_samples

    X = ref.sample(n, seed=_combine(config.seed, epoch_seed, 1))
    rho0 = ref.pdf(X)

    # all snapshots share the batch; stack them so every finite-difference
    # stencil is a single wide forward pass
    Xs = np.tile(X, (n_snap, 1))
    ts = np.repeat([s.t_norm for s in dataset.snapshots], n)
    jac = spatial_jacobian_t(fieldo, Xs, ts, h)
    eye = np.eye(dim)
    F_raw = ad.add(jac, ad.Tensor(np.broadcast_to(eye, jac.value.shape).copy()))
    J_probe = np.linalg.det(F_raw.value)
    mask = (J_probe > 1e-12).astype(np.float64)
    dropped = int(len(mask) - mask.sum())
    evaluated = len(mask)
    if dropped:
        # swap degenerate rows for the identity so det/inv stay finite;
        # the mask removes their contribution
        m3 = mask[:, None, None]
        F_safe = ad.add(ad.mul(F_raw, ad.Tensor(m3)),
                        ad.Tensor((1.0 - m3) * eye))
    else:
        F_safe = F_raw
    J = ad.det(F_safe)
    u0 = fieldo.u(Xs, ts)
    mapped = ad.add(ad.constant(Xs), u0)
    ratio = ad.div(ad.Tensor(np.tile(rho0, n_snap)), J)

    l1_terms = []
    l2_terms = []
    for i, snap in enumerate(dataset.snapshots):
        sl = slice(i * n, (i + 1) * n)
        rho_i = snap.density.pdf_t(ad.getitem(mapped, sl))
        diff = ad.sub(ad.getitem(ratio, sl), rho_i)
        l1_terms.append(_masked_mean(ad.square(diff), mask[sl]))

        if snap.boundary_pairs is not None:
            src_b, dst_b = snap.boundary_pairs
            ub = fieldo.u(src_b, snap.t_norm)
            bdiff = ad.sub(ad.add(ad.constant(np.atleast_2d(src_b)), ub),
                           ad.Tensor(np.atleast_2d(dst_b)))
            l2_terms.append(ad.stable_mean(ad.tsum(ad.square(bdiff), axis=-1)))

    L1 = ad.mul(ad.stable_sum_scalars(l1_terms), 1.0 / n_snap)
    if l2_terms:
        L2 = ad.mul(ad.stable_sum_scalars(l2_terms), 1.0 / n_snap)
    else:
        L2 = ad.constant(0.0)

    # dynamics term: stack every collocation time over one sample batch;
    # its global mean equals the mean over times of per-time means
    X3 = ref.sample(config.n_samples_pde, seed=_combine(config.seed, epoch_seed, 2))
    t_coll = np.linspace(0.0, 1.0, config.n_collocation + 2)[1:-1]
    X3s = np.tile(X3, (len(t_coll), 1))
    t3s = np.repeat(t_coll, config.n_samples_pde)
    r = eom_residual_t(model, X3s, t3s, h,
                       mode="train" if train_mode else "eval",
                       seed=_combine(config.seed, epoch_seed, 3))
    L3 = ad.stable_mean(ad.tsum(ad.square(r), axis=-1))

    total = ad.add(ad.add(ad.mul(L1, config.w1), ad.mul(L2, config.w2)),
                   ad.mul(L3, config.w3))
    if not np.isfinite(total.value):
        raise TrainingDivergence("non-finite loss")
    return LossResult(
        total=float(total.value), l1=float(L1.value), l2=float(L2.value),
        l3=float(L3.value), dropped=dropped, evaluated=evaluated,
        tape=total if build_tape else None,
    )


def loss(model, dataset, config=None, epoch_seed=0) -> LossResult:
    """Loss values only (no gradient tape kept)."""
    with ad.no_grad():
        return compute_loss(model, dataset, config, epoch_seed, build_tape=False)


def _combine(*parts: int) -> int:
    out = 0
    for p in parts:
        out = (out * 1_000_003 + int(p)) % (2**63)
    return out


# -- training ---------------------------------------------------------------------

def train(dataset: SnapshotDataset, config: TrainConfig,
          normalizer: ConditionNormalizer | None = None,
          model: TransportModel | None = None) -> TransportModel:
    """Adam descent on the three-term loss; returns the best checkpoint.

    A fresh Monte-Carlo batch is drawn each epoch from seeds derived from
    (config.seed, epoch), making runs bit-reproducible. The parameters with
    the lowest recorded training loss are restored at the end; divergence
    aborts early with the last good checkpoint.
    """
    if normalizer is None:
        normalizer = ConditionNormalizer("linear", 0.0, 1.0)
    if model is None:
        model = init_model(dataset, normalizer, config)
    params = model.parameters()
    state = nn.AdamState.for_params([p.value for p in params], lr=config.learning_rate)
    cfg = config
    best = (np.inf, [p.value.copy() for p in params], 0.0)
    history = []
    for epoch in range(config.epochs):
        for p in params:
            p.zero_grad()
        try:
            res = compute_loss(model, dataset, cfg, epoch_seed=epoch,
                               train_mode=True)
        except TrainingDivergence:
            warnings.warn(f"training diverged at epoch {epoch}; "
                          "restoring best checkpoint")
            break
        if epoch == 0 and config.auto_rescale_weights:
            cfg = replace(
                cfg,
                w1=config.w1 / max(res.l1, 1e-12),
                w2=config.w2 / max(res.l2, 1e-12) if res.l2 > 0 else config.w2,
                w3=config.w3 / max(res.l3, 1e-12),
            )
            for p in params:
                p.zero_grad()
            res = compute_loss(model, dataset, cfg, epoch_seed=epoch,
                               train_mode=True)
        res.tape.backward()
        history.append((res.total, res.l1, res.l2, res.l3, res.dropped_fraction))
        if res.total < best[0]:
            best = (res.total, [p.value.copy() for p in params],
                    res.dropped_fraction)
        try:
            nn.adam_step_tensors(params, state)
        except FloatingPointError:
            warnings.warn(f"non-finite gradient at epoch {epoch}; "
                          "restoring best checkpoint")
            break
    else:
        # loop ran to completion; "last" keeps the final parameters
        if config.checkpoint == "last" and config.epochs > 0 and history:
            best = (history[-1][0], [p.value.copy() for p in params],
                    history[-1][4])
    for p, v in zip(params, best[1]):
        p.value = v
    model.loss_history = history
    model.config = cfg
    model.reference_density = dataset.reference.density
    model.trained = config.epochs > 0
    if history:
        model.dropped_fraction = best[2]
        if best[2] > 0.01:
            warnings.warn(
                f"returned checkpoint degenerated on {best[2]:.1%} of density "
                "samples (J <= 0); treat the model as suspect")
    return model


# -- generation --------------------------------------------------------------------

@dataclass
class ParticleCloudDensity:
    """Push-forward of the reference density as a weighted particle cloud.

    `density_values[k]` is rho0(X_k) / J(X_k, t): the transported density
    at the mapped point `points[k]`. Weights are uniform over the retained
    particles and sum to one.
    """

    points: np.ndarray
    weights: np.ndarray
    density_values: np.ndarray
    t_norm: float
    dropped_fraction: float = 0.0

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def kde(self, query, bandwidth) -> np.ndarray:
        """Gaussian kernel density estimate of the cloud at query points."""
        q = np.atleast_2d(np.asarray(query, dtype=np.float64))
        d = self.points.shape[1]
        norm = (2.0 * np.pi * bandwidth**2) ** (d / 2.0)
        diff = q[:, None, :] - self.points[None, :, :]
        k = np.exp(-0.5 * np.einsum("qnd,qnd->qn", diff, diff) / bandwidth**2)
        return (k @ self.weights) / norm


def generate_density(model: TransportModel, t_target_norm, n=2048,
                     seed=0) -> ParticleCloudDensity:
    """Transported density at pseudo-time t as a weighted particle cloud."""
    if not -1e-12 <= t_target_norm <= 1.0 + 1e-12:
        raise ValueError("target pseudo-time must lie in [0, 1]")
    ref = model.reference_density
    if ref is None:
        raise ValueError("model has no reference density attached")
    X = ref.sample(n, seed)
    rho0 = ref.pdf(X)
    h = model.config.fd_step
    with ad.no_grad():
        u0 = model.displacement.u(X, t_target_norm).value
        jac = spatial_jacobian_t(model.displacement, X, t_target_norm, h).value
    F = jac + np.eye(X.shape[1])
    J = np.linalg.det(F)
    keep = J > 1e-12
    dropped_fraction = 1.0 - keep.mean()
    if dropped_fraction > 0:
        warnings.warn(f"dropped {dropped_fraction:.2%} of samples with J <= 0")
    pts = (X + u0)[keep]
    vals = rho0[keep] / J[keep]
    w = np.full(len(pts), 1.0 / len(pts))
    return ParticleCloudDensity(pts, w, vals, float(t_target_norm),
                                float(dropped_fraction))


def generate_mean(model: TransportModel, t_target_norm, n=2048, seed=0):
    """Mean of the transported density.

    For a curve reference the conditional mean stress along strain is the
    mapped mean curve, returned as [m, 2] sorted by strain. Otherwise the
    weighted mean of the particle cloud is returned; with a PCA basis
    attached it is reconstructed back to data space.
    """
    ref = model.reference_density
    if ref is None:
        raise ValueError("model has no reference density attached")
    if isinstance(ref, GaussianCurveDensity):
        P = ref.mean_curve()
        u0 = model.displacement.u_values(P, t_target_norm)
        mapped = P + u0
        order = np.argsort(mapped[:, 0], kind="stable")
        return mapped[order]
    cloud = generate_density(model, t_target_norm, n=n, seed=seed)
    mean = cloud.mean()
    if model.coeff_scaler is not None:
        mean = model.coeff_scaler.inverse(mean)
    if model.pca_basis is not None:
        from .pca import reconstruct
        return reconstruct(model.pca_basis, mean)
    return mean


def nrmse(pred, target) -> float:
    """Root-mean-square error over the target's value range."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ValueError("length mismatch")
    rng_t = float(target.max() - target.min())
    if rng_t == 0.0:
        raise ValueError("target is constant; NRMSE undefined")
    return float(np.sqrt(np.mean((pred - target) ** 2)) / rng_t)
