"""Curve regression baseline: functional PCA plus Gaussian-process regression.

A set of curves sampled on a common strain grid is decomposed into
orthonormal modes by SVD; each mode coefficient is regressed against the
operating condition with a zero-mean GP under a squared-exponential
kernel. Prediction at a new condition reconstructs the curve from the
posterior coefficient means and propagates their variances pointwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FpcaModel:
    """Orthonormal curve modes and per-curve coefficients.

    Y[:, i] ~ column_mean + sum_k coefficients[i, k] * modes[k].
    """

    strain_grid: np.ndarray
    modes: np.ndarray          # [r, m]
    coefficients: np.ndarray   # [n_T, r]
    column_mean: np.ndarray    # [m]
    variance_ratio: np.ndarray


def fit_fpca(strain_grid, Y, variance_threshold=0.99) -> FpcaModel:
    """Decompose curve matrix Y [m, n_T] (one column per condition).

    Retains the smallest mode count whose cumulative variance reaches the
    threshold. If every curve is identical the decomposition is degenerate;
    the documented rule is r = 1 with a uniform unit mode and zero
    coefficients, so predictions return the shared curve.
    """
    strain_grid = np.asarray(strain_grid, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("Y must be [m, n_T]")
    m, n_T = Y.shape
    if n_T < 2:
        raise ValueError("need at least two curves")
    if strain_grid.shape != (m,):
        raise ValueError("grid length must match curve rows")
    col_mean = Y.mean(axis=1)
    Yc = Y - col_mean[:, None]
    u, s, vt = np.linalg.svd(Yc, full_matrices=False)
    total = float((s * s).sum())
    if total == 0.0:
        warnings.warn("all curves identical; returning a single trivial mode")
        modes = np.full((1, m), 1.0 / math.sqrt(m))
        return FpcaModel(strain_grid, modes, np.zeros((n_T, 1)),
                         col_mean, np.array([0.0]))
    ratio = (s * s) / total
    r = int(np.searchsorted(np.cumsum(ratio), variance_threshold) + 1)
    r = min(r, len(s))
    modes = u[:, :r].T.copy()
    for k in range(r):
        j = int(np.argmax(np.abs(modes[k])))
        if modes[k, j] < 0:
            modes[k] = -modes[k]
    coeffs = Yc.T @ modes.T  # [n_T, r]
    return FpcaModel(strain_grid, modes, coeffs, col_mean, ratio[:r])


def fpca_reconstruct(model: FpcaModel, coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    return model.column_mean + coeffs @ model.modes


# -- Gaussian process regression ---------------------------------------------

@dataclass
class GprModel:
    """Zero-mean GP posterior over one coefficient vs condition.

    Inputs are standardized internally; `alpha` caches (K + noise I)^-1 y.
    """

    train_inputs: np.ndarray
    train_targets: np.ndarray
    length_scale: float
    signal_variance: float
    noise_variance: float
    input_shift: float
    input_scale: float
    alpha: np.ndarray
    chol: np.ndarray
    jitter: float


def _sq_exp(a, b, length_scale, signal_variance):
    d = a[:, None] - b[None, :]
    return signal_variance * np.exp(-0.5 * (d / length_scale) ** 2)


def _chol_with_jitter(K):
    for jitter in (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(len(K))), jitter
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("kernel matrix not positive definite at max jitter")


def _log_marginal(y, L):
    z = np.linalg.solve(L, y)
    quad = float(z @ z)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    n = len(y)
    return -0.5 * quad - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi)


def gpr_fit(T, a, hyper=None) -> GprModel:
    """Condition a zero-mean GP on (T, a) pairs.

    `hyper`, when given, fixes (length_scale, signal_variance,
    noise_variance) in standardized input units. Otherwise the triple is
    chosen by log-marginal-likelihood over a log-spaced 20x20x20 grid,
    which is deterministic and needs no external optimizer.
    """
    T = np.asarray(T, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if T.ndim != 1 or T.shape != a.shape or T.size < 1:
        raise ValueError("T and a must be equal-length vectors")
    shift = float(T.mean())
    scale = float(T.std()) if T.size > 1 and T.std() > 0 else 1.0
    Ts = (T - shift) / scale
    if len(np.unique(Ts)) != len(Ts):
        raise ValueError("conditions must be distinct")

    def build(ls, sv, nv):
        K = _sq_exp(Ts, Ts, ls, sv) + nv * np.eye(len(Ts))
        L, jit = _chol_with_jitter(K)
        return L, jit

    if hyper is not None:
        ls, sv, nv = (float(h) for h in hyper)
        if min(ls, sv) <= 0 or nv < 0:
            raise ValueError("hyperparameters must be positive")
        L, jit = build(ls, sv, nv)
    else:
        a_var = float(a.var()) if a.size > 1 else max(float(a[0]) ** 2, 1e-12)
        a_var = max(a_var, 1e-12)
        ls_grid = np.logspace(-1.0, 1.3, 20)
        sv_grid = a_var * np.logspace(-1.0, 1.5, 20)
        nv_grid = a_var * np.logspace(-8.0, -0.5, 20)
        best = (-np.inf, None)
        for ls in ls_grid:
            for sv in sv_grid:
                K0 = _sq_exp(Ts, Ts, ls, sv)
                for nv in nv_grid:
                    try:
                        L, jit = _chol_with_jitter(K0 + nv * np.eye(len(Ts)))
                    except np.linalg.LinAlgError:
                        continue
                    lml = _log_marginal(a, L)
                    if lml > best[0]:
                        best = (lml, (ls, sv, nv, L, jit))
        if best[1] is None:
            raise np.linalg.LinAlgError("no stable hyperparameter choice found")
        ls, sv, nv, L, jit = best[1]

    z = np.linalg.solve(L, a)
    alpha = np.linalg.solve(L.T, z)
    return GprModel(
        train_inputs=Ts, train_targets=a.copy(),
        length_scale=float(ls), signal_variance=float(sv),
        noise_variance=float(nv), input_shift=shift, input_scale=scale,
        alpha=alpha, chol=L, jitter=jit,
    )


def gpr_predict(model: GprModel, T_star):
    """Posterior predictive mean and variance (including noise) at T_star."""
    T_star = np.atleast_1d(np.asarray(T_star, dtype=np.float64))
    ts = (T_star - model.input_shift) / model.input_scale
    k_star = _sq_exp(ts, model.train_inputs, model.length_scale,
                     model.signal_variance)
    mean = k_star @ model.alpha
    v = np.linalg.solve(model.chol, k_star.T)
    var = model.signal_variance - np.einsum("ij,ij->j", v, v) + model.noise_variance
    var = np.maximum(var, 0.0)
    if mean.size == 1:
        return float(mean[0]), float(var[0])
    return mean, var


def predict_curve(fpca: FpcaModel, gprs: list[GprModel], T_star):
    """Curve posterior at a new condition.

    Returns (mean [m], pointwise std [m]); coefficient posteriors are
    treated as independent, so variances propagate through squared modes.
    """
    if len(gprs) != fpca.modes.shape[0]:
        raise ValueError("need one GPR per retained mode")
    m = fpca.column_mean.copy()
    var = np.zeros_like(m)
    for k, g in enumerate(gprs):
        mu_k, var_k = gpr_predict(g, T_star)
        m = m + mu_k * fpca.modes[k]
        var = var + var_k * fpca.modes[k] ** 2
    return m, np.sqrt(var)


def fit_predict_baseline(strain_grid, curves, conditions, target_condition,
                         variance_threshold=0.99, hyper=None):
    """End-to-end baseline: FPCA over training curves, GPR per mode, predict.

    `curves` is [n_T, m] (row per condition). Returns (mean, std) on the
    grid.
    """
    curves = np.asarray(curves, dtype=np.float64)
    fpca = fit_fpca(strain_grid, curves.T, variance_threshold)
    gprs = [gpr_fit(np.asarray(conditions, dtype=np.float64),
                    fpca.coefficients[:, k], hyper=hyper)
            for k in range(fpca.modes.shape[0])]
    return predict_curve(fpca, gprs, target_condition)
