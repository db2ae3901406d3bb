"""Debiased inference for the latent left factors u_k and squared singular values d_k^2.

Two constructions are provided. ``strong`` treats every other layer as a
nuisance and suits nearly uncorrelated latent factors; ``weak`` first removes
the surrogate of the preceding layers (layer peeling) and only corrects for
the trailing ones. ``split`` fits the initial estimate on one half of the
sample and debiases on the other.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .core import RegressionData, SvdTriple, Variant
from .errcov import ErrorCovEstimate, adaptive_threshold_cov, residuals
from .errors import (DegenerateLayer, NonPositiveVarianceWarning, SingularInnerMatrix,
                     SofariError)
from .precision import ApproxInverse, default_node_lambda, nodewise_precision
from .sofar import SofarConfig, SofarEstimate, fit_sofar

Z_FLOOR = 1e-12
COND_MAX = 1e10


def _uv(est):
    t = est.triple if isinstance(est, SofarEstimate) else est
    return t.u, t.v


def _theta(theta):
    return theta.theta if isinstance(theta, ApproxInverse) else np.asarray(theta, dtype=float)


def _z(gram, uk):
    z = float(uk @ gram @ uk)
    if z <= Z_FLOOR:
        raise DegenerateLayer(f"z_kk = {z:.3g} is not positive")
    return z


def _others(u, v, k, variant):
    """Index set of the layers corrected for in layer k's score."""
    r = u.shape[1]
    if Variant(variant) is Variant.WEAK:
        return np.arange(k + 1, r)
    return np.delete(np.arange(r), k)


def build_m(est, data: RegressionData, k: int, variant=Variant.STRONG) -> np.ndarray:
    u, v = _uv(est)
    idx = _others(u, v, k, variant)
    z = _z(data.gram, u[:, k])
    c_other = u[:, idx] @ v[:, idx].T
    return -(data.gram @ c_other) / z


def build_m_strong(est, data, k):
    """M_k = -z_kk^-1 Sigma C_{-k}."""
    return build_m(est, data, k, Variant.STRONG)


def build_m_weak(est, data, k):
    """M_k = -z_kk^-1 Sigma C^(2), C^(2) built from layers after k (zero for the last layer)."""
    return build_m(est, data, k, Variant.WEAK)


def _w_from(theta, gram, u_other, z):
    if u_other.shape[1] == 0:
        return theta.copy(), 1.0
    su = gram @ u_other
    inner = np.eye(u_other.shape[1]) - (u_other.T @ su) / z
    cond = np.linalg.cond(inner)
    if not np.isfinite(cond) or cond >= COND_MAX:
        raise SingularInnerMatrix(f"inner matrix is singular (cond {cond:.3g}); eigengap too small?", cond)
    lu = sla.lu_factor(inner)
    corr = su @ sla.lu_solve(lu, u_other.T) / z
    return theta @ (np.eye(gram.shape[0]) + corr), float(cond)


def build_w(est, theta, data: RegressionData, k: int, variant=Variant.STRONG) -> np.ndarray:
    u, v = _uv(est)
    idx = _others(u, v, k, variant)
    z = _z(data.gram, u[:, k])
    return _w_from(_theta(theta), data.gram, u[:, idx], z)[0]


def build_w_strong(est, theta, data, k):
    return build_w(est, theta, data, k, Variant.STRONG)


def build_w_weak(est, theta, data, k):
    return build_w(est, theta, data, k, Variant.WEAK)


@dataclass(frozen=True, eq=False)
class LayerContext:
    k: int
    variant: Variant
    z_kk: float
    m_k: np.ndarray
    w_k: np.ndarray
    c_other: np.ndarray
    u_other: np.ndarray
    c1_hat: np.ndarray
    gram: np.ndarray = field(repr=False)
    inner_cond: float = 1.0


def layer_context(est, theta, data: RegressionData, k: int, variant=Variant.STRONG) -> LayerContext:
    variant = Variant(variant)
    kind = Variant.WEAK if variant is Variant.WEAK else Variant.STRONG
    u, v = _uv(est)
    if u.shape[1] < 2:
        raise SofariError("inference needs rank >= 2")
    idx = _others(u, v, k, kind)
    gram = data.gram
    z = _z(gram, u[:, k])
    c_other = u[:, idx] @ v[:, idx].T
    m = -(gram @ c_other) / z
    w, cond = _w_from(_theta(theta), gram, u[:, idx], z)
    if kind is Variant.WEAK:
        c1 = u[:, :k] @ v[:, :k].T
    else:
        c1 = np.zeros_like(c_other)
    return LayerContext(k, variant, z, m, w, c_other, u[:, idx], c1, gram, cond)


def _score(est, data, k, m, c1):
    u, v = _uv(est)
    uk, vk = u[:, k], v[:, k]
    su = data.gram @ uk
    g_u = su - data.xty @ vk + data.gram @ (c1 @ vk)
    g_v = vk * (uk @ su) - data.xty.T @ uk + c1.T @ su
    return g_u - m @ g_v


def score_strong(est, data: RegressionData, k: int, m=None) -> np.ndarray:
    """Modified score dL/du_k - M_k dL/dv_k at the initial estimate."""
    if m is None:
        m = build_m_strong(est, data, k)
    u, v = _uv(est)
    return _score(est, data, k, m, np.zeros((u.shape[0], v.shape[0])))


def score_weak(est, data: RegressionData, k: int, m=None) -> np.ndarray:
    """Modified score of the peeled loss, first k layers replaced by their estimates."""
    if m is None:
        m = build_m_weak(est, data, k)
    u, v = _uv(est)
    return _score(est, data, k, m, u[:, :k] @ v[:, :k].T)


def _ctx_score(est, data, ctx):
    return _score(est, data, ctx.k, ctx.m_k, ctx.c1_hat)


def debias_u(est, theta, data: RegressionData, k: int, variant=Variant.STRONG) -> np.ndarray:
    """u_hat = u_k - W_k psi_k."""
    ctx = layer_context(est, theta, data, k, variant)
    u, _ = _uv(est)
    return u[:, k] - ctx.w_k @ _ctx_score(est, data, ctx)


def debias_d2(est, theta, data: RegressionData, k: int, variant=Variant.STRONG) -> float:
    """d2_hat = ||u_k||^2 - 2 u_k' W_k psi_k."""
    ctx = layer_context(est, theta, data, k, variant)
    u, _ = _uv(est)
    uk = u[:, k]
    return float(uk @ uk - 2 * uk @ ctx.w_k @ _ctx_score(est, data, ctx))


def _sigma(sigma_e):
    return sigma_e.sigma if isinstance(sigma_e, ErrorCovEstimate) else np.asarray(sigma_e, dtype=float)


def variance_core(ctx: LayerContext, est, sigma_e) -> np.ndarray:
    """z M S M' + (v'Sv) Sigma - 2 Sigma u v' S M' for noise covariance S."""
    u, v = _uv(est)
    uk, vk = u[:, ctx.k], v[:, ctx.k]
    s = _sigma(sigma_e)
    m = ctx.m_k
    ms = m @ s
    return (ctx.z_kk * ms @ m.T + (vk @ s @ vk) * ctx.gram
            - 2 * np.outer(ctx.gram @ uk, (ms @ vk)))


def variance_matrix(ctx: LayerContext, est, sigma_e) -> np.ndarray:
    return ctx.w_k @ variance_core(ctx, est, sigma_e) @ ctx.w_k.T


def variance_u(ctx: LayerContext, est, sigma_e, a) -> float:
    """Plug-in variance of sqrt(n) a'(u_hat - u_k)."""
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise ValueError("contrast vector must be nonzero")
    wa = ctx.w_k.T @ a
    return float(wa @ variance_core(ctx, est, sigma_e) @ wa)


def variance_d2(ctx: LayerContext, est, sigma_e) -> float:
    u, _ = _uv(est)
    return 4.0 * variance_u(ctx, est, sigma_e, u[:, ctx.k])


@dataclass(frozen=True, eq=False)
class DebiasedLayer:
    k: int
    u_hat: np.ndarray
    d2_hat: float
    var_u: np.ndarray
    var_d2: float
    score: np.ndarray
    context: LayerContext = field(repr=False)
    u_init: np.ndarray = field(default=None, repr=False)
    flags: tuple = ()

    @property
    def ok(self) -> bool:
        return "nonpositive_variance" not in self.flags


def debias_layer(est, theta, data: RegressionData, k: int, variant=Variant.STRONG,
                 sigma_e=None) -> DebiasedLayer:
    """All per-layer quantities. Variances are NaN when ``sigma_e`` is None."""
    ctx = layer_context(est, theta, data, k, variant)
    u, _ = _uv(est)
    uk = u[:, k]
    psi = _ctx_score(est, data, ctx)
    corr = ctx.w_k @ psi
    u_hat = uk - corr
    d2_hat = float(uk @ uk - 2 * uk @ corr)
    flags = []
    if sigma_e is None:
        var_u = np.full(uk.size, np.nan)
        var_d2 = float("nan")
    else:
        var_u, var_d2 = _variances(ctx, est, sigma_e)
        if np.any(var_u <= 0) or var_d2 <= 0:
            raw = getattr(sigma_e, "raw", None)
            if raw is not None:
                flags.append("raw_cov_fallback")
                var_u, var_d2 = _variances(ctx, est, raw)
            if np.any(var_u <= 0) or var_d2 <= 0:
                flags.append("nonpositive_variance")
                warnings.warn(f"layer {k + 1}: non-positive plug-in variance", NonPositiveVarianceWarning)
    return DebiasedLayer(k, u_hat, d2_hat, var_u, var_d2, psi, ctx, uk.copy(), tuple(flags))


def _variances(ctx, est, sigma_e):
    u, _ = _uv(est)
    core = variance_core(ctx, est, sigma_e)
    wc = ctx.w_k @ core
    var_u = np.einsum("ij,ij->i", wc, ctx.w_k)
    wu = ctx.w_k.T @ u[:, ctx.k]
    return var_u, float(4.0 * wu @ core @ wu)


@dataclass(frozen=True)
class SofariConfig:
    sofar: SofarConfig = field(default_factory=SofarConfig)
    variant: str = "weak"
    theta_lambda: object = None  # None: default_node_lambda(data, theta_const)
    theta_const: float = 0.25
    s_max: int | None = None
    delta: float = 2.0
    split_seed: int = 0

    def __post_init__(self):
        if self.variant not in ("strong", "weak", "split", "auto"):
            raise ValueError(f"unknown variant {self.variant!r}")

    def node_lambda(self, data):
        if self.theta_lambda is None:
            return default_node_lambda(data, self.theta_const)
        return self.theta_lambda

    def with_(self, **kw) -> "SofariConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class SofariResult:
    layers: list
    estimate: SofarEstimate
    theta: ApproxInverse
    sigma_e: ErrorCovEstimate
    variant: Variant
    failures: dict = field(default_factory=dict)
    data: RegressionData | None = field(default=None, repr=False)

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


def _resolve_variant(cfg, est, data):
    if cfg.variant == "auto":
        return Variant(diagnose_orthogonality(est, data).recommended)
    return Variant(cfg.variant)


def debias_all(est, theta, data, sigma_e, variant) -> tuple[list, dict]:
    """Debias every layer; failures are collected per layer instead of raised."""
    layers, failures = [], {}
    for k in range(_uv(est)[0].shape[1]):
        try:
            layers.append(debias_layer(est, theta, data, k, variant, sigma_e))
        except SofariError as exc:
            failures[k] = f"{type(exc).__name__}: {exc}"
    return layers, failures


def run_sofari(data: RegressionData, cfg: SofariConfig | None = None) -> SofariResult:
    """Initial fit, nodewise approximate inverse, residual noise covariance, then
    debiased estimates and plug-in variances for every layer."""
    cfg = cfg or SofariConfig()
    if cfg.variant == "split":
        return run_sofari_split(data, cfg)
    est = fit_sofar(data, cfg.sofar)
    if est.r < 2:
        raise SofariError("inference needs rank >= 2; the rank-one case is not supported")
    theta = nodewise_precision(data, cfg.node_lambda(data), s_max=cfg.s_max)
    sig = adaptive_threshold_cov(residuals(data, est), cfg.delta)
    variant = _resolve_variant(cfg, est, data)
    layers, failures = debias_all(est, theta, data, sig, variant)
    return SofariResult(layers, est, theta, sig, variant, failures, data)


def split_indices(n: int, seed: int = 0):
    """Seeded even split into (debias fold, fit fold); an odd last row is dropped."""
    perm = np.random.Generator(np.random.Philox(seed)).permutation(n)
    h = n // 2
    return np.sort(perm[:h]), np.sort(perm[h:2 * h])


def sofari_from_folds(debias_fold: RegressionData, fit_fold: RegressionData,
                      cfg: SofariConfig | None = None) -> SofariResult:
    """Initial estimate from ``fit_fold``; approximate inverse, noise covariance
    and debiasing from ``debias_fold``. Uses the strong construction."""
    cfg = cfg or SofariConfig()
    est = fit_sofar(fit_fold, cfg.sofar)
    if est.r < 2:
        raise SofariError("inference needs rank >= 2; the rank-one case is not supported")
    theta = nodewise_precision(debias_fold, cfg.node_lambda(debias_fold), s_max=cfg.s_max)
    sig = adaptive_threshold_cov(residuals(debias_fold, est), cfg.delta)
    layers, failures = debias_all(est, theta, debias_fold, sig, Variant.STRONG)
    return SofariResult(layers, est, theta, sig, Variant.SPLIT, failures, debias_fold)


def run_sofari_split(data: RegressionData, cfg: SofariConfig | None = None) -> SofariResult:
    cfg = cfg or SofariConfig(variant="split")
    i1, i2 = split_indices(data.n, cfg.split_seed)
    return sofari_from_folds(data.subset(i1), data.subset(i2), cfg)


@dataclass(frozen=True)
class OrthogonalityReport:
    strong: np.ndarray
    weak: np.ndarray
    eigengaps: np.ndarray
    threshold: float
    recommended: str

    def lines(self) -> list[str]:
        out = [f"{'layer':>5} {'strong':>12} {'weak':>12} {'eigengap':>14}"]
        for k in range(self.strong.size):
            gap = self.eigengaps[k] if k < self.eigengaps.size else float("nan")
            out.append(f"{k + 1:>5} {self.strong[k]:>12.6g} {self.weak[k]:>12.6g} {gap:>14.6g}")
        out.append(f"strong threshold: {self.threshold:.6g}")
        out.append(f"{self.recommended.capitalize()} recommended")
        return out


def diagnose_orthogonality(est, data: RegressionData, const: float = 3.0) -> OrthogonalityReport:
    """Cross-layer correlation statistics of the latent factors.

    strong_k = sum_{j != k} |l_j' Sigma l_k|,
    weak_k = sum_{j > k} (d_j^2 / d_k) |l_j' Sigma l_k|,
    eigengap_k = d_k^2 - d_{k+1}^2.
    The strong construction is recommended when every strong_k is below
    ``const * (r - 1) / sqrt(n)``, the size of pure sampling fluctuation.
    """
    t = est.triple if isinstance(est, SofarEstimate) else est
    if not isinstance(t, SvdTriple):
        raise TypeError("expected a SvdTriple or SofarEstimate")
    g = np.abs(t.l.T @ data.gram @ t.l)
    r = t.r
    off = g - np.diag(np.diag(g))
    strong = off.sum(axis=1)
    d = t.d
    weak = np.array([np.sum(d[k + 1:] ** 2 / d[k] * off[k, k + 1:]) for k in range(r)])
    gaps = d[:-1] ** 2 - d[1:] ** 2
    thr = const * max(r - 1, 1) / np.sqrt(data.n)
    rec = "strong" if np.all(strong < thr) else "weak"
    return OrthogonalityReport(strong, weak, gaps, float(thr), rec)
