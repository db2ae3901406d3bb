"""Initial sparse-SVD estimate: alternating sparse least squares followed by an
exact SVD projection, and a singular-value-ratio rank heuristic."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import RegressionData, SvdTriple, compose_coefficient
from .errors import RankTooLarge
from .precision import lasso_gram, soft_threshold

RIDGE_JITTER = 1e-6


@dataclass(frozen=True)
class SofarConfig:
    """Fit options.

    ``rank`` is an int or ``"auto"``. ``lam`` is a float, ``None`` for the
    default rule c * sigma_hat * sqrt(log(pq)/n), or ``("cv", folds)``.
    """

    rank: int | str = "auto"
    lam: float | tuple | None = None
    lam_const: float = 1.0
    max_iter: int = 200
    tol: float = 1e-7
    threshold_floor: float = 1e-10
    max_rank: int | None = None
    rank_ratio_floor: float = 0.02

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not (self.rank == "auto" or (isinstance(self.rank, (int, np.integer)) and self.rank >= 1)):
            raise ValueError(f"rank must be a positive int or 'auto', got {self.rank!r}")


@dataclass(frozen=True, eq=False)
class SofarEstimate:
    triple: SvdTriple
    c_tilde: np.ndarray
    lambda_u: float
    lambda_v: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list, repr=False)

    @property
    def u(self) -> np.ndarray:
        return self.triple.u

    @property
    def v(self) -> np.ndarray:
        return self.triple.v

    @property
    def r(self) -> int:
        return self.triple.r


def ridge_pilot(data: RegressionData) -> np.ndarray:
    jitter = RIDGE_JITTER * np.trace(data.gram) / data.p
    xtx = data.x.T @ data.x
    return np.linalg.solve(xtx + jitter * np.eye(data.p), data.x.T @ data.y)


def mad_sigma(resid) -> float:
    r = np.ravel(resid)
    return float(1.4826 * np.median(np.abs(r - np.median(r))))


def default_lambda(data: RegressionData, const=1.0, pilot=None) -> float:
    if pilot is None:
        pilot = ridge_pilot(data)
    sigma = mad_sigma(data.y - data.x @ pilot)
    return const * sigma * np.sqrt(np.log(data.p * data.q) / data.n)


def _objective(data, u, v, lam):
    # (2n)^-1 ||Y - X U V'||^2 expanded through the cached Gram blocks
    yy = np.sum(data.y**2) / data.n
    fit = yy - 2 * np.sum(u * (data.xty @ v)) + np.sum((u.T @ data.gram @ u) * (v.T @ v))
    return 0.5 * fit + lam * np.sum(np.abs(u))


def _polar(a):
    lf, _, rt = np.linalg.svd(a, full_matrices=False)
    return lf @ rt


def _alternate(data, u, v, lam, cfg):
    trace = [_objective(data, u, v, lam)]
    best = (trace[0], u.copy(), v.copy())
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        for k in range(u.shape[1]):
            c = data.xty @ v[:, k]
            if lam == 0:
                u[:, k] = np.linalg.solve(data.gram, c)
            else:
                u[:, k], _, _ = lasso_gram(data.gram, c, lam, beta0=u[:, k])
        v0 = data.xty.T @ u
        # the plain polar factor minimizes the objective over V exactly; the
        # thresholded one is kept only when it does not increase the objective
        v_exact = _polar(v0)
        obj = _objective(data, u, v_exact, lam)
        vt = soft_threshold(v0, lam * np.linalg.norm(u, axis=0))
        if np.all(np.linalg.norm(vt, axis=0) > 0):
            v_thr = _polar(vt)
            obj_thr = _objective(data, u, v_thr, lam)
            v, obj = (v_thr, obj_thr) if obj_thr <= obj else (v_exact, obj)
        else:
            v = v_exact
        trace.append(obj)
        if obj < best[0]:
            best = (obj, u.copy(), v.copy())
        prev = trace[-2]
        if abs(prev - obj) <= cfg.tol * max(abs(prev), 1e-300) or obj <= 1e-28 * max(trace[0], 1e-300):
            converged = True
            break
    return best[1], best[2], it, converged, trace


def _project(u, v, rank, floor):
    """Exact SVD of U V' with tiny entries of U and V D removed."""
    lf, s, vt = np.linalg.svd(u @ v.T, full_matrices=False)
    keep = int(np.sum(s[:rank] > 1e-12 * max(s[0], 1e-300)))
    if keep == 0:
        raise ValueError("the fitted coefficient matrix is zero; lower the penalty")
    d = s[:keep]
    ud = lf[:, :keep] * d
    vd = vt[:keep].T * d
    ud[np.abs(ud) < floor] = 0.0
    vd[np.abs(vd) < floor] = 0.0
    return SvdTriple.from_matrix(ud @ (vd / d).T, rank=keep)


def _fit_fixed(data, rank, lam, cfg, pilot):
    b0 = soft_threshold(pilot, lam)
    lf, s, vt = np.linalg.svd(b0, full_matrices=False)
    if s[0] == 0:
        lf, s, vt = np.linalg.svd(pilot, full_matrices=False)
    u = lf[:, :rank] * s[:rank]
    v = vt[:rank].T.copy()
    u, v, it, ok, trace = _alternate(data, u, v, lam, cfg)
    triple = _project(u, v, rank, cfg.threshold_floor)
    return SofarEstimate(triple, compose_coefficient(triple), lam, lam, it, ok, trace)


def _cv_lambda(data, rank, base, folds, cfg):
    n = data.n
    fold_id = np.arange(n) % folds
    grid = base * np.geomspace(4.0, 0.125, 7)
    err = np.zeros(grid.size)
    for f in range(folds):
        train = data.subset(fold_id != f)
        test = data.subset(fold_id == f)
        pilot = ridge_pilot(train)
        for i, lam in enumerate(grid):
            est = _fit_fixed(train, rank, lam, cfg, pilot)
            err[i] += np.sum((test.y - test.x @ est.c_tilde) ** 2)
    return float(grid[int(np.argmin(err))])


def fit_sofar(data: RegressionData, cfg: SofarConfig | None = None) -> SofarEstimate:
    """Sparse SVD estimate whose components satisfy the SvdTriple invariants exactly.

    The returned rank can be smaller than requested when a layer is shrunk to zero.
    """
    cfg = cfg or SofarConfig()
    pilot = ridge_pilot(data)
    if cfg.rank == "auto":
        rank = estimate_rank(data, cfg.max_rank or min(data.p, data.q), cfg.rank_ratio_floor)
    else:
        rank = int(cfg.rank)
    if rank > min(data.p, data.q):
        raise RankTooLarge(f"rank {rank} exceeds min(p, q) = {min(data.p, data.q)}")
    if cfg.lam is None:
        lam = default_lambda(data, cfg.lam_const, pilot)
    elif isinstance(cfg.lam, (tuple, list)):
        if cfg.lam[0] != "cv":
            raise ValueError(f"unknown lambda rule {cfg.lam!r}")
        lam = _cv_lambda(data, rank, default_lambda(data, cfg.lam_const, pilot), int(cfg.lam[1]), cfg)
    else:
        lam = float(cfg.lam)
        if lam < 0:
            raise ValueError("lambda must be non-negative")
    return _fit_fixed(data, rank, lam, cfg, pilot)


def estimate_rank(data: RegressionData, max_rank: int | None = None, ratio_floor: float = 0.02) -> int:
    """Largest k with sigma_k / sigma_1 >= ratio_floor on a lightly penalized pilot fit."""
    max_rank = max_rank or min(data.p, data.q)
    pilot = ridge_pilot(data)
    lam = default_lambda(data, 1.0, pilot)
    s = np.linalg.svd(soft_threshold(pilot, lam), compute_uv=False)[:max_rank]
    if s.size == 0 or s[0] <= 0:
        return 1
    ok = np.flatnonzero(s / s[0] >= ratio_floor)
    return int(max(1, ok.max() + 1))
