"""Seeded generators for the simulation designs.

Randomness comes from numpy's counter-based Philox bit generator. A setting's
``seed`` seeds a ``SeedSequence``; replication ``i`` uses the child with spawn
key ``(i,)`` and every instance splits its sequence into three independent
streams (truth, design, noise), so each piece can be regenerated alone.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import toeplitz

from .core import RegressionData, SvdTriple, compose_coefficient
from .errors import RankDeficiency, SupportOverflow


class Design(str, Enum):
    WEAK_ORTH = "weak_orth"
    IID = "iid"
    WEAKLY_SPARSE = "weakly_sparse"


@dataclass(frozen=True)
class SimSetting:
    design: Design = Design.WEAK_ORTH
    n: int = 200
    p: int = 25
    q: int = 15
    r: int = 3
    d_star: tuple = (100.0, 15.0, 5.0)
    s1: int = 3
    s2: int = 3
    rho_x: float = 0.3
    rho_e: float = 0.3
    snr: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        object.__setattr__(self, "d_star", tuple(float(a) for a in self.d_star))
        self.validate()

    def validate(self):
        if min(self.n, self.p, self.q, self.r) < 1:
            raise ValueError("n, p, q, r must all be >= 1")
        if len(self.d_star) != self.r:
            raise ValueError(f"d_star has {len(self.d_star)} entries, expected r={self.r}")
        if any(b >= a for a, b in zip(self.d_star, self.d_star[1:])) or self.d_star[-1] <= 0:
            raise ValueError("d_star must be positive and strictly decreasing")
        if self.snr <= 0:
            raise ValueError("snr must be positive")
        if self.design is Design.WEAKLY_SPARSE:
            if (self.p, self.q, self.r) != (50, 30, 3):
                raise SupportOverflow("the weakly sparse layout is defined for p=50, q=30, r=3")
        elif self.r * self.s1 > self.p or self.r * self.s2 > self.q:
            raise SupportOverflow(
                f"supports r*s1={self.r * self.s1} / r*s2={self.r * self.s2} exceed p={self.p} / q={self.q}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["design"] = self.design.value
        out["d_star"] = list(self.d_star)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj: dict) -> "SimSetting":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown SimSetting fields: {sorted(extra)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, text: str) -> "SimSetting":
        return cls.from_dict(json.loads(text))

    def with_(self, **kw) -> "SimSetting":
        return replace(self, **kw)


PRESETS = {
    1: dict(design=Design.WEAK_ORTH, n=200, p=25, q=15, d_star=(100, 15, 5), s1=3, s2=3),
    2: dict(design=Design.WEAK_ORTH, n=200, p=50, q=30, d_star=(100, 15, 5), s1=3, s2=3),
    3: dict(design=Design.IID, n=200, p=25, q=15, d_star=(200, 15, 5), s1=5, s2=5),
    4: dict(design=Design.IID, n=200, p=50, q=30, d_star=(200, 15, 5), s1=5, s2=5),
    5: dict(design=Design.WEAKLY_SPARSE, n=200, p=50, q=30, d_star=(200, 15, 5), s1=8, s2=8),
}


def preset(number: int, seed: int = 0, **overrides) -> SimSetting:
    """Simulation settings 1-5 (3 and 4 use i.i.d. rows, 5 the weakly sparse layout)."""
    if number not in PRESETS:
        raise ValueError(f"unknown setting {number}; choose from {sorted(PRESETS)}")
    kw = dict(PRESETS[number], r=3, seed=seed)
    kw.update(overrides)
    return SimSetting(**kw)


@dataclass(frozen=True, eq=False)
class SimInstance:
    data: RegressionData
    truth: SvdTriple
    sigma_e: np.ndarray
    noise_scale: float
    noise: np.ndarray = field(repr=False)
    setting: SimSetting | None = None

    @property
    def c_star(self) -> np.ndarray:
        return compose_coefficient(self.truth)


def seed_sequence(setting: SimSetting, rep: int | None = None) -> np.random.SeedSequence:
    if rep is None:
        return np.random.SeedSequence(setting.seed)
    return np.random.SeedSequence(setting.seed, spawn_key=(int(rep),))


def _streams(setting, rep=None):
    return [np.random.Generator(np.random.Philox(s)) for s in seed_sequence(setting, rep).spawn(3)]


def ar1(dim: int, rho: float) -> np.ndarray:
    return toeplitz(rho ** np.arange(dim))


def unif_signs(rng, size):
    """Uniform draws from {-1, 1}."""
    return rng.choice(np.array([-1.0, 1.0]), size=size)


def unif_two_interval(rng, size, lo, hi):
    """Uniform over [-hi, -lo] U [lo, hi] (both pieces have equal length)."""
    return unif_signs(rng, size) * rng.uniform(lo, hi, size=size)


def _block_vectors(rng, dim, r, s, draw):
    out = np.zeros((dim, r))
    for k in range(r):
        out[k * s:(k + 1) * s, k] = draw(rng, s)
    return out


def _weakly_sparse_vectors(rng):
    s1 = unif_signs
    s2 = lambda g, m: unif_two_interval(g, m, 0.01, 0.1)  # noqa: E731
    s3 = lambda g, m: unif_two_interval(g, m, 0.6, 1.0)  # noqa: E731
    z = np.zeros
    l = np.column_stack([
        np.concatenate([s1(rng, 8), z(30), s2(rng, 12)]),
        np.concatenate([z(4), s2(rng, 12), s1(rng, 8), z(26)]),
        np.concatenate([z(20), s2(rng, 12), s1(rng, 8), z(10)]),
    ])
    v = np.column_stack([
        np.concatenate([s3(rng, 8), z(19), s2(rng, 3)]),
        np.concatenate([z(6), s2(rng, 3), s3(rng, 8), z(13)]),
        np.concatenate([z(19), s3(rng, 8), s2(rng, 3)]),
    ])
    return l, v


def raw_factors(setting: SimSetting, rng=None):
    """Normalized, not yet orthonormalized (l_k, v_k) columns."""
    if rng is None:
        rng = _streams(setting)[0]
    if setting.design is Design.WEAKLY_SPARSE:
        l, v = _weakly_sparse_vectors(rng)
    else:
        l = _block_vectors(rng, setting.p, setting.r, setting.s1, unif_signs)
        v = _block_vectors(rng, setting.q, setting.r, setting.s2,
                           lambda g, m: unif_two_interval(g, m, 0.3, 1.0))
    return l / np.linalg.norm(l, axis=0), v / np.linalg.norm(v, axis=0)


def gen_truth(setting: SimSetting, rng=None) -> SvdTriple:
    """Sparse SVD ground truth, re-orthonormalized by a thin SVD of the composition."""
    l, v = raw_factors(setting, rng)
    c = (l * np.asarray(setting.d_star)) @ v.T
    return SvdTriple.from_matrix(c, rank=setting.r)


def orth_complement(l: np.ndarray) -> np.ndarray:
    p, r = l.shape
    qmat, _ = np.linalg.qr(l, mode="complete")
    return qmat[:, r:]


def gen_design(setting: SimSetting, truth: SvdTriple | None = None, rng=None) -> np.ndarray:
    if rng is None:
        rng = _streams(setting)[1]
    n, p = setting.n, setting.p
    sx = ar1(p, setting.rho_x)
    if setting.design is not Design.WEAK_ORTH:
        return rng.standard_normal((n, p)) @ np.linalg.cholesky(sx).T
    if truth is None:
        raise ValueError("the weakly orthogonal design needs the true left singular vectors")
    l = truth.l
    r = l.shape[1]
    lp = orth_complement(l)
    pmat = np.hstack([l, lp])
    cond = np.linalg.cond(pmat)
    if not np.isfinite(cond) or cond > 1e12:
        raise RankDeficiency(f"[L, L_perp] is numerically singular (cond {cond:.3g})")
    x1 = rng.standard_normal((n, r))
    if lp.shape[1] == 0:
        x12 = x1
    else:
        s11 = l.T @ sx @ l
        s21 = lp.T @ sx @ l
        s22 = lp.T @ sx @ lp
        b = np.linalg.solve(s11, s21.T).T
        cond_cov = s22 - b @ s21.T
        cond_cov = (cond_cov + cond_cov.T) / 2
        x2 = x1 @ b.T + rng.standard_normal((n, p - r)) @ np.linalg.cholesky(cond_cov).T
        x12 = np.hstack([x1, x2])
    return np.linalg.solve(pmat.T, x12.T).T


def gen_noise(setting: SimSetting, truth: SvdTriple, x: np.ndarray, rng=None):
    """Noise rows ~ N(0, s2 * Sigma_E) scaled so ||X C_r||_F / ||E||_F equals ``snr`` exactly."""
    if rng is None:
        rng = _streams(setting)[2]
    se = ar1(setting.q, setting.rho_e)
    e0 = rng.standard_normal((setting.n, setting.q)) @ np.linalg.cholesky(se).T
    k = truth.r - 1
    signal = np.linalg.norm(x @ np.outer(truth.u[:, k], truth.v[:, k]))
    sigma = signal / (setting.snr * np.linalg.norm(e0))
    return sigma * e0, sigma**2


def gen_instance(setting: SimSetting, rep: int | None = None) -> SimInstance:
    g_truth, g_design, g_noise = _streams(setting, rep)
    truth = gen_truth(setting, g_truth)
    x = gen_design(setting, truth, g_design)
    e, s2 = gen_noise(setting, truth, x, g_noise)
    y = x @ compose_coefficient(truth) + e
    return SimInstance(RegressionData(x, y), truth, s2 * ar1(setting.q, setting.rho_e), s2, e, setting)
