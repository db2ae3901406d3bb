"""Unit-sphere geometry St(1, q): tangent projection, exp/log maps, geodesics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AntipodalPoint

SMALL_ANGLE = 1e-12


@dataclass(frozen=True, eq=False)
class SpherePoint:
    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).ravel()
        nv = np.linalg.norm(v)
        if abs(nv - 1.0) > 1e-12:
            raise ValueError(f"point is not on the unit sphere (norm {nv!r})")
        object.__setattr__(self, "v", v)

    @classmethod
    def normalize(cls, w) -> "SpherePoint":
        w = np.asarray(w, dtype=float).ravel()
        return cls(w / np.linalg.norm(w))


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: SpherePoint
    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).ravel()
        if abs(self.base.v @ xi) > 1e-10 * max(1.0, np.linalg.norm(xi)):
            raise ValueError("vector is not tangent at its base point")
        object.__setattr__(self, "xi", xi)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.xi))


def _as_point(v) -> SpherePoint:
    return v if isinstance(v, SpherePoint) else SpherePoint(v)


def tangent_project(v, w) -> TangentVector:
    """(I - v v') w."""
    p = _as_point(v)
    w = np.asarray(w, dtype=float).ravel()
    xi = w - (p.v @ w) * p.v
    # one refinement pass removes the rounding left by the first projection
    xi = xi - (p.v @ xi) * p.v
    return TangentVector(p, xi)


def exp_map(v, xi) -> SpherePoint:
    p = _as_point(v)
    x = xi.xi if isinstance(xi, TangentVector) else np.asarray(xi, dtype=float).ravel()
    t = np.linalg.norm(x)
    if t < SMALL_ANGLE:
        return p
    w = p.v * np.cos(t) + (x / t) * np.sin(t)
    return SpherePoint(w / np.linalg.norm(w))


def log_map(v, w) -> TangentVector:
    """Inverse of :func:`exp_map`; undefined at the antipode."""
    p, o = _as_point(v), _as_point(w)
    c = float(np.clip(p.v @ o.v, -1.0, 1.0))
    # arctan2 keeps full precision for small and near-pi angles
    perp = o.v - c * p.v
    s = np.linalg.norm(perp)
    theta = float(np.arctan2(s, c))
    if theta >= np.pi - 1e-8:
        raise AntipodalPoint("log map is undefined for antipodal points")
    if theta < SMALL_ANGLE:
        return TangentVector(p, np.zeros_like(p.v))
    xi = perp * (theta / s)
    xi = xi - (p.v @ xi) * p.v
    return TangentVector(p, xi)


def geodesic(v, xi, t: float) -> SpherePoint:
    """Point at time ``t`` along the geodesic from ``v`` with velocity ``xi``."""
    x = xi.xi if isinstance(xi, TangentVector) else np.asarray(xi, dtype=float)
    return exp_map(v, t * x)


def geodesic_distance(v, w) -> float:
    p, o = _as_point(v), _as_point(w)
    c = float(np.clip(p.v @ o.v, -1.0, 1.0))
    return float(np.arctan2(np.linalg.norm(o.v - c * p.v), c))


@dataclass(frozen=True, eq=False)
class BlockProjector:
    """Block-diagonal projector diag(I - v_1 v_1', ..., I - v_r v_r', I_{p(r-1)}).

    Acts on stacked vectors (or the rows of stacked Jacobians) ordered as the
    r sphere blocks of length q followed by a free Euclidean block.
    """

    v: np.ndarray
    free_dim: int

    @property
    def q(self) -> int:
        return self.v.shape[0]

    @property
    def dim(self) -> int:
        return self.v.size + self.free_dim

    def apply(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.array(z, copy=True)
        q = self.q
        for i in range(self.v.shape[1]):
            vi = self.v[:, i]
            blk = z[i * q:(i + 1) * q]
            out[i * q:(i + 1) * q] = blk - np.outer(vi, vi @ blk) if blk.ndim > 1 else blk - (vi @ blk) * vi
        return out

    def matrix(self) -> np.ndarray:
        return self.apply(np.eye(self.dim))


def manifold_gradient_blocks(v_set, free_dim: int = 0) -> BlockProjector:
    if isinstance(v_set, np.ndarray):
        v = v_set if v_set.ndim == 2 else v_set[:, None]
    else:
        v = np.column_stack([_as_point(a).v for a in v_set])
    return BlockProjector(v, int(free_dim))
