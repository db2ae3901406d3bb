"""Regression data, SVD parametrization, the constrained least-squares loss
and its analytic gradients.

Layer indices are 0-based throughout the Python API.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import ConstraintViolation

ORTH_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Design ``x`` (n x p) and responses ``y`` (n x q).

    ``gram`` (X'X/n) and ``xty`` (X'Y/n) are computed once on first access.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 2 or y.ndim != 2:
            raise ValueError("x and y must be 2-d arrays")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"row mismatch: x has {x.shape[0]} rows, y has {y.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.y.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        g = self.x.T @ self.x / self.n
        return (g + g.T) / 2

    @cached_property
    def xty(self) -> np.ndarray:
        return self.x.T @ self.y / self.n

    def subset(self, rows) -> "RegressionData":
        return RegressionData(self.x[rows], self.y[rows])


def canonical_signs(l, v):
    """Flip each (l_k, v_k) pair so the largest-magnitude entry of v_k is positive."""
    l = np.array(l, dtype=float, copy=True)
    v = np.array(v, dtype=float, copy=True)
    for k in range(v.shape[1]):
        j = np.argmax(np.abs(v[:, k]))
        if v[j, k] < 0:
            l[:, k] *= -1
            v[:, k] *= -1
    return l, v


@dataclass(frozen=True, eq=False)
class SvdTriple:
    """Exact SVD factorization C = L diag(d) V'.

    Invariants (checked on construction unless ``check=False``): orthonormal
    columns of ``l`` and ``v`` and strictly decreasing positive ``d``.
    """

    l: np.ndarray
    d: np.ndarray
    v: np.ndarray
    check: bool = field(default=True, repr=False)
    gap_tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        l = np.atleast_2d(np.asarray(self.l, dtype=float))
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if l.shape[1] != d.size or v.shape[1] != d.size:
            raise ValueError("l, d, v disagree on the rank")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "d", d)
        if self.check:
            self.validate()

    def validate(self, tol: float = 1e-10):
        r = self.r
        if r < 1:
            raise ValueError("rank must be at least 1")
        eye = np.eye(r)
        if np.max(np.abs(self.l.T @ self.l - eye)) > tol:
            raise ConstraintViolation("left singular vectors are not orthonormal")
        if np.max(np.abs(self.v.T @ self.v - eye)) > tol:
            raise ConstraintViolation("right singular vectors are not orthonormal")
        if np.any(self.d <= 0):
            raise ValueError("singular values must be positive")
        if r > 1 and np.any(np.diff(self.d) >= -self.gap_tol):
            raise ValueError("singular values must be strictly decreasing")

    @property
    def r(self) -> int:
        return self.d.size

    @property
    def u(self) -> np.ndarray:
        """Scaled left factors U = L diag(d)."""
        return self.l * self.d

    @classmethod
    def from_matrix(cls, c, rank=None, tol=1e-12) -> "SvdTriple":
        """Thin SVD of ``c`` truncated to ``rank`` (default: numerical rank)."""
        c = np.asarray(c, dtype=float)
        lf, s, vt = np.linalg.svd(c, full_matrices=False)
        if rank is None:
            rank = int(np.sum(s > tol * max(s[0], 1e-300))) if s.size else 0
        rank = max(int(rank), 1)
        l, v = canonical_signs(lf[:, :rank], vt[:rank].T)
        return cls(l, s[:rank], v)

    @classmethod
    def from_factors(cls, u, v) -> "SvdTriple":
        """Triple from scaled left factors ``u`` (p x r) and orthonormal ``v``."""
        u = np.asarray(u, dtype=float)
        d = np.linalg.norm(u, axis=0)
        order = np.argsort(-d, kind="stable")
        l = u[:, order] / d[order]
        l, vv = canonical_signs(l, np.asarray(v, dtype=float)[:, order])
        return cls(l, d[order], vv)


def compose_coefficient(t: SvdTriple) -> np.ndarray:
    """Return sum_k d_k l_k v_k'."""
    return (t.l * t.d) @ t.v.T


class Variant(str, Enum):
    STRONG = "strong"
    WEAK = "weak"
    SPLIT = "split"


@dataclass(frozen=True, eq=False)
class NuisanceView:
    """Nuisance parameters seen by layer ``k``.

    Strong: every other u_i and all v_i. Weak: layers k..r plus the frozen
    surrogate ``c1_hat`` of the first k layers (zero for k = 0).
    """

    k: int
    variant: Variant
    u: np.ndarray
    v: np.ndarray
    c1_hat: np.ndarray

    @property
    def u_others(self) -> np.ndarray:
        if self.variant is Variant.WEAK:
            return self.u[:, self.k + 1:]
        return np.delete(self.u, self.k, axis=1)

    @property
    def v_others(self) -> np.ndarray:
        if self.variant is Variant.WEAK:
            return self.v[:, self.k:]
        return self.v


def nuisance_view(u_set, v_set, k: int, variant=Variant.STRONG) -> NuisanceView:
    u = _stack(u_set)
    v = _stack(v_set)
    variant = Variant(variant)
    if variant is Variant.WEAK:
        c1 = u[:, :k] @ v[:, :k].T
    else:
        c1 = np.zeros((u.shape[0], v.shape[0]))
    return NuisanceView(k, variant, u, v, c1)


def _stack(vecs) -> np.ndarray:
    if isinstance(vecs, np.ndarray):
        return vecs[:, None] if vecs.ndim == 1 else vecs
    return np.column_stack([np.asarray(a, dtype=float) for a in vecs])


def _check_v(v: np.ndarray, tol=ORTH_TOL):
    dev = np.max(np.abs(v.T @ v - np.eye(v.shape[1])))
    if dev > tol:
        raise ConstraintViolation(f"v_set deviates from orthonormality by {dev:.3g}")


def loss(data: RegressionData, u_set, v_set) -> float:
    """(2n)^-1 ||Y - sum_i X u_i v_i'||_F^2 with orthonormal v_i."""
    u, v = _stack(u_set), _stack(v_set)
    _check_v(v)
    resid = data.y - data.x @ (u @ v.T)
    return float(np.sum(resid**2) / (2 * data.n))


def grad_u(data: RegressionData, u_set, v_set, k: int) -> np.ndarray:
    u, v = _stack(u_set), _stack(v_set)
    _check_v(v)
    return data.gram @ u[:, k] - data.xty @ v[:, k]


def grad_v(data: RegressionData, u_set, v_set, k: int) -> np.ndarray:
    u, v = _stack(u_set), _stack(v_set)
    _check_v(v)
    uk = u[:, k]
    return v[:, k] * (uk @ data.gram @ uk) - data.xty.T @ uk


def grad_u_peeled(data: RegressionData, view: NuisanceView, u_set, v_set, k: int) -> np.ndarray:
    """Derivative in u_k of the loss with the first k layers replaced by ``view.c1_hat``."""
    u, v = _stack(u_set), _stack(v_set)
    _check_v(v[:, k:])
    vk = v[:, k]
    return data.gram @ u[:, k] - data.xty @ vk + data.gram @ (view.c1_hat @ vk)


def grad_v_peeled(data: RegressionData, view: NuisanceView, u_set, v_set, k: int) -> np.ndarray:
    u, v = _stack(u_set), _stack(v_set)
    _check_v(v[:, k:])
    uk = u[:, k]
    su = data.gram @ uk
    return v[:, k] * (uk @ su) - data.xty.T @ uk + view.c1_hat.T @ su
