"""Coordinate-descent Lasso and the nodewise-Lasso approximate inverse of the Gram matrix."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import RegressionData
from .errors import DegenerateColumn, NonConvergenceWarning


@dataclass
class LassoProblem:
    """min_g (2n)^-1 ||b - a g||^2 + lam ||g||_1."""

    a: np.ndarray
    b: np.ndarray
    lam: float
    max_iter: int = 1000
    tol: float = 1e-8

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.a.ndim != 2 or self.a.shape[0] != self.b.size:
            raise ValueError("a must be n x m and b length n")
        if np.any(np.asarray(self.lam) < 0):
            raise ValueError("lam must be non-negative")


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_gram(gram, c, lam, beta0=None, max_iter=1000, tol=1e-8):
    """Cyclic coordinate descent on 0.5 b'Gb - c'b + sum_j lam_j |b_j|.

    Returns ``(beta, converged, sweeps)``. ``lam`` may be a scalar or a
    per-coordinate vector. Coordinates with zero curvature stay at zero.
    """
    gram = np.asarray(gram, dtype=float)
    c = np.asarray(c, dtype=float)
    m = c.size
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (m,))
    beta = np.zeros(m) if beta0 is None else np.array(beta0, dtype=float)
    diag = np.diag(gram).copy()
    grad = c - gram @ beta  # c - G beta, kept in sync
    live = np.flatnonzero(diag > 1e-14)
    beta[diag <= 1e-14] = 0.0
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_change = 0.0
        for j in live:
            bj = beta[j]
            rho = grad[j] + diag[j] * bj
            if rho > lam[j]:
                new = (rho - lam[j]) / diag[j]
            elif rho < -lam[j]:
                new = (rho + lam[j]) / diag[j]
            else:
                new = 0.0
            delta = new - bj
            if delta != 0.0:
                beta[j] = new
                grad -= gram[:, j] * delta
                ad = abs(delta)
                if ad > max_change:
                    max_change = ad
        if max_change < tol:
            converged = True
            break
    return beta, converged, sweeps


def lasso_objective(a, b, beta, lam) -> float:
    n = a.shape[0]
    r = b - a @ beta
    return float(r @ r / (2 * n) + np.sum(lam * np.abs(beta)))


def lasso_cd(prob: LassoProblem) -> np.ndarray:
    """Solve a :class:`LassoProblem` by cyclic coordinate descent.

    Emits :class:`NonConvergenceWarning` and returns the last iterate when
    ``max_iter`` sweeps do not bring the coefficient change below ``tol``.
    """
    n = prob.a.shape[0]
    gram = prob.a.T @ prob.a / n
    c = prob.a.T @ prob.b / n
    beta, ok, _ = lasso_gram(gram, c, prob.lam, max_iter=prob.max_iter, tol=prob.tol)
    if not ok:
        warnings.warn(f"lasso_cd stopped after {prob.max_iter} sweeps", NonConvergenceWarning)
    return beta


@dataclass(frozen=True, eq=False)
class ApproxInverse:
    theta: np.ndarray
    max_violation: float
    row_sparsity: int
    row_norm_max: float
    lambdas: np.ndarray | None = None


def default_node_lambda(data: RegressionData, const: float = 0.5) -> np.ndarray:
    """const * sqrt(log p / n) * sd(X_j) for every column."""
    sd = np.sqrt(np.diag(data.gram))
    return const * np.sqrt(np.log(data.p) / data.n) * sd


def _node(gram, j, lam, max_iter, tol):
    idx = np.delete(np.arange(gram.shape[0]), j)
    g = gram[np.ix_(idx, idx)]
    c = gram[idx, j]
    gamma, ok, _ = lasso_gram(g, c, lam, max_iter=max_iter, tol=tol)
    tau2 = gram[j, j] - c @ gamma
    return idx, gamma, tau2, ok


def _cv_node_lambda(x, j, grid, folds, max_iter, tol):
    n = x.shape[0]
    fold_id = np.arange(n) % folds
    err = np.zeros(len(grid))
    for f in range(folds):
        tr, te = fold_id != f, fold_id == f
        gram = x[tr].T @ x[tr] / tr.sum()
        idx = np.delete(np.arange(x.shape[1]), j)
        g = gram[np.ix_(idx, idx)]
        c = gram[idx, j]
        beta = None
        for i, lam in enumerate(grid):  # descending grid, warm starts
            beta, _, _ = lasso_gram(g, c, lam, beta0=beta, max_iter=max_iter, tol=tol)
            res = x[te, j] - x[te][:, idx] @ beta
            err[i] += res @ res
    return grid[int(np.argmin(err))]


def nodewise_precision(data: RegressionData, lambda_rule=None, s_max=None, order=None,
                       max_iter=1000, tol=1e-8, cv_folds=5) -> ApproxInverse:
    """Approximate inverse of X'X/n from p nodewise Lasso regressions.

    Parameters
    ----------
    lambda_rule : None, float, array of length p, callable ``f(j, data)`` or ``"cv"``
        Penalty per node. ``None`` uses :func:`default_node_lambda`.
    s_max : int, optional
        Keep only the ``s_max`` largest-magnitude entries of each row.
    order : sequence, optional
        Processing order of the nodes; results are merged by node index.
    """
    p = data.p
    if p < 2:
        raise ValueError("nodewise regression needs p >= 2")
    gram = data.gram
    if lambda_rule is None:
        lams = default_node_lambda(data)
    elif isinstance(lambda_rule, str):
        if lambda_rule != "cv":
            raise ValueError(f"unknown lambda rule {lambda_rule!r}")
        base = default_node_lambda(data)
        mult = np.geomspace(8.0, 0.05, 20)
        lams = np.array([_cv_node_lambda(data.x, j, base[j] * mult, cv_folds, max_iter, tol)
                         for j in range(p)])
    elif callable(lambda_rule):
        lams = np.array([float(lambda_rule(j, data)) for j in range(p)])
    else:
        lams = np.broadcast_to(np.asarray(lambda_rule, dtype=float), (p,)).copy()

    theta = np.zeros((p, p))
    order = range(p) if order is None else order
    failed = []
    for j in order:
        idx, gamma, tau2, ok = _node(gram, j, lams[j], max_iter, tol)
        if tau2 <= 1e-12:
            raise DegenerateColumn(f"column {j} is (numerically) collinear with the others")
        if not ok:
            failed.append(j)
        row = np.empty(p)
        row[j] = 1.0
        row[idx] = -gamma
        theta[j] = row / tau2
    if failed:
        warnings.warn(f"nodewise lasso did not converge for nodes {failed}", NonConvergenceWarning)
    if s_max is not None:
        theta = _keep_largest(theta, int(s_max))
    diag = check_approximate_inverse(theta, data)
    return ApproxInverse(theta, diag.max_violation, diag.row_sparsity, diag.row_norm_max, lams)


def _keep_largest(theta, s):
    out = np.zeros_like(theta)
    for j, row in enumerate(theta):
        keep = np.argsort(-np.abs(row), kind="stable")[:s]
        out[j, keep] = row[keep]
    return out


@dataclass(frozen=True)
class InverseDiagnostics:
    max_violation: float
    row_sparsity: int
    row_norm_max: float


def check_approximate_inverse(theta, data: RegressionData) -> InverseDiagnostics:
    """Report ||I - theta Sigma||_max, max row support and max row 2-norm."""
    theta = np.asarray(theta, dtype=float)
    viol = np.max(np.abs(np.eye(theta.shape[0]) - theta @ data.gram))
    spars = int(np.max(np.count_nonzero(theta, axis=1)))
    rnorm = float(np.max(np.linalg.norm(theta, axis=1)))
    return InverseDiagnostics(float(viol), spars, rnorm)
