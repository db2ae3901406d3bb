"""Noise covariance from residuals with entry-adaptive thresholding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RegressionData


@dataclass(frozen=True, eq=False)
class ErrorCovEstimate:
    sigma: np.ndarray
    delta: float
    kept_fraction: float
    raw: np.ndarray | None = None  # unthresholded sample covariance, when available


def residuals(data: RegressionData, estimate) -> np.ndarray:
    """Y - X C for a SofarEstimate (or any object with ``c_tilde``) or a plain matrix."""
    c = getattr(estimate, "c_tilde", estimate)
    return data.y - data.x @ np.asarray(c, dtype=float)


def adaptive_threshold_cov(e_hat, delta: float = 2.0) -> ErrorCovEstimate:
    """Sample covariance S = E'E/n with off-diagonals s_ij kept only when
    |s_ij| >= delta * sqrt(theta_ij * log q / n), theta_ij the variance of e_i e_j."""
    e = np.asarray(e_hat, dtype=float)
    if e.ndim == 1:
        e = e[:, None]
    n, q = e.shape
    if n < 2:
        raise ValueError("need at least two residual rows")
    s = e.T @ e / n
    prod = e[:, :, None] * e[:, None, :]
    theta = np.mean((prod - s) ** 2, axis=0)
    thr = delta * np.sqrt(theta * np.log(q) / n) if q > 1 else np.zeros_like(s)
    keep = np.abs(s) >= thr
    np.fill_diagonal(keep, True)
    out = np.where(keep, s, 0.0)
    out = (out + out.T) / 2
    off = q * (q - 1)
    kept = float((keep.sum() - q) / off) if off else 1.0
    return ErrorCovEstimate(out, float(delta), kept, s)


def oracle_error_cov(sim) -> ErrorCovEstimate:
    """True sigma^2 * Sigma_E of a simulated instance (for testing variance formulas)."""
    s = np.array(sim.sigma_e, copy=True)
    return ErrorCovEstimate(s, 0.0, 1.0, s)
