"""Confidence intervals, standardized statistics, p-values, BH selection,
Monte-Carlo coverage summaries and KDE export."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, ndtri

from .datagen import Design, SimSetting, gen_instance
from .debias import SofariConfig, run_sofari


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    center: float
    half_width: float

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    @property
    def length(self) -> float:
        return self.upper - self.lower


def z_quantile(alpha: float) -> float:
    """z_{1 - alpha/2}."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return float(ndtri(1 - alpha / 2))


def ci(center: float, variance: float, n: int, alpha: float = 0.05) -> ConfidenceInterval:
    """center +- z_{1-alpha/2} sqrt(variance / n)."""
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    if n < 1:
        raise ValueError("n must be positive")
    hw = float(z_quantile(alpha) * np.sqrt(variance / n))
    center = float(center)
    return ConfidenceInterval(center - hw, center + hw, 1 - alpha, center, hw)


def standardized_stat(est_value, true_value, variance, n):
    """T = sqrt(n) (est - true) / sqrt(variance); vectorized."""
    return np.sqrt(n) * (np.asarray(est_value) - np.asarray(true_value)) / np.sqrt(variance)


def pvalue_two_sided(t):
    """2 (1 - Phi(|t|)) computed as erfc(|t| / sqrt 2) to avoid cancellation."""
    return erfc(np.abs(np.asarray(t, dtype=float)) / np.sqrt(2.0))


def bh_fdr(pvals, q: float) -> list[int]:
    """Benjamini-Hochberg step-up selection; returns sorted original indices."""
    p = np.asarray(pvals, dtype=float).ravel()
    m = p.size
    if m == 0:
        return []
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    order = np.argsort(p, kind="stable")
    ok = np.flatnonzero(p[order] <= q * np.arange(1, m + 1) / m)
    if ok.size == 0:
        return []
    return sorted(int(i) for i in order[: ok[-1] + 1])


@dataclass(frozen=True)
class Component:
    """A tabulated quantity: coordinate ``j`` of u_k, or d_k^2 when ``j`` is None."""

    k: int
    j: int | None = None

    @property
    def label(self) -> str:
        return f"d2_{self.k + 1}" if self.j is None else f"u_{self.k + 1},{self.j + 1}"


def table_components(setting: SimSetting) -> list[Component]:
    """Per layer: the block of nonzero coordinates, the last block of (zero)
    coordinates, then d_k^2."""
    if setting.design is Design.WEAKLY_SPARSE:
        starts, s = (0, 16, 32), 8
    else:
        s = setting.s1
        starts = tuple(k * s for k in range(setting.r))
    out = []
    for k in range(setting.r):
        out += [Component(k, j) for j in range(starts[k], starts[k] + s)]
        out += [Component(k, j) for j in range(setting.p - s, setting.p)]
        out.append(Component(k))
    return out


@dataclass
class CoverageSummary:
    component: str
    covered: int
    len_sum: float
    replications: int

    @property
    def cp(self) -> float:
        return self.covered / self.replications if self.replications else float("nan")

    @property
    def mean_len(self) -> float:
        return self.len_sum / self.replications if self.replications else float("nan")


@dataclass(frozen=True, eq=False)
class RepRecord:
    """Per-replication outcome for every tabulated component (NaN when a layer failed)."""

    rep: int
    center: np.ndarray
    truth: np.ndarray
    variance: np.ndarray
    n: int


@dataclass(eq=False)
class CoverageResult:
    components: list
    summaries: list
    records: list = field(repr=False)
    alpha: float = 0.05
    failed: int = 0

    def stats(self) -> np.ndarray:
        """reps x components matrix of standardized statistics."""
        return np.array([standardized_stat(r.center, r.truth, r.variance, r.n) for r in self.records])

    def rows(self):
        for s in self.summaries:
            yield s.component, s.cp, s.mean_len, s.replications


def _one_rep(args):
    setting, cfg, rep, comps = args
    sim = gen_instance(setting, rep)
    res = run_sofari(sim.data, cfg)
    n_eff = res.data.n
    c = np.full(len(comps), np.nan)
    t = np.full(len(comps), np.nan)
    v = np.full(len(comps), np.nan)
    layers = {L.k: L for L in res.layers if L.ok}
    u_star, d_star = sim.truth.u, sim.truth.d
    u_init = res.estimate.u
    for i, comp in enumerate(comps):
        L = layers.get(comp.k)
        if L is None or comp.k >= u_init.shape[1]:
            continue
        if comp.j is None:
            c[i], t[i], v[i] = L.d2_hat, d_star[comp.k] ** 2, L.var_d2
        else:
            sign = 1.0 if u_init[:, comp.k] @ u_star[:, comp.k] >= 0 else -1.0
            c[i], t[i], v[i] = L.u_hat[comp.j], sign * u_star[comp.j, comp.k], L.var_u[comp.j]
    return RepRecord(rep, c, t, v, n_eff)


def summarize(records, comps, alpha) -> list[CoverageSummary]:
    z = z_quantile(alpha)
    out = []
    for i, comp in enumerate(comps):
        covered, len_sum, reps = 0, 0.0, 0
        for r in records:
            if not (np.isfinite(r.center[i]) and r.variance[i] > 0):
                continue
            hw = z * np.sqrt(r.variance[i] / r.n)
            covered += int(abs(r.center[i] - r.truth[i]) <= hw)
            len_sum += 2 * hw
            reps += 1
        out.append(CoverageSummary(comp.label, covered, len_sum, reps))
    return out


def coverage_run(setting: SimSetting, cfg: SofariConfig | None, replications: int,
                 alpha: float = 0.05, workers: int = 1) -> CoverageResult:
    """Simulate, fit and debias ``replications`` independent instances.

    Replication ``i`` draws from its own spawned stream, so results do not
    depend on ``workers`` or on scheduling order.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    z_quantile(alpha)
    cfg = cfg or SofariConfig()
    comps = table_components(setting)
    jobs = [(setting, cfg, rep, comps) for rep in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            records = list(ex.map(_one_rep, jobs, chunksize=max(1, replications // (4 * workers))))
    else:
        records = [_one_rep(j) for j in jobs]
    failed = sum(int(np.any(~np.isfinite(r.center))) for r in records)
    return CoverageResult(comps, summarize(records, comps, alpha), records, alpha, failed)


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    sd = np.std(x, ddof=1) if x.size > 1 else 0.0
    return 1.06 * sd * x.size ** (-0.2) if sd > 0 else 1.0


def kde_export(samples, grid_points: int = 512, lo=None, hi=None, bandwidth=None):
    """Gaussian-kernel density on an even grid; default grid spans the data +- 4 bandwidths."""
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("no finite samples")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    lo = x.min() - 4 * h if lo is None else lo
    hi = x.max() + 4 * h if hi is None else hi
    grid = np.linspace(lo, hi, grid_points)
    dens = np.zeros(grid_points)
    for chunk in np.array_split(x, max(1, x.size // 2048)):
        dens += np.exp(-0.5 * ((grid[:, None] - chunk[None, :]) / h) ** 2).sum(axis=1)
    dens /= x.size * h * np.sqrt(2 * np.pi)
    return grid, dens


def coverage_tsv(result: CoverageResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["component", "CP", "Len", "reps"])
    for comp, cp, ln, reps in result.rows():
        w.writerow([comp, f"{cp:.3f}", f"{ln:.3f}", reps])
    return buf.getvalue()


def kde_csv(grid, dens) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "density"])
    for a, b in zip(grid, dens):
        w.writerow([repr(float(a)), repr(float(b))])
    return buf.getvalue()
