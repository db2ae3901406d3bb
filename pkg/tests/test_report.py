import warnings
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from sofari.datagen import preset
from sofari.debias import SofariConfig
from sofari.errors import NonConvergenceWarning
from sofari.report import (Component, bh_fdr, ci, coverage_run, coverage_tsv, kde_csv, kde_export,
                           pvalue_two_sided, silverman_bandwidth, standardized_stat, table_components,
                           z_quantile)

from oracles import bh_bruteforce

# tabulated standard-normal quantiles
QUANTILE_TABLE = {0.10: 1.6448536269514722, 0.05: 1.959963984540054, 0.01: 2.5758293035489004}


def test_ci_half_width_matches_table():
    for alpha, z in QUANTILE_TABLE.items():
        c = ci(0.0, 1.0, 1, alpha)
        assert abs(c.half_width - z) <= 1e-8
    assert abs(ci(0.0, 1.0, 1).half_width - 1.959964) <= 1e-5


def test_ci_symmetric_and_contains_center():
    c = ci(3.0, 2.0, 50, 0.1)
    assert abs((c.upper - c.center) - (c.center - c.lower)) <= 1e-15
    assert c.contains(3.0) and c.lower <= c.upper
    assert abs(c.length - 2 * c.half_width) <= 1e-15
    assert c.level == pytest.approx(0.9)


def test_ci_width_vanishes_as_alpha_goes_to_one():
    assert ci(0.0, 1.0, 1, 1 - 1e-9).half_width < 1e-8


def test_ci_rejects_bad_input():
    for args in ((0.0, 0.0, 1), (0.0, -1.0, 1), (0.0, 1.0, 0)):
        with pytest.raises(ValueError):
            ci(*args)
    for alpha in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            z_quantile(alpha)


def test_standardized_stat():
    assert standardized_stat(2.0, 2.0, 1.0, 10) == 0.0
    t1 = standardized_stat(2.5, 2.0, 1.0, 16)
    assert standardized_stat(2.5, 2.0, 4.0, 16) == pytest.approx(t1 / 2)
    assert t1 == pytest.approx(2.0)


def test_pvalue_against_normal_cdf():
    nd = NormalDist()
    assert pvalue_two_sided(0.0) == 1.0
    assert abs(pvalue_two_sided(1.959964) - 0.05) <= 1e-5
    for t in np.linspace(-6, 6, 97):
        assert abs(pvalue_two_sided(t) - 2 * (1 - nd.cdf(abs(t)))) <= 1e-10


@given(st.floats(0, 30), st.floats(0, 30))
def test_pvalue_monotone_in_abs_t(a, b):
    lo, hi = sorted((a, b))
    assert pvalue_two_sided(hi) <= pvalue_two_sided(lo)
    assert pvalue_two_sided(-a) == pvalue_two_sided(a)


def test_bh_small_cases():
    assert bh_fdr([1.0] * 5, 0.05) == []
    assert bh_fdr([0.01], 0.05) == [0]
    assert bh_fdr([], 0.1) == []
    # step-up: the third p-value passes, so the second is selected although it fails its own bound
    assert bh_fdr([0.2, 0.035, 0.03, 0.9], 0.1) == [1, 2]


def bh_oracle_suite(n_vectors=1000, seed=0):
    g = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_vectors):
        m = int(g.integers(1, 40))
        p = g.uniform(size=m) ** float(g.uniform(0.5, 4))
        if g.uniform() < 0.3:
            p = np.round(p, 2)  # exercise ties
        q = float(g.uniform(0.01, 0.3))
        mismatches += bh_fdr(p, q) != bh_bruteforce(list(p), q)
    return mismatches


def test_bh_matches_bruteforce():
    assert bh_oracle_suite() == 0


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.001, 0.5), st.floats(0.001, 0.5))
def test_bh_nested_in_q(p, q1, q2):
    lo, hi = sorted((q1, q2))
    assert set(bh_fdr(p, lo)) <= set(bh_fdr(p, hi))


def test_kde_normal_samples():
    x = np.random.default_rng(0).standard_normal(10000)
    grid, dens = kde_export(x, 801, -4, 4)
    ref = np.exp(-grid**2 / 2) / np.sqrt(2 * np.pi)
    assert np.abs(dens - ref).max() <= 0.03


def test_kde_integrates_to_one():
    x = np.random.default_rng(1).gamma(2.0, size=3000)
    grid, dens = kde_export(x, 2048)
    assert abs(trapezoid(dens, grid) - 1) <= 1e-3


def test_kde_single_point_is_kernel():
    grid, dens = kde_export([0.5], 401, -3.5, 4.5, bandwidth=1.0)
    ref = np.exp(-0.5 * (grid - 0.5) ** 2) / np.sqrt(2 * np.pi)
    np.testing.assert_allclose(dens, ref, atol=1e-15)


def test_kde_bandwidth_scales_with_data():
    x = np.random.default_rng(2).standard_normal(500)
    assert silverman_bandwidth(3 * x) == pytest.approx(3 * silverman_bandwidth(x))
    assert silverman_bandwidth(x) == pytest.approx(1.06 * np.std(x, ddof=1) * 500 ** -0.2)
    g1, d1 = kde_export(x, 300)
    g3, d3 = kde_export(3 * x, 300)
    np.testing.assert_allclose(g3, 3 * g1, rtol=1e-12)
    np.testing.assert_allclose(d3, d1 / 3, rtol=1e-10)


def test_kde_rejects_empty():
    with pytest.raises(ValueError):
        kde_export([np.nan])


def test_kde_csv_layout():
    text = kde_csv([0.0, 1.0], [0.4, 0.2]).splitlines()
    assert text == ["x,density", "0.0,0.4", "1.0,0.2"]


def test_table_components_layout():
    labels = [c.label for c in table_components(preset(1))]
    assert len(labels) == 21
    assert labels[:7] == ["u_1,1", "u_1,2", "u_1,3", "u_1,23", "u_1,24", "u_1,25", "d2_1"]
    assert labels[7:10] == ["u_2,4", "u_2,5", "u_2,6"]
    assert len(table_components(preset(3))) == 33
    assert Component(2).label == "d2_3"


def _small_run(reps=4, workers=1):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        return coverage_run(preset(1, seed=11), SofariConfig(), reps, workers=workers)


def test_coverage_deterministic_and_recounted():
    a = _small_run()
    b = _small_run()
    assert coverage_tsv(a) == coverage_tsv(b)
    # recount containment directly from the stored records
    for i, s in enumerate(a.summaries):
        covered = lens = 0
        for r in a.records:
            c = ci(r.center[i], r.variance[i], r.n, a.alpha)
            covered += c.contains(r.truth[i])
            lens += c.length
        assert s.covered == covered and s.replications == 4
        assert s.cp == covered / 4
        assert s.mean_len == pytest.approx(lens / 4, rel=1e-12)


def test_coverage_independent_of_workers():
    assert coverage_tsv(_small_run(3, 1)) == coverage_tsv(_small_run(3, 2))


def test_coverage_rejects_zero_reps():
    with pytest.raises(ValueError):
        coverage_run(preset(1), SofariConfig(), 0)


def test_coverage_tsv_layout():
    lines = coverage_tsv(_small_run(2)).splitlines()
    assert lines[0] == "component\tCP\tLen\treps"
    assert len(lines) == 22
    name, cp, ln, reps = lines[-1].split("\t")
    assert name == "d2_3" and reps == "2" and len(cp.split(".")[1]) == 3
