import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from sofari.core import RegressionData
from sofari.datagen import SimSetting, ar1, gen_instance, preset
from sofari.errcov import adaptive_threshold_cov, oracle_error_cov, residuals
from sofari.sofar import SofarConfig, fit_sofar


def test_residual_literal(rng):
    data = RegressionData(rng.standard_normal((12, 4)), rng.standard_normal((12, 3)))
    c = rng.standard_normal((4, 3))
    np.testing.assert_allclose(residuals(data, c), data.y - data.x @ c, atol=1e-14)
    np.testing.assert_array_equal(residuals(data, np.zeros((4, 3))), data.y)


def test_residual_zero_at_truth():
    sim = gen_instance(preset(1))
    data = RegressionData(sim.data.x, sim.data.x @ sim.c_star)
    assert np.max(np.abs(residuals(data, sim.c_star))) < 1e-10


def test_delta_zero_keeps_sample_cov(rng):
    e = rng.standard_normal((50, 6))
    est = adaptive_threshold_cov(e, 0.0)
    np.testing.assert_allclose(est.sigma, e.T @ e / 50, atol=1e-15)
    assert est.kept_fraction == 1.0


def test_scalar_case(rng):
    e = rng.standard_normal(40)
    est = adaptive_threshold_cov(e)
    assert est.sigma.shape == (1, 1)
    assert abs(est.sigma[0, 0] - e @ e / 40) < 1e-14


def test_diagonal_truth_thresholds_everything(rng):
    e = rng.standard_normal((2000, 10)) * np.sqrt(np.arange(1, 11))
    est = adaptive_threshold_cov(e, 2.0)
    assert est.kept_fraction <= 0.05
    assert np.all(np.diag(est.sigma) > 0)


@given(st.integers(0, 10000))
def test_symmetric_and_monotone_in_delta(seed):
    g = np.random.default_rng(seed)
    e = g.standard_normal((60, 5)) @ (np.eye(5) + 0.5 * g.standard_normal((5, 5)))
    kept = [adaptive_threshold_cov(e, d) for d in (0.0, 0.5, 1.0, 2.0, 4.0)]
    for k in kept:
        assert np.max(np.abs(k.sigma - k.sigma.T)) <= 1e-12
    fr = [k.kept_fraction for k in kept]
    assert all(a >= b for a, b in zip(fr, fr[1:]))


def test_oracle_passthrough():
    sim = gen_instance(preset(1))
    oc = oracle_error_cov(sim)
    np.testing.assert_array_equal(oc.sigma, sim.sigma_e)
    np.testing.assert_allclose(oc.sigma, sim.noise_scale * ar1(15, 0.3))


def test_consistency_improves_with_n():
    med = []
    for n in (200, 800, 3200):
        errs = []
        for s in range(20):
            sim = gen_instance(SimSetting(n=n, seed=s))
            est = fit_sofar(sim.data, SofarConfig(rank=3))
            sig = adaptive_threshold_cov(residuals(sim.data, est)).sigma
            errs.append(np.linalg.norm(sig - sim.sigma_e, 2) / np.linalg.norm(sim.sigma_e, 2))
        med.append(np.median(errs))
    assert med[0] > med[1] > med[2]
