import numpy as np
import pytest

from ivqr import instruments
from ivqr.models import (
    ClusteredDataset, DegenerateInstrument, EmptyCluster, InstrumentRecipe, SmallClusterWarning, ValidationError)


def direct_h1(dataset, tau, residuals):
    """Full sample h1 evaluated observation by observation."""
    n = dataset.n
    quantile = instruments.stats.norm.ppf(tau)
    q = (1.0 - quantile) ** 2 * np.exp(-0.5 * quantile ** 2) / np.sqrt(2.0 * np.pi)
    mean = sum(residuals) / n
    scale = np.sqrt(sum((e - mean) ** 2 for e in residuals) / (n - 1))
    fourth = 0.0
    second = np.zeros((dataset.d_w, dataset.d_w))
    for i in range(n):
        w = dataset.w[i]
        fourth += dataset.v[i] * float(w @ w) ** 2 / n
        second += dataset.v[i] * np.outer(w, w) / n
    return scale * (4.5 * fourth / (q * np.sum(second ** 2))) ** 0.2 * n ** -0.2


def test_q_tau_at_the_median():
    assert instruments.q_tau(0.5) == pytest.approx(0.398942, abs=1e-6)


def test_h1_matches_direct_evaluation(make_design):
    for seed in range(20):
        dataset = make_design(n=60, J=4, seed=seed)
        residuals = np.random.default_rng(100 + seed).normal(size=dataset.n)
        zhat = instruments.fitted_first_stage(dataset)
        h1 = instruments.rule_of_thumb_bandwidth(dataset, 0.5, "h1", residuals, zhat)
        assert h1 == pytest.approx(direct_h1(dataset, 0.5, residuals), rel=1e-10)


def test_cluster_bandwidth_needs_a_cluster(small_design):
    zhat = instruments.fitted_first_stage(small_design)
    residuals = np.ones(small_design.n)
    with pytest.raises(ValidationError):
        instruments.rule_of_thumb_bandwidth(small_design, 0.5, "h3", residuals, zhat)


def test_parametric_instrument_is_orthogonal_to_w(large_design):
    built = instruments.build_parametric(large_design, taus=[0.25, 0.75])
    assert built.taus == (0.25, 0.75)
    phi = built.phi(0.25)
    assert phi.shape == (large_design.n, 1)
    np.testing.assert_allclose(large_design.w.T @ phi, 0.0, atol=1e-8 * large_design.n)
    np.testing.assert_array_equal(built.phi(0.25), built.phi(0.75))


def test_parametric_cluster_instrument_is_orthogonal_within_clusters(large_design):
    built = instruments.build_parametric(large_design, InstrumentRecipe("parametric-cluster"))
    phi = built.phi(0.5)
    for j in range(large_design.n_clusters):
        rows = large_design.cluster_rows(j)
        np.testing.assert_allclose(large_design.w[rows].T @ phi[rows], 0.0, atol=1e-8 * rows.size)


def test_degenerate_instrument_is_zero():
    rng = np.random.default_rng(0)
    w = rng.normal(size=30)
    data = ClusteredDataset(rng.normal(size=30), rng.normal(size=30), w, 2.0 * w + 1.0, np.repeat([0, 1, 2], 10))
    with pytest.warns(DegenerateInstrument):
        built = instruments.build_parametric(data)
    assert not np.any(built.phi(0.5))


def test_wide_bandwidth_partials_out_w(large_design):
    recipe = InstrumentRecipe("np-full", bandwidths={"h1": 1e6, "h2": 1e6})
    built = instruments.build_nonparametric(large_design, recipe, [0.5], beta0=2.0)
    phi = built.phi(0.5)
    np.testing.assert_allclose(large_design.w.T @ phi / large_design.n, 0.0, atol=1e-8)
    assert built.bandwidths[0.5] == {"h1": 1e6, "h2": 1e6}


def test_rule_of_thumb_bandwidths_are_recorded(large_design):
    built = instruments.build_instruments(large_design, "np-full", [0.25, 0.5], beta0=lambda tau: 2.0)
    for tau in (0.25, 0.5):
        assert built.bandwidths[tau]["h1"] > 0
        assert built.bandwidths[tau]["h2"] > 0
        assert np.all(np.isfinite(built.phi(tau)))


def test_small_clusters_are_flagged(make_design):
    dataset = make_design(n=40, J=8, seed=3)
    recipe = InstrumentRecipe("np-cluster", bandwidths={"h3": 1e6, "h4": 1e6})
    with pytest.warns(SmallClusterWarning):
        built = instruments.build_cluster_level(dataset, recipe, [0.5], beta0=2.0)
    assert len(built.bandwidths[0.5]) == dataset.n_clusters


def test_singleton_cluster_is_rejected(make_design):
    dataset = make_design(n=40, J=4, seed=3)
    labels = list(dataset.cluster)
    labels[0] = "alone"
    dataset = ClusteredDataset(dataset.y, dataset.x, dataset.exogenous(), dataset.z, labels)
    with pytest.raises(EmptyCluster):
        instruments.build_cluster_level(dataset, InstrumentRecipe("np-cluster"), [0.5], beta0=2.0)


def test_missing_tau(large_design):
    built = instruments.build_parametric(large_design, taus=[0.5])
    with pytest.raises(ValidationError):
        built.phi(0.3)


def test_preliminary_beta_is_close(large_design):
    assert instruments.preliminary_beta(large_design) == pytest.approx(2.0, abs=0.1)


def test_first_stage_exact_fit():
    z = np.linspace(-1.0, 1.0, 9)
    dataset = ClusteredDataset(np.zeros(9), z, None, z, np.arange(9) % 3)
    np.testing.assert_allclose(instruments.first_stage_lambda(dataset), [1.0, 0.0], atol=1e-12)


def test_parametric_instrument_keeps_the_fitted_first_stage(large_design):
    built = instruments.build_parametric(large_design)
    np.testing.assert_allclose(built.zhat, instruments.fitted_first_stage(large_design))


def test_one_cluster_matches_the_full_sample_recipe(make_design):
    dataset = make_design(n=200, J=1, seed=5)
    full = instruments.build_nonparametric(dataset, taus=[0.5], beta0=2.0)
    local = instruments.build_cluster_level(dataset, taus=[0.5], beta0=2.0)
    np.testing.assert_allclose(local.phi(0.5), full.phi(0.5), atol=1e-12)
    assert local.bandwidths[0.5][0]["h3"] == pytest.approx(full.bandwidths[0.5]["h1"])


def test_duplicated_columns_use_the_generalized_inverse():
    rng = np.random.default_rng(8)
    w = np.column_stack([np.ones(150), rng.normal(size=150)])
    doubled = np.column_stack([w, w[:, 1]])
    zhat = rng.normal(size=150) + w[:, 1]
    residuals = rng.normal(size=150)
    v = np.ones(150)
    chi = instruments.partialling_coefficients(*instruments.kernel_moments(w, zhat, v, residuals, 0.8, 0.8))
    chi_doubled = instruments.partialling_coefficients(
        *instruments.kernel_moments(doubled, zhat, v, residuals, 0.8, 0.8))
    assert np.all(np.isfinite(chi_doubled))
    np.testing.assert_allclose(doubled @ chi_doubled, w @ chi, atol=1e-10)


def test_intercept_only_instrument_is_kernel_demeaned():
    rng = np.random.default_rng(9)
    zhat = rng.normal(size=80)
    residuals = rng.normal(size=80)
    w = np.ones((80, 1))
    chi = instruments.partialling_coefficients(*instruments.kernel_moments(w, zhat, np.ones(80), residuals, 0.5, 0.5))
    window = np.abs(residuals) <= 0.5
    assert chi[0] == pytest.approx(zhat[window].mean())
