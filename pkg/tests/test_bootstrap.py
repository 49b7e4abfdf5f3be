import numpy as np
import pytest

from ivqr import bootstrap
from ivqr.estimator import estimate, profile_fit
from ivqr.instruments import build_parametric
from ivqr.models import ProfileGrid, SignVector, SingularCrve, TestResult, ValidationError


@pytest.fixture
def setup(small_design, coarse_grid):
    instruments = build_parametric(small_design, taus=[0.5])
    fit = estimate(small_design, instruments, coarse_grid)
    return small_design, instruments, fit


def test_enumeration():
    signs = bootstrap.enumerate_sign_vectors(3)
    assert len(signs) == 8
    assert len(set(signs)) == 8
    assert signs[0] == SignVector([1, 1, 1])
    assert set(-g for g in signs) == set(signs)


def test_enumeration_limit():
    with pytest.raises(ValidationError):
        bootstrap.enumerate_sign_vectors(21)


def test_sampling_is_reproducible():
    first = bootstrap.sample_sign_vectors(12, 50, seed=7)
    second = bootstrap.sample_sign_vectors(12, 50, seed=7)
    assert first == second
    assert all(len(g) == 12 for g in first)
    assert bootstrap.sample_sign_vectors(12, 10, seed=7) == first[:10]


def test_auto_mode():
    assert bootstrap.sign_vectors(4, "auto")[1] == "enumerate"
    assert bootstrap.sign_vectors(15, "auto", draws=5)[1] == "sample"
    assert len(bootstrap.sign_vectors(15, "auto", draws=5)[0]) == 5
    with pytest.raises(ValidationError):
        bootstrap.sign_vectors(4, "bogus")


def test_critical_value_order_statistic():
    stats = np.arange(1.0, 11.0)
    assert bootstrap.critical_value(stats, 0.10) == 9.0
    assert bootstrap.critical_value(stats, 0.25) == 8.0
    assert bootstrap.critical_value(stats[::-1], 0.05) == 10.0


def test_p_values():
    stats = np.array([1.0, 2.0, 3.0, 4.0])
    assert bootstrap.randomization_p_value(3.0, stats, "enumerate") == 0.5
    assert bootstrap.randomization_p_value(9.0, stats, "enumerate") == 0.25
    assert bootstrap.randomization_p_value(9.0, stats, "sample") == pytest.approx(0.2)


def test_ties_do_not_reject():
    result = TestResult("T", 2.0, 2.0, 0.1, 0.1, 16, "enumerate")
    assert not result.reject


def test_method_names():
    assert bootstrap.normalize_method("t-cr") == "T_CR"
    assert bootstrap.normalize_method("AR_CR") == "AR_CR"
    with pytest.raises(ValidationError):
        bootstrap.normalize_method("wald")


def test_score_sums_match_a_loop(setup):
    dataset, instruments, fit = setup
    gamma = fit[0.5].gamma
    table = bootstrap.cluster_score_sums(dataset, instruments, 2.0, gamma, None, 0.5)
    phi = instruments.phi(0.5)
    expected = np.zeros((dataset.n_clusters, dataset.d_w + 1))
    for i in range(dataset.n):
        residual = dataset.y[i] - 2.0 * dataset.x[i] - dataset.w[i] @ gamma
        psi = 0.5 - (residual <= 1e-10 * max(1.0, np.max(np.abs(dataset.y - 2.0 * dataset.x))))
        expected[dataset.cluster[i]] += psi * dataset.v[i] * np.concatenate([dataset.w[i], phi[i]])
    np.testing.assert_allclose(table.sums, expected, atol=1e-10)
    signs = np.array([1, -1, 1, -1, 1])
    np.testing.assert_allclose(table.shift(signs), signs @ expected, atol=1e-10)


def test_ghat_for_a_scalar_instrument(setup):
    dataset, instruments, _ = setup
    phi = instruments.phi(0.5)[:, 0]
    e_xp = np.mean(dataset.x * phi)
    np.testing.assert_allclose(bootstrap.ghat(dataset, instruments, None, 0.5), [1.0 / e_xp])
    np.testing.assert_allclose(bootstrap.ghat(dataset, instruments, "phi", 0.5), [1.0 / e_xp])


def test_crve_normalization(setup):
    dataset, instruments, fit = setup
    table = bootstrap.cluster_score_sums(dataset, instruments, fit[0.5].beta, fit[0.5].gamma, None, 0.5)
    g_hat = bootstrap.ghat(dataset, instruments, None, 0.5)
    omega, a_cr = bootstrap.crve(table, g_hat)
    sums = table.instrument_sums[:, 0]
    assert omega[0, 0] == pytest.approx(np.sum(sums ** 2) / dataset.n)
    assert a_cr == pytest.approx(1.0 / (g_hat[0] ** 2 * omega[0, 0]))


def test_wald_test_document(setup, coarse_grid):
    dataset, instruments, fit = setup
    result = bootstrap.wald_test(dataset, instruments, 2.0, [0.5], weighting="crve", grid=coarse_grid, fit=fit)
    assert result.method == "T_CR"
    assert result.mode == "enumerate"
    assert result.n_sign_vectors + result.excluded_draws == 2 ** dataset.n_clusters
    assert 0 < result.p_value <= 1
    assert result.reject == (result.statistic > result.critical_value)


def test_deterministic_weight_scaling_keeps_the_decision(setup, coarse_grid):
    dataset, instruments, fit = setup
    for beta0 in (1.6, 2.0):
        plain = bootstrap.wald_test(
            dataset, instruments, beta0, [0.5], weighting="deterministic", grid=coarse_grid, fit=fit)
        scaled = bootstrap.wald_test(
            dataset, instruments, beta0, [0.5], weighting="deterministic", grid=coarse_grid, fit=fit, a2=7.3)
        assert plain.reject == scaled.reject
        assert plain.p_value == scaled.p_value


def test_ar_weightings_agree_for_a_scalar_instrument(setup):
    dataset, instruments, _ = setup
    for beta0 in (1.0, 2.0, 2.5):
        plain = bootstrap.ar_test(dataset, instruments, beta0, [0.5])
        scaled = bootstrap.ar_test(dataset, instruments, beta0, [0.5], a3=0.37)
        robust = bootstrap.ar_test(dataset, instruments, beta0, [0.5], weighting="crve")
        assert plain.reject == scaled.reject == robust.reject
        assert plain.p_value == scaled.p_value == robust.p_value
        assert robust.method == "AR_CR"


def test_confidence_set_intervals(setup):
    dataset, instruments, fit = setup
    grid = ProfileGrid(1.4, 2.6, 0.1)
    region = bootstrap.confidence_set(dataset, instruments, "AR", 0.5, 0.10, grid)
    assert region.method == "AR"
    assert region.accepted.shape == (len(grid),)
    for lower, upper in region.intervals:
        assert lower <= upper


def test_run_test_dispatch(setup, coarse_grid):
    dataset, instruments, fit = setup
    result = bootstrap.run_test("ar", dataset, instruments, 2.0, [0.5], grid=coarse_grid, fit=fit)
    assert result.method == "AR"
    with pytest.raises(ValidationError):
        bootstrap.run_test("T_STD", dataset, instruments, 2.0, [0.25, 0.5])


def test_restricted_fit_at_the_estimate(setup):
    dataset, instruments, fit = setup
    gamma, theta = bootstrap.restricted_fit(dataset, instruments, fit[0.5].beta, [0.5])[0.5]
    np.testing.assert_allclose(gamma, fit[0.5].gamma, atol=1e-9)
    np.testing.assert_allclose(theta, fit[0.5].theta, atol=1e-9)


def test_bootstrap_fit_without_shift_is_the_profile_fit(setup):
    dataset, instruments, _ = setup
    expected = profile_fit(dataset, instruments, 1.9, 0.5)
    table = bootstrap.cluster_score_sums(dataset, instruments, 2.0, expected[0], None, 0.5)
    unshifted = bootstrap.bootstrap_profile_fit(dataset, instruments, np.zeros(dataset.n_clusters), 1.9, 0.5, table)
    for got, want in zip(unshifted, expected):
        np.testing.assert_allclose(got, want, atol=1e-9)

    # equal cluster sums with opposite signs cancel
    row = table.sums[0]
    paired = bootstrap.ScoreTable(np.array([row, row, row, row, np.zeros_like(row)]), 0.5, dataset.d_w, dataset.n)
    cancelled = bootstrap.bootstrap_profile_fit(dataset, instruments, [1, -1, 1, -1, 1], 1.9, 0.5, paired)
    for got, want in zip(cancelled, expected):
        np.testing.assert_allclose(got, want, atol=1e-9)


def test_shift_is_linear_in_the_signs(setup):
    dataset, instruments, fit = setup
    table = bootstrap.cluster_score_sums(dataset, instruments, 2.0, fit[0.5].gamma, None, 0.5)
    g = SignVector([1, -1, -1, 1, 1])
    np.testing.assert_allclose(table.shift(-g), -table.shift(g))
    np.testing.assert_allclose(table.shift(g) + table.shift(-g), 0.0, atol=1e-12)


def test_crve_of_zero_scores_is_singular():
    table = bootstrap.ScoreTable(np.zeros((4, 3)), 0.5, 2, 100)
    with pytest.raises(SingularCrve):
        bootstrap.crve(table, np.array([1.0]))


def score_tables(dataset, instruments, fit):
    gamma_r, _ = profile_fit(dataset, instruments, 2.0, 0.5)
    null = bootstrap.cluster_score_sums(dataset, instruments, 2.0, gamma_r, None, 0.5)
    fitted = bootstrap.cluster_score_sums(dataset, instruments, fit[0.5].beta, fit[0.5].gamma, None, 0.5)
    gamma_b, _ = profile_fit(dataset, instruments, 1.8, 0.5)
    boot = bootstrap.cluster_score_sums(dataset, instruments, 1.8, gamma_b, None, 0.5)
    return null, fitted, boot


def test_bootstrap_crve_matches_matrix_arithmetic(setup):
    dataset, instruments, fit = setup
    null, fitted, boot = score_tables(dataset, instruments, fit)
    g_hat = bootstrap.ghat(dataset, instruments, None, 0.5)
    g = np.array([1.0, -1.0, 1.0, 1.0, -1.0])
    omega, a_cr = bootstrap.bootstrap_crve(g, null, fitted, boot, g_hat)

    sums = (g[:, None] * null.sums + boot.sums - fitted.sums)[:, dataset.d_w:]
    expected = sums.T @ sums / dataset.n
    np.testing.assert_allclose(omega, expected, atol=1e-12)
    assert a_cr == pytest.approx(1.0 / float(g_hat @ expected @ g_hat))

    # -g differs only in the null-imposed term
    flipped, _ = bootstrap.bootstrap_crve(-g, null, fitted, boot, g_hat)
    other = (-g[:, None] * null.sums + boot.sums - fitted.sums)[:, dataset.d_w:]
    np.testing.assert_allclose(flipped, other.T @ other / dataset.n, atol=1e-12)
    null_part = (g[:, None] * null.sums)[:, dataset.d_w:]
    rest = (boot.sums - fitted.sums)[:, dataset.d_w:]
    np.testing.assert_allclose(
        omega - flipped, 2.0 * (null_part.T @ rest + rest.T @ null_part) / dataset.n, atol=1e-12)


def test_bootstrap_crve_at_the_estimate_is_the_null_crve(setup):
    dataset, instruments, fit = setup
    null, fitted, _ = score_tables(dataset, instruments, fit)
    g_hat = bootstrap.ghat(dataset, instruments, None, 0.5)
    expected = bootstrap.omega_matrix(null)
    for g in bootstrap.enumerate_sign_vectors(dataset.n_clusters)[:8]:
        omega, _ = bootstrap.bootstrap_crve(g, null, fitted, fitted, g_hat)
        np.testing.assert_allclose(omega, expected, atol=1e-12)


def test_robust_wald_test_ignores_the_scale_of_ghat(setup, coarse_grid):
    dataset, instruments, fit = setup
    g_hat = bootstrap.ghat(dataset, instruments, None, 0.5)
    for beta0 in (1.6, 2.0):
        plain = bootstrap.wald_test(
            dataset, instruments, beta0, [0.5], weighting="crve", grid=coarse_grid, fit=fit, g_hats={0.5: g_hat})
        scaled = bootstrap.wald_test(
            dataset, instruments, beta0, [0.5], weighting="crve", grid=coarse_grid, fit=fit,
            g_hats={0.5: 3.0 * g_hat})
        assert plain.reject == scaled.reject
        assert plain.p_value == scaled.p_value
        assert scaled.statistic == pytest.approx(plain.statistic / 3.0)


def test_enumeration_does_not_depend_on_cluster_order(setup):
    dataset, instruments, _ = setup
    reordered = dataset.subset(np.argsort(-dataset.cluster, kind="stable"))
    assert reordered.cluster_labels == dataset.cluster_labels[::-1]
    first = bootstrap.ar_test(dataset, instruments, 1.8, [0.5], mode="enumerate")
    second = bootstrap.ar_test(reordered, build_parametric(reordered, taus=[0.5]), 1.8, [0.5], mode="enumerate")
    assert second.statistic == pytest.approx(first.statistic, rel=1e-8)
    assert second.p_value == first.p_value
    assert second.reject == first.reject


@pytest.mark.slow
def test_enumerated_wald_test_size(make_design):
    grid = ProfileGrid(1.4, 2.6, 0.05)
    rejections = list()
    for seed in range(200):
        dataset = make_design(n=120, J=6, seed=1000 + seed)
        instruments = build_parametric(dataset, taus=[0.5])
        result = bootstrap.wald_test(
            dataset, instruments, 2.0, [0.5], weighting="deterministic", mode="enumerate", grid=grid)
        rejections.append(result.reject)
    assert np.mean(rejections) <= 0.10 + 2.0 ** -5 + 0.05
