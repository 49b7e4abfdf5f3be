#!/usr/bin/env python

"""
bootstrap
=========

Gradient wild bootstrap inference for the profiled IVQR estimator.

Workflow explained:
    - The null is imposed: gamma and theta are fitted at b = beta0(tau)
    - Cluster sums of the null-imposed scores are computed once
    - For every sign vector g the objective is perturbed by the linear term
      ``sum_j g_j (cluster score sum)`` and re-estimated
    - Statistics of the perturbed fits give the randomization critical value

Wald tests (T with a deterministic weight, T_CR with the cluster robust
variance) and AR tests (AR with a deterministic weight, AR_CR with the
null-imposed cluster robust variance) are available, as well as confidence
sets by test inversion.

:Example:

from ivqr.bootstrap import wald_test
result = wald_test(data, instruments, beta0=1.5, taus=[0.5], weighting="crve")
result.reject
"""

import itertools
import logging
import warnings

import numpy as np

from .estimator import estimate, grid_search, profile_fit, weighting_matrix
from .models import (
    AssumptionViolation, BootstrapDraw, ConfidenceSet, NonInformative, NumericalError, ProfileGrid,
    SignVector, SingleClusterWarning, SingularCrve, TestResult, TooManyExcludedDraws, Unbounded,
    ValidationError)
from .qr_solver import zero_tolerance
from .toolkit import as_taus, parallel_map, resolve_beta0, safe_inverse, weighted_norm


logger = logging.getLogger(__name__)

MAX_ENUMERATE_J = 20
CRVE_TOL = 1e-14

METHOD_NAMES = {
    "t": "T", "t-cr": "T_CR", "t_cr": "T_CR", "ar": "AR", "ar-cr": "AR_CR", "ar_cr": "AR_CR",
    "t-std": "T_STD", "t_std": "T_STD", "im": "IM", "crs": "CRS",
}


def normalize_method(method):
    """Canonical method tag (T, T_CR, AR, AR_CR, T_STD, IM, CRS)."""
    key = str(method).lower()
    if key not in METHOD_NAMES:
        raise ValidationError("Unknown test method '%s'." % method)
    return METHOD_NAMES[key]


class ScoreTable(object):
    """
    Cluster sums of the scores ``(tau - 1{residual <= 0}) Psi V`` at one
    quantile index.

    :param sums: J x (d_w + d_phi) array; row j is the sum over cluster j.
    :type sums: numpy.ndarray
    """
    def __init__(self, sums, tau, d_w, n):
        self.sums = np.asarray(sums, dtype=float)
        self.tau = float(tau)
        self.d_w = int(d_w)
        self.n = int(n)

    def __repr__(self):
        return "ScoreTable(J=%i, tau=%s)" % (self.sums.shape[0], self.tau)

    @property
    def n_clusters(self):
        return self.sums.shape[0]

    @property
    def instrument_sums(self):
        """Rows of ``omega (cluster sum)``: the instrument block only."""
        return self.sums[:, self.d_w:]

    def shift(self, g):
        """Gradient term ``sum_j g_j (cluster sum j)``."""
        return _as_signs(g) @ self.sums


def _as_signs(g):
    if isinstance(g, SignVector):
        return g.g
    return np.asarray(g, dtype=float).ravel()


def cluster_score_sums(dataset, instruments, b, r, t, tau):
    """
    Per cluster sums of ``(tau - 1{y - X b - W'r - Phi't <= 0}) Psi V``.

    Residuals within the zero tolerance of the solver count as zero, and zero
    residuals count as ``<= 0``.

    :param b: Coefficient on X.
    :param r: Coefficients on W.
    :param t: Coefficients on Phi (None or 0 for the zero vector).
    :rtype: ScoreTable
    """
    phi = instruments.phi(tau)
    if t is None:
        t = np.zeros(phi.shape[1])
    shifted = dataset.y - dataset.x * b
    residuals = shifted - dataset.w @ np.asarray(r, dtype=float) - phi @ np.atleast_1d(np.asarray(t, dtype=float))
    residuals[np.abs(residuals) <= zero_tolerance(shifted)] = 0.0
    psi = tau - (residuals <= 0)
    scores = np.column_stack([dataset.w, phi]) * (psi * dataset.v)[:, None]
    sums = np.zeros((dataset.n_clusters, scores.shape[1]))
    np.add.at(sums, dataset.cluster, scores)
    return ScoreTable(sums, tau, dataset.d_w, dataset.n)


def enumerate_sign_vectors(J):
    """
    All ``2^J`` sign vectors, starting with (+1, ..., +1).
    """
    if J > MAX_ENUMERATE_J:
        raise ValidationError("Enumerating 2^%i sign vectors is not supported (J <= %i)." % (J, MAX_ENUMERATE_J))
    return [SignVector(g) for g in itertools.product((1, -1), repeat=J)]


def sample_sign_vectors(J, draws, seed):
    """
    `draws` i.i.d. uniform sign vectors; draw b is generated from the seed
    sequence ``(seed, b)`` alone.
    """
    return [SignVector(np.random.default_rng([int(seed), b]).integers(0, 2, J) * 2 - 1) for b in range(draws)]


def sign_vectors(J, mode="auto", draws=300, seed=0, enumerate_max_j=14):
    """
    Sign vectors for a randomization test and the mode actually used.

    :param mode: auto (enumerate when ``J <= enumerate_max_j``), enumerate or sample.
    :rtype: tuple
    """
    if J == 1:
        warnings.warn("A single cluster gives a randomization distribution of two points.", SingleClusterWarning)
    if mode == "auto":
        mode = "enumerate" if J <= enumerate_max_j else "sample"
    if mode == "enumerate":
        return enumerate_sign_vectors(J), mode
    if mode == "sample":
        return sample_sign_vectors(J, int(draws), seed), mode
    raise ValidationError("Unknown sign vector mode '%s'." % mode)


def restricted_fit(dataset, instruments, beta0, taus):
    """
    Null-restricted fits ``(gamma(beta0(tau), tau), theta(beta0(tau), tau))``.

    :param beta0: Null value(s): a number, a mapping tau -> value or a callable.
    :returns: Mapping tau -> (gamma, theta).
    :rtype: dict
    """
    fits = dict()
    for tau in as_taus(taus):
        fits[tau] = profile_fit(dataset, instruments, resolve_beta0(beta0, tau), tau)
    return fits


def bootstrap_profile_fit(dataset, instruments, g, b, tau, score_table):
    """
    Gradient bootstrap inner fit at candidate `b`: the profile quantile
    regression with shift ``S = sum_j g_j (null-imposed cluster score sum)``.

    :returns: (gamma, theta)
    :raises Unbounded: when the shifted objective is unbounded below.
    """
    return profile_fit(dataset, instruments, b, tau, shift=score_table.shift(g))


def bootstrap_beta(dataset, instruments, g, grid, a1, tau, score_table, n_jobs=1):
    """
    Gradient bootstrap estimate: grid argmin of the bootstrap profile norm,
    with the tie rule of the original estimator.

    :rtype: ivqr.models.BootstrapDraw
    """
    fit = grid_search(dataset, instruments, grid, tau, a1, shift=score_table.shift(g), n_jobs=n_jobs)
    return BootstrapDraw(g, tau, fit.beta, fit.gamma, fit.theta, boundary=fit.boundary)


def omega_matrix(table, other=None):
    """
    ``(1/n) sum_j omega s_j(tau) s_j(tau')' omega'`` from cluster score sums.
    """
    other = table if other is None else other
    return table.instrument_sums.T @ other.instrument_sums / table.n


def _a_cr(omega, g_hat):
    g_hat = np.atleast_1d(g_hat)
    value = float(g_hat @ omega @ g_hat)
    if not value > CRVE_TOL:
        raise SingularCrve("G'Omega G = %.3g is not positive; the cluster scores are degenerate." % value)
    return 1.0 / value


def crve(table, g_hat, other=None):
    """
    Cluster robust variance of the instrument scores and the normalization
    ``A_CR = [G' Omega G]^-1``.

    :param table: Scores at the fitted parameters (beta, gamma, 0).
    :type table: ScoreTable
    :param g_hat: The Ghat vector.
    :param other: Scores at another quantile index, for the cross term
        Omega(tau, tau'); no A_CR is computed then.
    :returns: (omega, a_cr)
    :raises SingularCrve: when ``G' Omega G <= 1e-14``.
    """
    omega = omega_matrix(table, other)
    if other is not None and other is not table:
        return omega, None
    return omega, _a_cr(omega, g_hat)


def ghat(dataset, instruments, a1=None, tau=0.5):
    """
    Density free Jacobian proxy

        G' = [E_XP E_PP^-1 A1 E_PP^-1 E_XP']^-1 E_XP E_PP^-1 A1 E_PP^-1

    with ``E_XP = P_n X Phi' V`` and ``E_PP = P_n Phi Phi' V``. For a scalar
    instrument this is ``1 / E_XP``.

    :raises SingularMoment: when E_PP or the bracket is singular.
    """
    phi = instruments.phi(tau)
    e_xp = (dataset.x * dataset.v) @ phi / dataset.n
    e_pp = (phi * dataset.v[:, None]).T @ phi / dataset.n
    inverse = safe_inverse(e_pp, "E[Phi Phi']")
    if isinstance(a1, str) and a1 == "phi":
        middle = inverse
    else:
        middle = inverse @ weighting_matrix(dataset, instruments, tau, a1) @ inverse
    row = e_xp @ middle
    bracket = float(row @ e_xp)
    if abs(bracket) <= 1e-14:
        raise NumericalError("E[X Phi'] is (numerically) zero; Ghat is undefined.")
    return row / bracket


def bootstrap_crve(g, null_table, fitted_table, boot_table, g_hat):
    """
    Bootstrap CRVE from the cluster sums of
    ``g_j f(beta0, gamma_r, 0) + f(beta*_g, gamma*_g, 0) - f(beta, gamma, 0)``.

    :returns: (omega*, a*_cr)
    :raises SingularCrve: on a degenerate draw.
    """
    signs = _as_signs(g)
    sums = signs[:, None] * null_table.sums + boot_table.sums - fitted_table.sums
    table = ScoreTable(sums, null_table.tau, null_table.d_w, null_table.n)
    omega = omega_matrix(table)
    return omega, _a_cr(omega, g_hat)


def critical_value(stats, alpha):
    """
    The ``ceil(N (1 - alpha))``-th smallest of the N statistics.
    """
    values = np.sort(np.asarray(stats, dtype=float))
    if values.size == 0:
        raise ValidationError("No bootstrap statistics to take a critical value from.")
    k = int(np.ceil(values.size * (1.0 - alpha) - 1e-12))
    return float(values[min(max(k, 1), values.size) - 1])


def randomization_p_value(statistic, stats, mode):
    """
    ``#{T* >= T} / N`` (floored at 1/N) when enumerating, ``(1 + #{T* >= T}) / (1 + N)`` when sampling.
    """
    stats = np.asarray(stats, dtype=float)
    count = int(np.sum(stats >= statistic))
    if mode == "sample":
        return (1.0 + count) / (1.0 + stats.size)
    return max(count, 1) / float(stats.size)


def summarize_draws(method, statistic, outcomes, alpha, mode, taus, beta0, max_excluded_fraction=0.01,
                    metadata=None):
    """
    Turn the per draw outcomes (statistic, boundary hit) or None (excluded)
    into a `TestResult`. `beta0` is the null value, or the list of null values
    when there are several quantile indices.
    """
    total = len(outcomes)
    kept = [o for o in outcomes if o is not None]
    excluded = total - len(kept)
    if excluded:
        logger.warning("%s: %i of %i bootstrap draws excluded (unbounded or singular).", method, excluded, total)
    if not kept or excluded > max_excluded_fraction * total:
        raise TooManyExcludedDraws("%s: %i of %i bootstrap draws had to be excluded." % (method, excluded, total))
    stats = np.array([o[0] for o in kept])
    if np.ptp(stats) == 0:
        raise NonInformative("%s: every bootstrap statistic equals %.6g." % (method, stats[0]))
    boundary_hits = int(sum(o[1] for o in kept))
    if boundary_hits:
        logger.info("%s: %i bootstrap estimates on the grid boundary.", method, boundary_hits)
    metadata = dict(metadata or dict())
    metadata["taus"] = list(taus)
    return TestResult(
        method, statistic, critical_value(stats, alpha), randomization_p_value(statistic, stats, mode), alpha,
        len(kept), mode, tau=taus[0] if len(taus) == 1 else list(taus), beta0=beta0, excluded_draws=excluded,
        boundary_hits=boundary_hits, metadata=metadata)


class WaldContext(object):
    """
    Everything a Wald bootstrap draw needs, per quantile index.
    """
    def __init__(self, dataset, instruments, grid, a1, taus, fit, null_tables, weighting, a2=None, g_hats=None,
                 fitted_tables=None):
        self.dataset = dataset
        self.instruments = instruments
        self.grid = grid
        self.a1 = a1
        self.taus = taus
        self.betas = dict((tau, fit[tau].beta) for tau in taus)
        self.null_tables = null_tables
        self.weighting = weighting
        self.a2 = a2
        self.g_hats = g_hats
        self.fitted_tables = fitted_tables


def wald_draw(g, context):
    """
    ``T*(g) = sup_tau |beta*_g(tau) - beta(tau)|`` under the deterministic or the
    bootstrap CRVE weight. Returns (statistic, boundary hits), or None when the
    draw is unbounded or its CRVE singular.
    """
    values, hits = list(), 0
    try:
        for tau in context.taus:
            draw = bootstrap_beta(
                context.dataset, context.instruments, g, context.grid, context.a1, tau, context.null_tables[tau])
            hits += draw.boundary
            difference = draw.beta - context.betas[tau]
            if context.weighting == "crve":
                boot_table = cluster_score_sums(
                    context.dataset, context.instruments, draw.beta, draw.gamma, None, tau)
                _, weight = bootstrap_crve(
                    g, context.null_tables[tau], context.fitted_tables[tau], boot_table, context.g_hats[tau])
            else:
                weight = context.a2[tau]
            values.append(abs(difference) * np.sqrt(weight))
    except (Unbounded, SingularCrve) as e:
        logger.debug("Draw %r excluded: %s", g, e)
        return None
    return max(values), hits


def _scalar_weights(value, taus, name):
    if value is None:
        return dict((tau, 1.0) for tau in taus)
    if isinstance(value, dict):
        weights = dict((tau, float(value[tau])) for tau in taus)
    else:
        weights = dict((tau, float(value)) for tau in taus)
    if any(not w > 0 for w in weights.values()):
        raise ValidationError("%s must be strictly positive." % name)
    return weights


def wald_test(dataset, instruments, beta0, taus=None, alpha=0.10, weighting="crve", mode="auto", draws=300, seed=0,
              grid=None, a1=None, a2=None, g_hats=None, fit=None, n_jobs=1, enumerate_max_j=14,
              max_excluded_fraction=0.01):
    """
    Gradient wild bootstrap Wald test of ``beta(tau) = beta0(tau)`` for every tau.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :param instruments: Instruments.
    :type instruments: ivqr.models.InstrumentSet
    :param beta0: Null value(s): a number, a mapping tau -> value or a callable.
    :param taus: Quantile indices; the statistic is the sup over them.
    :param alpha: Nominal level.
    :param weighting: "deterministic" (T, weight a2) or "crve" (T_CR).
    :param mode: auto, enumerate or sample.
    :param draws: Number of sampled sign vectors in sample mode.
    :param seed: Master seed of the sampled sign vectors.
    :param grid: Estimation grid (ignored when `fit` is given).
    :type grid: ivqr.models.ProfileGrid
    :param a1: Weighting of the profile norm.
    :param a2: Deterministic weight (number or mapping tau -> number), default 1.
    :param g_hats: Optional mapping tau -> Ghat overriding the default.
    :param fit: A precomputed `IvqrFit` on the same data and instruments.
    :param n_jobs: joblib workers over sign vectors.
    :rtype: ivqr.models.TestResult
    """
    if weighting not in ("deterministic", "crve"):
        raise ValidationError("weighting must be 'deterministic' or 'crve'.")
    method = "T_CR" if weighting == "crve" else "T"
    taus = instruments.taus if taus is None else as_taus(taus)
    signs, mode = sign_vectors(dataset.n_clusters, mode, draws, seed, enumerate_max_j)
    if fit is None:
        fit = estimate(dataset, instruments, grid, a1, taus)
    grid = fit.grid

    null_fits = restricted_fit(dataset, instruments, beta0, taus)
    null_tables = dict()
    for tau in taus:
        gamma_r, _ = null_fits[tau]
        null_tables[tau] = cluster_score_sums(dataset, instruments, resolve_beta0(beta0, tau), gamma_r, None, tau)

    values = list()
    if weighting == "crve":
        fitted_tables, ghat_values = dict(), dict()
        for tau in taus:
            fitted_tables[tau] = cluster_score_sums(dataset, instruments, fit[tau].beta, fit[tau].gamma, None, tau)
            ghat_values[tau] = ghat(dataset, instruments, a1, tau) if g_hats is None else np.atleast_1d(g_hats[tau])
            _, a_cr = crve(fitted_tables[tau], ghat_values[tau])
            values.append(abs(fit[tau].beta - resolve_beta0(beta0, tau)) * np.sqrt(a_cr))
        context = WaldContext(dataset, instruments, grid, a1, taus, fit, null_tables, weighting,
                              g_hats=ghat_values, fitted_tables=fitted_tables)
    else:
        weights = _scalar_weights(a2, taus, "a2")
        for tau in taus:
            values.append(abs(fit[tau].beta - resolve_beta0(beta0, tau)) * np.sqrt(weights[tau]))
        context = WaldContext(dataset, instruments, grid, a1, taus, fit, null_tables, weighting, a2=weights)
    statistic = max(values)

    outcomes = parallel_map(wald_draw, signs, n_jobs, context)
    nulls = [resolve_beta0(beta0, tau) for tau in taus]
    return summarize_draws(
        method, statistic, outcomes, alpha, mode, taus, nulls[0] if len(nulls) == 1 else nulls,
        max_excluded_fraction, metadata={"weighting": weighting, "estimates": [fit[tau].beta for tau in taus]})


class ArContext(object):
    """
    Everything an AR bootstrap draw needs, per quantile index.
    """
    def __init__(self, dataset, instruments, taus, nulls, null_thetas, null_tables, weights):
        self.dataset = dataset
        self.instruments = instruments
        self.taus = taus
        self.nulls = nulls
        self.null_thetas = null_thetas
        self.null_tables = null_tables
        self.weights = weights


def ar_draw(g, context):
    """
    ``AR*(g) = sup_tau |theta*_g(beta0, tau) - theta(beta0, tau)|`` under the
    fixed weight. Returns (statistic, 0), or None on an unbounded draw.
    """
    values = list()
    try:
        for tau in context.taus:
            _, theta = bootstrap_profile_fit(
                context.dataset, context.instruments, g, context.nulls[tau], tau, context.null_tables[tau])
            values.append(weighted_norm(theta - context.null_thetas[tau], context.weights[tau]))
    except Unbounded as e:
        logger.debug("Draw %r excluded: %s", g, e)
        return None
    return max(values), 0


def null_crve_weight(dataset, instruments, table, tau):
    """
    ``A~_CR = [H Omega~ H]^-1`` with ``H = P_n Phi Phi' V`` and the null-imposed Omega~.
    """
    phi = instruments.phi(tau)
    h = (phi * dataset.v[:, None]).T @ phi / dataset.n
    middle = h @ omega_matrix(table) @ h
    if np.max(np.abs(middle)) <= CRVE_TOL:
        raise SingularCrve("Null-imposed CRVE is zero at tau=%s." % tau)
    try:
        return safe_inverse(middle, "Null-imposed CRVE")
    except NumericalError as e:
        raise SingularCrve(str(e))


def _matrix_weights(value, dataset, instruments, taus):
    weights = dict()
    for tau in taus:
        entry = value[tau] if isinstance(value, dict) else value
        weights[tau] = weighting_matrix(dataset, instruments, tau, entry)
    return weights


def ar_test(dataset, instruments, beta0, taus=None, alpha=0.10, weighting="deterministic", mode="auto", draws=300,
            seed=0, a3=None, n_jobs=1, enumerate_max_j=14, max_excluded_fraction=0.01):
    """
    Weak-identification robust gradient bootstrap AR test of ``beta(tau) = beta0(tau)``.

    :param weighting: "deterministic" (AR, weight a3, identity by default) or
        "crve" (AR_CR, null-imposed CRVE; not bootstrapped).
    :param a3: Deterministic weight: None (identity), "phi", a number or a matrix,
        or a mapping tau -> one of these.
    :rtype: ivqr.models.TestResult

    Other parameters are those of `wald_test`.
    """
    if weighting not in ("deterministic", "crve"):
        raise ValidationError("weighting must be 'deterministic' or 'crve'.")
    method = "AR_CR" if weighting == "crve" else "AR"
    taus = instruments.taus if taus is None else as_taus(taus)
    signs, mode = sign_vectors(dataset.n_clusters, mode, draws, seed, enumerate_max_j)

    if weighting == "crve" and dataset.n_clusters <= instruments.d_phi:
        message = "AR_CR needs more clusters (J=%i) than instruments (d_phi=%i)." % (
            dataset.n_clusters, instruments.d_phi)
        warnings.warn(message, AssumptionViolation)
        logger.warning(message)

    nulls = dict((tau, resolve_beta0(beta0, tau)) for tau in taus)
    null_fits = restricted_fit(dataset, instruments, nulls, taus)
    null_thetas = dict((tau, null_fits[tau][1]) for tau in taus)
    null_tables = dict(
        (tau, cluster_score_sums(dataset, instruments, nulls[tau], null_fits[tau][0], None, tau)) for tau in taus)
    if weighting == "crve":
        weights = dict((tau, null_crve_weight(dataset, instruments, null_tables[tau], tau)) for tau in taus)
    else:
        weights = _matrix_weights(a3, dataset, instruments, taus)
    statistic = max(weighted_norm(null_thetas[tau], weights[tau]) for tau in taus)

    context = ArContext(dataset, instruments, taus, nulls, null_thetas, null_tables, weights)
    outcomes = parallel_map(ar_draw, signs, n_jobs, context)
    values = [nulls[tau] for tau in taus]
    return summarize_draws(
        method, statistic, outcomes, alpha, mode, taus, values[0] if len(values) == 1 else values,
        max_excluded_fraction, metadata={"weighting": weighting})


def run_test(method, dataset, instruments, beta0, taus=None, alpha=0.10, mode="auto", draws=300, seed=0, grid=None,
             a1=None, fit=None, n_jobs=1, enumerate_max_j=14, max_excluded_fraction=0.01, groups=None):
    """
    Run any test by its tag (T, T_CR, AR, AR_CR, T_STD, IM, CRS, or the
    lower case command-line spellings).

    The baselines T_STD, IM and CRS work at a single quantile index.
    """
    method = normalize_method(method)
    taus = instruments.taus if taus is None else as_taus(taus)
    if method in ("T", "T_CR"):
        return wald_test(
            dataset, instruments, beta0, taus, alpha, "crve" if method == "T_CR" else "deterministic", mode, draws,
            seed, grid, a1, fit=fit, n_jobs=n_jobs, enumerate_max_j=enumerate_max_j,
            max_excluded_fraction=max_excluded_fraction)
    if method in ("AR", "AR_CR"):
        return ar_test(
            dataset, instruments, beta0, taus, alpha, "crve" if method == "AR_CR" else "deterministic", mode, draws,
            seed, n_jobs=n_jobs, enumerate_max_j=enumerate_max_j, max_excluded_fraction=max_excluded_fraction)

    from . import alt_inference
    if len(taus) != 1:
        raise ValidationError("%s works at a single quantile index." % method)
    tau = taus[0]
    if method == "T_STD":
        return alt_inference.t_std_test(dataset, instruments, resolve_beta0(beta0, tau), tau, alpha, grid, a1, fit)
    if groups is None:
        groups = alt_inference.group_estimates(dataset, instruments, tau, grid, a1, beta0=beta0, n_jobs=n_jobs)
    if method == "IM":
        return alt_inference.im_test(dataset, instruments, resolve_beta0(beta0, tau), tau, alpha, groups=groups)
    return alt_inference.crs_test(
        dataset, instruments, resolve_beta0(beta0, tau), tau, alpha, groups, mode, draws, seed, enumerate_max_j)


def confidence_set(dataset, instruments, method, tau, alpha=0.10, grid=None, recipe=None, estimation_grid=None,
                   mode="auto", draws=300, seed=0, a1=None, n_jobs=1, enumerate_max_j=14,
                   max_excluded_fraction=0.01):
    """
    Confidence set by test inversion: every grid value b at which the test of
    ``beta(tau) = b`` does not reject.

    :param method: Test tag.
    :param grid: Candidate null values (default [-3, 1] by 0.01).
    :type grid: ivqr.models.ProfileGrid
    :param recipe: When given, instruments are rebuilt at every candidate (the
        nonparametric recipes depend on the null value).
    :type recipe: ivqr.models.InstrumentRecipe
    :param estimation_grid: Grid of the profiled estimator (default: `grid`).
    :rtype: ivqr.models.ConfidenceSet
    """
    from .instruments import build_instruments

    method = normalize_method(method)
    tau = as_taus(tau)[0]
    grid = ProfileGrid() if grid is None else grid
    estimation_grid = grid if estimation_grid is None else estimation_grid
    rebuild = recipe is not None and recipe.nonparametric

    fit = None
    if not rebuild and method in ("T", "T_CR", "T_STD"):
        fit = estimate(dataset, instruments, estimation_grid, a1, [tau])
    groups = None
    if method in ("IM", "CRS"):
        from . import alt_inference
        groups = alt_inference.group_estimates(dataset, instruments, tau, estimation_grid, a1, n_jobs=n_jobs)

    accepted = np.zeros(len(grid), dtype=bool)
    for i, b in enumerate(grid.points):
        current = build_instruments(dataset, recipe, [tau], beta0=b) if rebuild else instruments
        try:
            result = run_test(
                method, dataset, current, b, [tau], alpha, mode, draws, seed, estimation_grid, a1, fit=fit,
                n_jobs=n_jobs, enumerate_max_j=enumerate_max_j, max_excluded_fraction=max_excluded_fraction,
                groups=groups)
            accepted[i] = not result.reject
        except NonInformative as e:
            logger.debug("b=%s: %s; kept in the set.", b, e)
            accepted[i] = True
    result = ConfidenceSet(method, tau, alpha, grid, accepted)
    if result.empty:
        logger.warning("%s confidence set at tau=%s is empty.", method, tau)
    return result
