#!/usr/bin/env python

"""
alt_inference
=============

Baseline tests for comparison with the gradient wild bootstrap:
    - T_STD: CRVE studentized Wald statistic against the normal critical value
    - IM: t-test on the per cluster estimates, Student-t with J - 1 degrees of freedom
    - CRS: the same t statistic with a sign change randomization critical value

IM and CRS share one set of per cluster estimates (`group_estimates`).
"""

import logging

import numpy as np
from scipy import stats

from .bootstrap import cluster_score_sums, critical_value, omega_matrix, randomization_p_value, sign_vectors
from .estimator import estimate, weighting_matrix
from .instruments import build_instruments, q_tau
from .models import (
    ClusterFitFailure, GroupEstimates, InstrumentRecipe, InstrumentSet, IvqrError, NonInformative, NumericalError,
    SingularCrve, TestResult)
from .toolkit import parallel_map, uniform_kernel


logger = logging.getLogger(__name__)

CLUSTER_LEVEL = {
    "parametric": "parametric-cluster",
    "parametric-cluster": "parametric-cluster",
    "nonparametric-full": "np-cluster",
    "nonparametric-cluster": "np-cluster",
}


def _cluster_instruments(dataset, instruments, tau, beta0):
    recipe = instruments.recipe
    if recipe.cluster_level:
        return instruments
    forced = InstrumentRecipe(CLUSTER_LEVEL[recipe.method], bandwidths=recipe.bandwidths)
    return build_instruments(dataset, forced, [tau], beta0=beta0)


def _fit_cluster(j, dataset, instruments, tau, grid, a1):
    rows = dataset.cluster_rows(j)
    subset = dataset.subset(rows)
    local = InstrumentSet({tau: instruments.phi(tau)[rows]}, instruments.zhat[rows], instruments.recipe)
    try:
        return j, estimate(subset, local, grid, a1, [tau])[tau].beta, None
    except IvqrError as e:
        return j, None, "%s: %s" % (type(e).__name__, e)


def group_estimates(dataset, instruments, tau, grid=None, a1=None, beta0=None, n_jobs=1):
    """
    IVQR estimate within every cluster, using the cluster level version of the
    instrument recipe.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :param instruments: Instruments of the full sample fit; rebuilt with the
        cluster level recipe when they are not cluster level already.
    :type instruments: ivqr.models.InstrumentSet
    :param beta0: Null value used by rebuilt nonparametric instruments.
    :rtype: ivqr.models.GroupEstimates
    """
    local = _cluster_instruments(dataset, instruments, tau, beta0)
    results = parallel_map(_fit_cluster, range(dataset.n_clusters), n_jobs, dataset, local, tau, grid, a1)
    betas, failures = dict(), dict()
    for j, beta, failure in results:
        if failure is None:
            betas[j] = beta
        else:
            logger.warning("Cluster %r: estimation failed (%s).", dataset.cluster_labels[j], failure)
            failures[j] = failure
    return GroupEstimates(betas, failures, dataset.n_clusters, tau)


def density_jacobian(dataset, instruments, tau, residuals, h=None):
    """
    Kernel estimate ``J = P_n K(e/h)/h X Phi' V`` of the Jacobian of the
    instrument moment with respect to the coefficient on X, and the bandwidth.

    The default bandwidth is the rule of thumb
    ``s [4.5 P_n V X^2 |Phi|^2 / (q(tau) |P_n V X Phi|^2)]^(1/5) n^(-1/5)``.
    """
    phi = instruments.phi(tau)
    xv = dataset.x * dataset.v
    if h is None:
        cross = xv @ phi / dataset.n
        denominator = q_tau(tau) * float(cross @ cross)
        scale = np.std(residuals, ddof=1)
        if not denominator > 0 or not scale > 0:
            raise NumericalError("Rule-of-thumb bandwidth of the Jacobian is degenerate at tau=%s." % tau)
        numerator = np.mean(xv * dataset.x * np.sum(phi ** 2, axis=1))
        h = float(scale * (4.5 * numerator / denominator) ** 0.2 * dataset.n ** -0.2)
    kernel = uniform_kernel(residuals / h) / h
    return (kernel * xv) @ phi / dataset.n, h


def t_std_test(dataset, instruments, beta0, tau, alpha=0.10, grid=None, a1=None, fit=None):
    """
    CRVE studentized Wald test with the two sided normal critical value.

    The statistic is ``sqrt(n) |beta - beta0| / se`` where se is the sandwich
    built from the cluster robust Omega and the kernel density Jacobian.

    :rtype: ivqr.models.TestResult
    :raises SingularCrve: when the sandwich variance is not positive.
    """
    if fit is None:
        fit = estimate(dataset, instruments, grid, a1, [tau])
    tau_fit = fit[tau]
    table = cluster_score_sums(dataset, instruments, tau_fit.beta, tau_fit.gamma, None, tau)
    omega = omega_matrix(table)
    residuals = dataset.y - dataset.x * tau_fit.beta - dataset.w @ tau_fit.gamma
    jacobian, h = density_jacobian(dataset, instruments, tau, residuals)
    weight = weighting_matrix(dataset, instruments, tau, a1)
    bracket = float(jacobian @ weight @ jacobian)
    if abs(bracket) <= 1e-14:
        raise SingularCrve("Kernel Jacobian is zero at tau=%s (h=%.4g)." % (tau, h))
    loading = weight @ jacobian / bracket
    variance = float(loading @ omega @ loading)
    if not variance > 1e-14:
        raise SingularCrve("Sandwich variance %.3g is not positive." % variance)

    statistic = np.sqrt(dataset.n) * abs(tau_fit.beta - beta0) / np.sqrt(variance)
    cv = float(stats.norm.ppf(1.0 - alpha / 2.0))
    p_value = float(2.0 * stats.norm.sf(statistic))
    return TestResult(
        "T_STD", statistic, cv, p_value, alpha, 0, "analytic", tau=tau, beta0=beta0,
        metadata={"critical": "two-sided normal", "bandwidth": h, "estimate": tau_fit.beta})


def group_t(differences):
    """``sqrt(J) mean(d) / sd(d)`` (sd with J - 1), row by row for a 2d input."""
    differences = np.atleast_2d(differences)
    J = differences.shape[1]
    mean = differences.mean(axis=1)
    sd = differences.std(axis=1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(J) * mean / sd


def _checked_groups(dataset, instruments, tau, groups, beta0):
    if groups is None:
        groups = group_estimates(dataset, instruments, tau, beta0=beta0)
    if groups.failures:
        raise ClusterFitFailure(
            "Per cluster estimation failed in clusters %s." % sorted(groups.failures), groups.failures.keys())
    if len(groups.betas) < 2:
        raise ClusterFitFailure("Group based tests need at least two clusters.")
    return groups


def im_test(dataset, instruments, beta0, tau, alpha=0.10, groups=None):
    """
    Group t-test: ``sqrt(J) (mean(beta_j) - beta0) / sd(beta_j)`` against the
    two sided Student-t critical value with J - 1 degrees of freedom.

    :param groups: Per cluster estimates; computed when not given.
    :type groups: ivqr.models.GroupEstimates
    :raises ClusterFitFailure: when any cluster could not be estimated.
    :raises NonInformative: when the per cluster estimates are all equal.
    """
    groups = _checked_groups(dataset, instruments, tau, groups, beta0)
    differences = groups.betas.values - beta0
    if np.ptp(differences) == 0:
        raise NonInformative("All per cluster estimates are equal; the group t statistic is undefined.")
    t = float(group_t(differences)[0])
    J = differences.size
    cv = float(stats.t.ppf(1.0 - alpha / 2.0, J - 1))
    return TestResult(
        "IM", abs(t), cv, float(2.0 * stats.t.sf(abs(t), J - 1)), alpha, 0, "analytic", tau=tau, beta0=beta0,
        metadata={"t": t, "df": J - 1, "group_betas": [float(b) for b in groups.betas.values]})


def crs_test(dataset, instruments, beta0, tau, alpha=0.10, groups=None, mode="auto", draws=300, seed=0,
             enumerate_max_j=14):
    """
    Sign change randomization test on the group t statistic: the critical value
    is taken from ``|t(g_j (beta_j - beta0))|`` over sign vectors g.

    :raises NonInformative: when every ``beta_j - beta0`` is zero.
    """
    groups = _checked_groups(dataset, instruments, tau, groups, beta0)
    differences = groups.betas.values - beta0
    if not np.any(differences):
        raise NonInformative("Every per cluster estimate equals the null; the randomization distribution is flat.")
    signs, mode = sign_vectors(differences.size, mode, draws, seed, enumerate_max_j)
    matrix = np.array([g.g for g in signs], dtype=float)
    randomized = np.abs(group_t(matrix * differences[None, :]))
    statistic = float(np.abs(group_t(differences)[0]))
    return TestResult(
        "CRS", statistic, critical_value(randomized, alpha), randomization_p_value(statistic, randomized, mode),
        alpha, len(signs), mode, tau=tau, beta0=beta0,
        metadata={"group_betas": [float(b) for b in groups.betas.values]})
