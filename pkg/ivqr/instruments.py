#!/usr/bin/env python

"""
instruments
===========

Construction of the instrument column Phi(tau) from the excluded instruments Z.

Four recipes are available:
    - parametric: Phi = lambda'(Z - W pi), pi from a full sample OLS of Z on W
    - parametric-cluster: the same with pi estimated within each cluster
    - nonparametric-full: Phi = Zhat - chi(tau)'W, chi from kernel smoothed
      moments of the null-restricted residuals
    - nonparametric-cluster: the same with cluster specific chi_j(tau)

Every recipe partials W out of the instrument so the resulting Phi is
orthogonal to the controls in the density weighted sense the bootstrap needs.
"""

import logging
import warnings

import numpy as np
from scipy import stats

from . import qr_solver
from .models import (
    AllResidualsOutsideBandwidth, DegenerateInstrument, EmptyCluster, InstrumentRecipe,
    InstrumentSet, NumericalError, SingularMoment, SmallClusterWarning, ValidationError)
from .toolkit import as_taus, generalized_inverse, ols, resolve_beta0, uniform_kernel


logger = logging.getLogger(__name__)

SMALL_CLUSTER = 10


def first_stage_lambda(dataset):
    """
    OLS coefficients of X on (Z, W).

    The first ``d_z`` entries are the Z block (lambda used by the parametric
    recipes); the whole vector defines ``Zhat = (Z, W) lambda``.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :rtype: numpy.ndarray
    :raises RankDeficient: when (Z, W) is not of full column rank.
    """
    return ols(dataset.x, np.column_stack([dataset.z, dataset.w]), "First stage (Z, W)")


def fitted_first_stage(dataset, coefficients=None):
    """``Zhat = (Z, W) lambda``."""
    if coefficients is None:
        coefficients = first_stage_lambda(dataset)
    return np.column_stack([dataset.z, dataset.w]) @ coefficients


def _degenerate(residuals, reference):
    scale = max(1.0, float(np.max(np.abs(reference)))) if reference.size else 1.0
    return float(np.max(np.abs(residuals))) <= 1e-10 * scale if residuals.size else True


def build_parametric(dataset, recipe=None, taus=(0.5,)):
    """
    Parametric recipe ``Phi = lambda'(Z - G(W, pi))`` with the linear link.

    With ``recipe.method == "parametric-cluster"``, pi is estimated within each
    cluster. The instrument does not depend on tau; the same column is stored
    for every requested quantile index.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :param recipe: Recipe (defaults to the full sample parametric one).
    :type recipe: ivqr.models.InstrumentRecipe
    :param taus: Quantile indices to store the instrument for.
    :type taus: list
    :rtype: ivqr.models.InstrumentSet
    """
    if recipe is None:
        recipe = InstrumentRecipe("parametric")
    taus = as_taus(taus)

    if recipe.method == "parametric-cluster":
        residuals = np.empty_like(dataset.z)
        for j in range(dataset.n_clusters):
            rows = dataset.cluster_rows(j)
            coefficients, _, _, _ = np.linalg.lstsq(dataset.w[rows], dataset.z[rows], rcond=None)
            residuals[rows] = dataset.z[rows] - dataset.w[rows] @ coefficients
    else:
        pi = ols(dataset.z, dataset.w, "Exogenous regressors W")
        residuals = dataset.z - dataset.w @ pi

    if _degenerate(residuals, dataset.z):
        message = "Z is (numerically) a linear function of W; the instrument is identically zero."
        warnings.warn(message, DegenerateInstrument)
        logger.warning(message)
        phi = np.zeros(dataset.n)
        zhat = np.zeros(dataset.n)
    else:
        coefficients = first_stage_lambda(dataset)
        phi = residuals @ coefficients[:dataset.d_z]
        zhat = fitted_first_stage(dataset, coefficients)
    return InstrumentSet(dict((tau, phi) for tau in taus), zhat, recipe)


def q_tau(tau):
    """
    ``(1 - F^-1(tau))^2 f(F^-1(tau))`` for the standard normal F and f.
    """
    quantile = stats.norm.ppf(tau)
    return float((1.0 - quantile) ** 2 * stats.norm.pdf(quantile))


def restricted_residuals(dataset, zhat, beta0, tau):
    """
    Residuals ``y - X beta0 - W'gamma(beta0, tau)`` of the null-restricted fit
    that uses Zhat as the instrument column.
    """
    design = np.column_stack([dataset.w, zhat])
    problem = qr_solver.QrProblem(dataset.y - dataset.x * beta0, design, dataset.v, tau)
    solution = qr_solver.solve(problem)
    gamma = solution.coefficients[:dataset.d_w]
    return dataset.y - dataset.x * beta0 - dataset.w @ gamma


def rule_of_thumb_bandwidth(dataset, tau, which, residuals, zhat, cluster=None):
    """
    Rule-of-thumb bandwidth for the kernel smoothed moment matrices.

    ``h1`` and ``h2`` use the full sample (rate n^-1/5); ``h3`` and ``h4`` are the
    cluster specific versions (rate n_j^-1/5) and need `cluster`.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :param tau: Quantile index.
    :type tau: float
    :param which: One of h1, h2, h3 (h3j), h4 (h4j).
    :type which: str
    :param residuals: Null-restricted residuals, length n.
    :type residuals: numpy.ndarray
    :param zhat: First stage fitted values, length n.
    :type zhat: numpy.ndarray
    :param cluster: Cluster index for h3/h4.
    :type cluster: int
    :rtype: float
    :raises EmptyCluster: when the cluster has fewer than two observations.
    """
    which = which.rstrip("j")
    if which not in ("h1", "h2", "h3", "h4"):
        raise ValidationError("Unknown bandwidth '%s'." % which)
    if which in ("h3", "h4"):
        if cluster is None:
            raise ValidationError("Bandwidth %s is cluster specific; pass a cluster index." % which)
        rows = dataset.cluster_rows(cluster)
        if rows.size < 2:
            raise EmptyCluster("Cluster %i has %i observation(s); at least 2 are needed." % (cluster, rows.size))
    else:
        rows = np.arange(dataset.n)

    q = q_tau(tau)
    if q < 1e-12:
        raise NumericalError("Rule-of-thumb bandwidth is undefined at tau=%s (q(tau)=0); supply it." % tau)

    w = dataset.w[rows]
    v = dataset.v[rows]
    z = np.asarray(zhat, dtype=float)[rows]
    scale = np.std(np.asarray(residuals)[rows], ddof=1)
    norms = np.sum(w ** 2, axis=1)
    if which in ("h1", "h3"):
        numerator = np.mean(v * norms ** 2)
        denominator = np.sum(((w * v[:, None]).T @ w / rows.size) ** 2)
    else:
        numerator = np.mean(v * norms * z ** 2)
        denominator = np.sum((w.T @ (v * z) / rows.size) ** 2)
    if not denominator > 0 or not scale > 0:
        raise SingularMoment("Rule-of-thumb bandwidth %s has a degenerate scale at tau=%s." % (which, tau))
    return float(scale * (4.5 * numerator / (q * denominator)) ** 0.2 * rows.size ** -0.2)


def kernel_moments(w, zhat, v, residuals, h_ww, h_wz):
    """
    Kernel smoothed ``Q_WW = P K(e/h1)/h1 V W W'`` and ``Q_WZ = P K(e/h2)/h2 V W Zhat``.
    """
    k_ww = uniform_kernel(residuals / h_ww) / h_ww * v
    k_wz = uniform_kernel(residuals / h_wz) / h_wz * v
    q_ww = (w * k_ww[:, None]).T @ w / w.shape[0]
    q_wz = w.T @ (k_wz * zhat) / w.shape[0]
    return q_ww, q_wz


def partialling_coefficients(q_ww, q_wz):
    """``chi = Q_WW Q_WW^- Q_WW^- Q_WZ``."""
    pinv = generalized_inverse(q_ww)
    return q_ww @ pinv @ pinv @ q_wz


def _null_residuals(dataset, zhat, beta0, tau):
    try:
        return restricted_residuals(dataset, zhat, resolve_beta0(beta0, tau), tau)
    except NumericalError:
        logger.error("Restricted fit for the instrument construction failed at tau=%s.", tau)
        raise


def build_nonparametric(dataset, recipe=None, taus=(0.5,), beta0=None):
    """
    Full sample nonparametric recipe ``Phi(tau) = Zhat - chi(tau)'W``.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :param recipe: Recipe (bandwidth overrides h1, h2 are honoured).
    :type recipe: ivqr.models.InstrumentRecipe
    :param taus: Quantile indices.
    :type taus: list
    :param beta0: Null value(s) for the restricted residuals; a number, a mapping
        tau -> value or a callable. Defaults to the preliminary 2SLS estimate.
    :rtype: ivqr.models.InstrumentSet
    :raises AllResidualsOutsideBandwidth: when a kernel window holds no residual.
    """
    if recipe is None:
        recipe = InstrumentRecipe("np-full")
    taus = as_taus(taus)
    if beta0 is None:
        beta0 = preliminary_beta(dataset)
    zhat = fitted_first_stage(dataset)

    values, bandwidths, chis = dict(), dict(), dict()
    for tau in taus:
        residuals = _null_residuals(dataset, zhat, beta0, tau)
        h = dict()
        for key in ("h1", "h2"):
            h[key] = recipe.bandwidths.get(key) or rule_of_thumb_bandwidth(dataset, tau, key, residuals, zhat)
        for key in ("h1", "h2"):
            if not np.any(np.abs(residuals) <= h[key]):
                raise AllResidualsOutsideBandwidth(
                    "No residual falls inside the %s=%.4g kernel window at tau=%s." % (key, h[key], tau))
        q_ww, q_wz = kernel_moments(dataset.w, zhat, dataset.v, residuals, h["h1"], h["h2"])
        chi = partialling_coefficients(q_ww, q_wz)
        values[tau] = zhat - dataset.w @ chi
        bandwidths[tau] = h
        chis[tau] = chi
        logger.debug("tau=%s: h1=%.4g, h2=%.4g, chi=%s", tau, h["h1"], h["h2"], chi)
    return InstrumentSet(values, zhat, recipe, bandwidths=bandwidths, chi=chis)


def build_cluster_level(dataset, recipe=None, taus=(0.5,), beta0=None):
    """
    Cluster level nonparametric recipe ``Phi_j(tau) = Zhat - chi_j(tau)'W``.

    Clusters whose kernel window is empty get ``chi_j = 0``. Bandwidth overrides
    h3 and h4 apply to every cluster.

    :raises EmptyCluster: when a cluster has fewer than two observations.
    """
    if recipe is None:
        recipe = InstrumentRecipe("np-cluster")
    taus = as_taus(taus)
    if beta0 is None:
        beta0 = preliminary_beta(dataset)
    sizes = dataset.cluster_sizes
    for j, size in enumerate(sizes):
        if size < 2:
            raise EmptyCluster("Cluster %r has %i observation(s); at least 2 are needed." % (
                dataset.cluster_labels[j], size))
    small = [dataset.cluster_labels[j] for j, size in enumerate(sizes) if size < SMALL_CLUSTER]
    if small:
        message = "Clusters %s have fewer than %i observations; consider merging them or the full sample recipe." % (
            small, SMALL_CLUSTER)
        warnings.warn(message, SmallClusterWarning)
        logger.warning(message)

    zhat = fitted_first_stage(dataset)
    values, bandwidths, chis = dict(), dict(), dict()
    for tau in taus:
        residuals = _null_residuals(dataset, zhat, beta0, tau)
        phi = np.empty(dataset.n)
        per_cluster_h, per_cluster_chi = list(), list()
        inside = False
        for j in range(dataset.n_clusters):
            rows = dataset.cluster_rows(j)
            h = dict()
            for key in ("h3", "h4"):
                h[key] = recipe.bandwidths.get(key) or \
                    rule_of_thumb_bandwidth(dataset, tau, key, residuals, zhat, cluster=j)
            inside = inside or bool(np.any(np.abs(residuals[rows]) <= min(h.values())))
            q_ww, q_wz = kernel_moments(
                dataset.w[rows], zhat[rows], dataset.v[rows], residuals[rows], h["h3"], h["h4"])
            chi = partialling_coefficients(q_ww, q_wz)
            phi[rows] = zhat[rows] - dataset.w[rows] @ chi
            per_cluster_h.append(h)
            per_cluster_chi.append(chi)
        if not inside:
            raise AllResidualsOutsideBandwidth("No cluster has a residual inside its kernel window at tau=%s." % tau)
        values[tau] = phi
        bandwidths[tau] = per_cluster_h
        chis[tau] = per_cluster_chi
    return InstrumentSet(values, zhat, recipe, bandwidths=bandwidths, chi=chis)


def preliminary_beta(dataset):
    """
    Linear two stage least squares estimate of the coefficient on X, used as
    the null value of the instrument residuals in pure estimation mode.
    """
    xhat = fitted_first_stage(dataset)
    coefficients = ols(dataset.y, np.column_stack([xhat, dataset.w]), "Second stage (Xhat, W)")
    return float(coefficients[0])


def build_instruments(dataset, recipe=None, taus=(0.5,), beta0=None):
    """
    Build instruments with whichever recipe is given.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :param recipe: Recipe, or a method name. Defaults to the full sample nonparametric recipe.
    :type recipe: ivqr.models.InstrumentRecipe or str
    :param taus: Quantile indices.
    :type taus: list
    :param beta0: Null value(s) for the nonparametric recipes.
    :rtype: ivqr.models.InstrumentSet

    :Example:

    from ivqr.instruments import build_instruments
    instruments = build_instruments(data, "np-full", taus=[0.25, 0.5], beta0=lambda t: 1 + t)
    instruments.phi(0.5)
    """
    if recipe is None:
        recipe = InstrumentRecipe("np-full")
    elif isinstance(recipe, str):
        recipe = InstrumentRecipe(recipe)
    if recipe.method in ("parametric", "parametric-cluster"):
        return build_parametric(dataset, recipe, taus)
    if recipe.method == "nonparametric-full":
        return build_nonparametric(dataset, recipe, taus, beta0)
    return build_cluster_level(dataset, recipe, taus, beta0)


def kernel_cross_moment(dataset, phi, residuals, h, cluster):
    """
    ``(1/n_j) sum_i K(e/h)/h V W phi'`` within one cluster; its norm measures how
    far the instrument is from being orthogonal to W.
    """
    rows = dataset.cluster_rows(cluster)
    k = uniform_kernel(residuals[rows] / h) / h * dataset.v[rows]
    phi = np.asarray(phi, dtype=float)[rows]
    if phi.ndim == 1:
        phi = phi.reshape(-1, 1)
    return (dataset.w[rows] * k[:, None]).T @ phi / rows.size
