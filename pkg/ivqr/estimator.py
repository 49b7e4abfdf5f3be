#!/usr/bin/env python

"""
estimator
=========

Profiled IVQR estimator.

For every candidate b on a grid, a weighted quantile regression of y - X b on
(W, Phi(tau)) gives (gamma(b, tau), theta(b, tau)); the estimate of the
coefficient on X is the candidate with the smallest weighted norm of theta.
"""

import logging
import warnings

import numpy as np
import pandas as pd

from . import qr_solver
from .models import GridDegenerate, IvqrFit, ProfileGrid, TauFit, ValidationError
from .toolkit import as_taus, check_full_rank, parallel_map, weighted_norm


logger = logging.getLogger(__name__)

TIE_TOL = 1e-12


def weighting_matrix(dataset, instruments, tau, a1=None):
    """
    Resolve the weighting matrix of the profile norm.

    :param a1: None or "identity" (identity), "phi" (``P_n Phi Phi' V``), a
        positive number (scaled identity) or a symmetric positive definite array.
    :rtype: numpy.ndarray
    """
    phi = instruments.phi(tau)
    d_phi = phi.shape[1]
    if a1 is None or (isinstance(a1, str) and a1 == "identity"):
        return np.eye(d_phi)
    if isinstance(a1, str):
        if a1 != "phi":
            raise ValidationError("Unknown weighting '%s'." % a1)
        return (phi * dataset.v[:, None]).T @ phi / dataset.n
    matrix = np.atleast_2d(np.asarray(a1, dtype=float))
    if matrix.shape == (1, 1) and d_phi > 1:
        matrix = matrix[0, 0] * np.eye(d_phi)
    if matrix.shape != (d_phi, d_phi):
        raise ValidationError("Weighting matrix must be %i x %i." % (d_phi, d_phi))
    if not np.allclose(matrix, matrix.T) or np.min(np.linalg.eigvalsh(matrix)) <= 0:
        raise ValidationError("Weighting matrix must be symmetric positive definite.")
    return matrix


def profile_problem(dataset, instruments, b, tau, shift=None):
    """`QrProblem` of the inner fit at candidate `b`."""
    design = np.column_stack([dataset.w, instruments.phi(tau)])
    return qr_solver.QrProblem(dataset.y - dataset.x * b, design, dataset.v, tau, shift)


def profile_fit(dataset, instruments, b, tau, shift=None):
    """
    Inner weighted quantile regression of ``y - X b`` on ``(W, Phi(tau))``.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :param instruments: Instruments built for `tau`.
    :type instruments: ivqr.models.InstrumentSet
    :param b: Candidate coefficient on X.
    :type b: float
    :param tau: Quantile index.
    :type tau: float
    :param shift: Optional gradient term (bootstrap fits).
    :type shift: numpy.ndarray
    :returns: (gamma, theta)
    :rtype: tuple
    """
    solution = qr_solver.solve(profile_problem(dataset, instruments, b, tau, shift))
    return solution.coefficients[:dataset.d_w], solution.coefficients[dataset.d_w:]


def _profile_point(b, dataset, instruments, tau, weight, shift):
    gamma, theta = profile_fit(dataset, instruments, b, tau, shift)
    return weighted_norm(theta, weight), gamma, theta


def select_argmin(points, norms, midpoint):
    """
    Index of the smallest norm; ties go to the point closest to `midpoint`,
    then to the lower point.
    """
    norms = np.asarray(norms, dtype=float)
    best = np.min(norms)
    tied = np.flatnonzero(norms <= best + TIE_TOL * max(1.0, abs(best)))
    if tied.size == 1:
        return int(tied[0])
    distance = np.abs(np.asarray(points)[tied] - midpoint)
    closest = tied[distance <= np.min(distance) + 1e-12]
    return int(closest[0])


def grid_search(dataset, instruments, grid, tau, a1=None, shift=None, n_jobs=1):
    """
    Profile the norm of theta over every grid point.

    :returns: A `TauFit` for the winning grid point.
    :rtype: ivqr.models.TauFit
    """
    weight = weighting_matrix(dataset, instruments, tau, a1)
    results = parallel_map(
        _profile_point, grid.points, n_jobs, dataset, instruments, tau, weight, shift)
    norms = np.array([r[0] for r in results])
    winner = select_argmin(grid.points, norms, grid.midpoint)
    boundary = len(grid) > 1 and winner in (0, len(grid) - 1)
    _, gamma, theta = results[winner]
    return TauFit(
        tau, grid.points[winner], gamma, theta, pd.Series(norms, index=grid.points, name="norm"), weight,
        boundary=boundary)


def estimate(dataset, instruments, grid=None, a1=None, taus=None, n_jobs=1):
    """
    Profiled IVQR estimates at each quantile index.

    :param dataset: Data.
    :type dataset: ivqr.models.ClusteredDataset
    :param instruments: Instruments.
    :type instruments: ivqr.models.InstrumentSet
    :param grid: Candidates for the coefficient on X. Defaults to [-3, 1] by 0.01.
    :type grid: ivqr.models.ProfileGrid
    :param a1: Weighting of the profile norm (see `weighting_matrix`).
    :param taus: Quantile indices (default: every index the instruments were built for).
    :type taus: list
    :rtype: ivqr.models.IvqrFit

    :Example:

    from ivqr.estimator import estimate
    from ivqr.models import ProfileGrid
    fit = estimate(data, instruments, ProfileGrid(0, 3, 0.05))
    fit[0.5].beta
    """
    if grid is None:
        grid = ProfileGrid()
    if len(grid) == 1:
        warnings.warn("Profile grid has a single point; the estimate is that point.", GridDegenerate)
    taus = instruments.taus if taus is None else as_taus(taus)
    check_full_rank(np.column_stack([dataset.w, instruments.phi(taus[0])]), "Profile design (W, Phi)")

    fits = list()
    for tau in taus:
        fit = grid_search(dataset, instruments, grid, tau, a1, n_jobs=n_jobs)
        if fit.boundary:
            logger.info("Estimate at tau=%s sits on the grid boundary (%s).", tau, fit.beta)
        logger.debug("tau=%s: beta=%.4f, min profile norm=%.4g", tau, fit.beta, fit.profile_norms.min())
        fits.append(fit)
    return IvqrFit(fits, grid)
