#!/usr/bin/env python

"""
toolkit
=======

Small numerical helpers shared by the estimation, bootstrap and simulation
modules: least squares with a rank check, generalized inverses, weighted norms,
the uniform kernel, seeding and the joblib fan-out.
"""

import os
import zlib

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from .models import RankDeficient, SingularMoment, ValidationError


RANK_TOL = 1e-10


def check_full_rank(matrix, what="design"):
    """
    Raise `RankDeficient` unless `matrix` has full column rank.

    The rank is read from the singular values: anything below
    ``RANK_TOL * largest singular value`` counts as zero.

    :param matrix: 2d array.
    :type matrix: numpy.ndarray
    :param what: Name used in the error message.
    :type what: str
    """
    matrix = np.atleast_2d(matrix)
    if matrix.shape[1] == 0:
        return
    s = np.linalg.svd(matrix, compute_uv=False)
    if s.size < matrix.shape[1] or s[0] <= 0 or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficient(
            "%s matrix (%i x %i) is not of full column rank." % (what, matrix.shape[0], matrix.shape[1]))


def ols(response, regressors, what="regressor"):
    """
    Ordinary least squares coefficients of `response` on `regressors`.

    :param response: Vector of length n, or n x k matrix (one regression per column).
    :type response: numpy.ndarray
    :param regressors: n x p matrix.
    :type regressors: numpy.ndarray
    :return: p (or p x k) coefficients.
    :rtype: numpy.ndarray
    """
    regressors = np.atleast_2d(np.asarray(regressors, dtype=float))
    check_full_rank(regressors, what)
    coefficients, _, _, _ = np.linalg.lstsq(regressors, np.asarray(response, dtype=float), rcond=None)
    return coefficients


def generalized_inverse(matrix):
    """
    Moore-Penrose inverse of a symmetric positive semidefinite matrix.

    Eigenvalues below ``RANK_TOL * largest eigenvalue`` are treated as zero, so
    the inverse of a zero matrix is the zero matrix.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if not np.any(matrix):
        return np.zeros_like(matrix)
    return linalg.pinvh(matrix, atol=0.0, rtol=RANK_TOL)


def safe_inverse(matrix, what="moment"):
    """
    Inverse of a small square matrix, raising `SingularMoment` when it is
    numerically singular.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    s = np.linalg.svd(matrix, compute_uv=False)
    if s[0] <= 0 or s[-1] <= RANK_TOL * s[0]:
        raise SingularMoment("%s matrix is singular." % what)
    return np.linalg.inv(matrix)


def weighted_norm(vector, weight):
    """
    ``(u' A u) ** 0.5`` for a vector `u` and a weighting matrix `A`
    (a scalar weight is accepted for one dimensional `u`).
    """
    vector = np.atleast_1d(np.asarray(vector, dtype=float))
    weight = np.atleast_2d(np.asarray(weight, dtype=float))
    value = float(vector @ weight @ vector)
    return np.sqrt(max(value, 0.0))


def uniform_kernel(u):
    """K(u) = 1{|u| <= 1} / 2."""
    return 0.5 * (np.abs(u) <= 1.0)


def resolve_beta0(beta0, tau):
    """
    Null value at quantile `tau`.

    :param beta0: A number, a mapping tau -> value, or a callable of tau.
    """
    if callable(beta0):
        return float(beta0(tau))
    if isinstance(beta0, dict):
        try:
            return float(beta0[tau])
        except KeyError:
            raise ValidationError("No null value given for tau=%s." % tau)
    return float(beta0)


def as_taus(taus):
    """Sorted tuple of quantile indices, each strictly inside (0, 1)."""
    if taus is None:
        raise ValidationError("At least one quantile index is required.")
    taus = tuple(sorted(set(float(t) for t in np.atleast_1d(taus))))
    if len(taus) == 0:
        raise ValidationError("At least one quantile index is required.")
    for tau in taus:
        if not 0.0 < tau < 1.0:
            raise ValidationError("Quantile index %s is not inside (0, 1)." % tau)
    return taus


def stream_rng(seed, *tags):
    """
    Generator for one named random stream.

    Streams are keyed by the seed and by the CRC32 of each tag, so a
    replication can draw its components in any order and still be
    reproducible.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            key.append(zlib.crc32(tag.encode("utf-8")))
        else:
            key.append(int(tag))
    return np.random.default_rng(np.random.SeedSequence(key))


def replication_seed(master, replication):
    """Seed of replication `replication` under master seed `master`."""
    return int(np.random.SeedSequence([int(master), int(replication)]).generate_state(1, dtype=np.uint64)[0])


def resolve_n_jobs(n_jobs=None):
    """
    Number of joblib workers. The environment variable ``IVQR_NUM_THREADS``
    overrides the configured value.
    """
    env = os.environ.get("IVQR_NUM_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError("IVQR_NUM_THREADS must be an integer, got '%s'." % env)
    return 1 if n_jobs is None else int(n_jobs)


def parallel_map(function, items, n_jobs=1, *args, **kwargs):
    """
    ``[function(item, *args, **kwargs) for item in items]``, fanned out with joblib.

    Results come back in the order of `items` whatever the number of workers.
    """
    items = list(items)
    if n_jobs in (None, 0, 1) or len(items) < 2:
        return [function(item, *args, **kwargs) for item in items]
    return Parallel(n_jobs=n_jobs)(delayed(function)(item, *args, **kwargs) for item in items)
