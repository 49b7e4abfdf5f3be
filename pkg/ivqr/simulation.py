#!/usr/bin/env python

"""
simulation
==========

Data generating processes and the Monte Carlo harness.

DGP 1: clustered data with Toeplitz within-cluster dependence, unbalanced
cluster sizes and first stage strength (pi, 0, 2 pi) across the three thirds
of the clusters. beta(u) = 1 + F(u), so beta(tau) = 1 + tau.

DGP 2: linear-in-means outcome on a random geometric network, clusters from
the spectral partition of the network. beta(tau) = 0.4666 + 0.2 (tau - 0.5).

:Example:

from ivqr.models import Dgp1Config, McConfig
from ivqr.simulation import monte_carlo
table = monte_carlo(Dgp1Config(J=9, pi=1.0), McConfig(replications=2, bootstrap_draws=20, taus=[0.5]))
table.rates
"""

import logging
import os

import numpy as np
import pandas as pd
from scipy import linalg, sparse, stats
from scipy.spatial import distance

from .bootstrap import run_test
from .clustering import spectral_partition
from .estimator import estimate
from .instruments import build_instruments
from .models import (
    ClusteredDataset, Dgp1Config, Dgp2Config, InstrumentRecipe, IvqrError, Network, ProfileGrid, SingularSystem,
    ZeroSizeCluster)
from .toolkit import parallel_map, replication_seed, resolve_n_jobs, stream_rng


logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 10

DEFAULT_GRIDS = {1: (0.0, 3.0, 0.05), 2: (-1.0, 2.0, 0.05)}


def cluster_sizes(n, J, r):
    """
    Unbalanced cluster sizes ``n_j = floor(n exp(r j / J) / sum_k exp(r k / J))``
    for j < J, the last cluster takes the remainder.

    :raises ZeroSizeCluster: when a cluster would be empty.
    :rtype: numpy.ndarray
    """
    if J < 1 or n < J:
        raise ZeroSizeCluster("Cluster sizes need n >= J >= 1 (n=%i, J=%i)." % (n, J))
    weights = np.exp(r * np.arange(1, J + 1) / float(J))
    sizes = np.floor(n * weights / weights.sum() + 1e-9).astype(int)
    sizes[-1] = n - sizes[:-1].sum()
    if np.any(sizes <= 0):
        raise ZeroSizeCluster("Cluster sizes %s contain an empty cluster." % list(sizes))
    return sizes


def toeplitz_normal(rng, size, rho, draws=1):
    """
    ``draws`` columns of a mean zero normal vector with covariance ``rho^|s-t|``.
    """
    factor = linalg.cholesky(linalg.toeplitz(rho ** np.arange(size)), lower=True)
    return factor @ rng.standard_normal((size, draws))


def first_stage_strength(j, J, pi):
    """Pi for cluster j (1-based): pi, 0 or 2 pi by thirds."""
    if j <= J / 3.0:
        return pi
    if j <= 2 * J / 3.0:
        return 0.0
    return 2.0 * pi


def gen_dgp1(config):
    """
    Draw one DGP 1 dataset.

    Within cluster j, every latent vector is Toeplitz(rho_j) normal with
    ``rho_j = 0.2 + 0.5 j / J``; ``Z = 1{F(a) > 0.5}``;
    ``X = 1{0.1 + sum_k Pi_j (F(a_k) - 0.5) + 0.5 (F(u) - 0.5) > 0}``;
    ``y = X (1 + F(u)) + sqrt(0.1) u`` with W = (1, chi2_1 / 2) and gamma = 0.

    :type config: ivqr.models.Dgp1Config
    :rtype: ivqr.models.ClusteredDataset
    """
    sizes = cluster_sizes(config.n, config.J, config.r)
    ys, xs, ws, zs, labels = list(), list(), list(), list(), list()
    for j, size in enumerate(sizes, start=1):
        rho = 0.2 + 0.5 * j / config.J
        a = toeplitz_normal(stream_rng(config.seed, "a", j), size, rho, config.dz)
        u = toeplitz_normal(stream_rng(config.seed, "u", j), size, rho)[:, 0]
        w = stream_rng(config.seed, "w", j).chisquare(1, size) / 2.0
        strength = first_stage_strength(j, config.J, config.pi)
        index = 0.1 + strength * (stats.norm.cdf(a) - 0.5).sum(axis=1) + 0.5 * (stats.norm.cdf(u) - 0.5)
        x = (index > 0).astype(float)
        ys.append(x * (1.0 + stats.norm.cdf(u)) + np.sqrt(0.1) * u)
        xs.append(x)
        ws.append(w)
        zs.append((stats.norm.cdf(a) > 0.5).astype(float))
        labels.extend([j] * size)
    return ClusteredDataset(np.concatenate(ys), np.concatenate(xs), np.concatenate(ws), np.vstack(zs), labels)


def beta_dgp2(u):
    return 0.4666 + 0.2 * (u - 0.5)


def delta_dgp2(u):
    """(delta_0(u), delta_1(u), delta_2(u))."""
    return 0.7683 + 0.25 * (u - 0.5), 0.0834 + 0.1 * (u - 0.5), 0.1507 + 0.2 * (u - 0.5)


class NetworkDraw(object):
    """
    Latent and observed variables of a DGP 2 draw on the full network.
    """
    def __init__(self, network, normalized, background, latent, y):
        self.network = network
        self.normalized = normalized
        self.background = background
        self.latent = latent
        self.y = y
        self.x = normalized @ y

    def __repr__(self):
        return "NetworkDraw(%r)" % self.network

    def fixed_point_residual(self):
        """``max |y - diag(beta(U)) A~ y - rest|``."""
        d0, d1, d2 = delta_dgp2(self.latent)
        rest = d0 + d1 * self.background + d2 * (self.normalized @ self.background)
        return float(np.max(np.abs(self.y - beta_dgp2(self.latent) * (self.normalized @ self.y) - rest)))


def random_geometric_network(rng, n, adjacency_op="le"):
    """
    Nodes uniform on the unit square, linked when their distance is at most
    ``(7 / (pi n))^(1/2)`` ("le") or at least that radius ("ge").
    """
    positions = rng.uniform(0.0, 1.0, (n, 2))
    distances = distance.squareform(distance.pdist(positions))
    radius = np.sqrt(7.0 / (np.pi * n))
    linked = distances <= radius if adjacency_op == "le" else distances >= radius
    np.fill_diagonal(linked, False)
    rows, cols = np.nonzero(np.triu(linked, 1))
    return Network(n, np.column_stack([rows, cols]))


def row_normalized(network):
    """``A~ = A / degree`` (rows of isolated nodes stay zero)."""
    degrees = network.degrees
    inverse = np.zeros_like(degrees)
    inverse[degrees > 0] = 1.0 / degrees[degrees > 0]
    return sparse.diags(inverse) @ network.adjacency


def draw_network_outcome(config, attempt=0, background=None):
    """
    Network, background characteristics, latent ranks and outcome of DGP 2 on
    all n nodes.

    :param background: Optional fixed B (replaces the zero/log-normal mixture).
    :rtype: NetworkDraw
    :raises SingularSystem: when ``I - diag(beta(U)) A~`` cannot be inverted.
    """
    seed = config.seed
    network = random_geometric_network(stream_rng(seed, "eta", attempt), config.n, config.adjacency_op)
    normalized = row_normalized(network)
    if background is None:
        rng = stream_rng(seed, "b", attempt)
        positive = rng.uniform(size=config.n) < 0.5
        lognormal = np.exp(-np.log(2.0) + np.sqrt(np.log(4.0)) * rng.standard_normal(config.n))
        background = np.where(positive, lognormal, 0.0)
    background = np.asarray(background, dtype=float)
    latent = stream_rng(seed, "u", attempt).uniform(size=config.n)

    d0, d1, d2 = delta_dgp2(latent)
    system = np.eye(config.n) - beta_dgp2(latent)[:, None] * normalized.toarray()
    rest = d0 + d1 * background + d2 * (normalized @ background)
    try:
        y = linalg.solve(system, rest)
    except linalg.LinAlgError as e:
        raise SingularSystem("I - diag(beta(U)) A~ is singular: %s" % e)
    if not np.all(np.isfinite(y)):
        raise SingularSystem("Outcome of the network system is not finite.")
    return NetworkDraw(network, normalized, background, latent, y)


def gen_dgp2(config, cluster_options=None):
    """
    Draw one DGP 2 dataset: ``X = A~ y``, ``W = (1, B, A~ B)``, ``Z = A~^2 B``,
    clusters from the spectral partition. Nodes outside the kept components are
    left out of the dataset.

    A singular system is redrawn from the next sub-seed (at most 10 times).

    :type config: ivqr.models.Dgp2Config
    :param cluster_options: Extra keyword arguments of `spectral_partition`.
    :type cluster_options: dict
    :returns: (dataset, network)
    :rtype: tuple
    """
    for attempt in range(MAX_ATTEMPTS):
        try:
            draw = draw_network_outcome(config, attempt)
            break
        except SingularSystem as e:
            logger.warning("DGP 2 seed %i attempt %i: %s; redrawing.", config.seed, attempt, e)
    else:
        raise SingularSystem("DGP 2 system singular in %i attempts." % MAX_ATTEMPTS)

    options = dict(cluster_options or dict())
    options.setdefault("eigens", config.eigens)
    partition = spectral_partition(draw.network, config.L, seed=config.seed, **options)
    kept = partition.kept
    normalized_b = draw.normalized @ draw.background
    z = draw.normalized @ normalized_b
    dataset = ClusteredDataset(
        draw.y[kept], draw.x[kept], np.column_stack([draw.background, normalized_b])[kept], z[kept],
        partition.labels[kept])
    return dataset, draw.network


def null_value(dgp, hypothesis, tau):
    """Tested value of beta(tau) under H0 or H1 for DGP 1 or 2."""
    if dgp == 1:
        return 1.0 + tau if hypothesis == "H0" else 0.5 + tau
    return (0.4666 if hypothesis == "H0" else 1.2166) + 0.2 * (tau - 0.5)


class RejectionTable(object):
    """
    Monte Carlo rejection rates (percent) with methods as rows and
    (hypothesis, tau) columns, and the matching counts of failed replications.
    """
    def __init__(self, rates, failures, replications, dgp, mc):
        self.rates = rates
        self.failures = failures
        self.replications = int(replications)
        self.dgp = dgp
        self.mc = mc

    def __repr__(self):
        return "RejectionTable(%i replications)\n%s" % (self.replications, self.rates.round(1))

    def to_dict(self):
        cells = list()
        for method in self.rates.index:
            for hypothesis, tau in self.rates.columns:
                cells.append({
                    "method": method, "hypothesis": hypothesis, "tau": float(tau),
                    "rate": float(self.rates.loc[method, (hypothesis, tau)]),
                    "failures": int(self.failures.loc[method, (hypothesis, tau)])})
        return {"replications": self.replications, "dgp": self.dgp.to_dict(), "mc": self.mc.to_dict(), "cells": cells}

    def asDataFrame(self):
        """Flat table: one row per method, columns ``H0_0.1 .. H1_0.9``."""
        frame = self.rates.copy()
        frame.columns = ["%s_%s" % (hypothesis, tau) for hypothesis, tau in frame.columns]
        frame.index.name = "method"
        return frame


def _dgp_number(config):
    return 1 if isinstance(config, Dgp1Config) else 2


def _replicate(r, dgp_config, mc, recipe, grid, dump_dir):
    """
    One replication: rejection decision (or None on failure) per (method, hypothesis, tau).
    """
    seed = replication_seed(mc.seed, r)
    dgp = _dgp_number(dgp_config)
    if dgp == 1:
        dataset = gen_dgp1(dgp_config.with_seed(seed))
    else:
        dataset, _ = gen_dgp2(dgp_config.with_seed(seed))
    if dump_dir is not None:
        from .io import dump_csv
        dump_csv(dataset, os.path.join(dump_dir, "replication_%04i.csv" % r))

    decisions = dict()
    for tau in mc.taus:
        for hypothesis in mc.hypotheses:
            beta0 = null_value(dgp, hypothesis, tau)
            try:
                instruments = build_instruments(dataset, recipe, [tau], beta0=beta0)
                fit = estimate(dataset, instruments, grid, taus=[tau])
            except IvqrError as e:
                logger.warning("Replication %i, %s, tau=%s: estimation failed (%s).", r, hypothesis, tau, e)
                for method in mc.methods:
                    decisions[(method, hypothesis, tau)] = None
                continue
            groups = None
            for method in mc.methods:
                try:
                    if method in ("IM", "CRS") and groups is None:
                        from .alt_inference import group_estimates
                        groups = group_estimates(dataset, instruments, tau, grid, beta0=beta0)
                    result = run_test(
                        method, dataset, instruments, beta0, [tau], mc.alpha, mc.mode, mc.bootstrap_draws,
                        seed, grid, fit=fit, groups=groups)
                    decisions[(method, hypothesis, tau)] = result.reject
                except IvqrError as e:
                    logger.warning("Replication %i, %s, %s, tau=%s failed: %s", r, method, hypothesis, tau, e)
                    decisions[(method, hypothesis, tau)] = None
    return decisions


def monte_carlo(dgp_config, mc_config, recipe=None, dump_dir=None):
    """
    Rejection frequencies of every method at every (hypothesis, tau).

    Replication r draws its data from ``replication_seed(mc.seed, r)``, so the
    table does not depend on the number of workers.

    :param dgp_config: DGP 1 or DGP 2 settings.
    :type dgp_config: ivqr.models.Dgp1Config or ivqr.models.Dgp2Config
    :param mc_config: Harness settings.
    :type mc_config: ivqr.models.McConfig
    :param recipe: Instrument recipe (default: full sample nonparametric).
    :type recipe: ivqr.models.InstrumentRecipe
    :param dump_dir: Write every generated dataset there as CSV.
    :type dump_dir: str
    :rtype: RejectionTable
    """
    recipe = InstrumentRecipe("np-full") if recipe is None else recipe
    dgp = _dgp_number(dgp_config)
    grid = ProfileGrid(*(mc_config.grid or DEFAULT_GRIDS[dgp]))
    if dump_dir is not None and not os.path.exists(dump_dir):
        os.makedirs(dump_dir)

    logger.info("Monte Carlo: DGP %i, %i replications, methods %s.", dgp, mc_config.replications,
                ", ".join(mc_config.methods))
    outcomes = parallel_map(
        _replicate, range(mc_config.replications), resolve_n_jobs(mc_config.n_jobs),
        dgp_config, mc_config, recipe, grid, dump_dir)

    columns = pd.MultiIndex.from_tuples(
        [(h, t) for h in mc_config.hypotheses for t in mc_config.taus], names=["hypothesis", "tau"])
    rates = pd.DataFrame(np.nan, index=list(mc_config.methods), columns=columns)
    failures = pd.DataFrame(0, index=list(mc_config.methods), columns=columns)
    for method in mc_config.methods:
        for hypothesis, tau in columns:
            decisions = [o[(method, hypothesis, tau)] for o in outcomes]
            done = [d for d in decisions if d is not None]
            failures.loc[method, (hypothesis, tau)] = len(decisions) - len(done)
            if done:
                rates.loc[method, (hypothesis, tau)] = 100.0 * np.mean(done)
    if failures.values.sum():
        logger.warning("Monte Carlo: %i failed (method, replication) cells.", int(failures.values.sum()))
    return RejectionTable(rates, failures, mc_config.replications, dgp_config, mc_config)
