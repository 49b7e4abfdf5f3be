#!/usr/bin/env python

"""
ivqr
====

Models for clustered IV quantile regression.

Workflow explained:
    - A `ClusteredDataset` is loaded (or simulated)
    - Instruments are built from it following an `InstrumentRecipe`
        - the result is an `InstrumentSet` holding one instrument column per quantile
    - The profiled estimator produces an `IvqrFit`
    - Bootstrap and baseline tests produce `TestResult` objects

In the process, stuff is checked:
    - equal row counts and finite entries
    - cluster labels (mapped to contiguous indices in order of appearance)
    - configuration values, before any computation starts

:Example:

from ivqr.models import ClusteredDataset, InstrumentRecipe
data = ClusteredDataset(y, x, w, z, cluster)
data.n_clusters
data.cluster_sizes

recipe = InstrumentRecipe("np-full")

# run options are read from the config file
# but can be changed on the fly:
config = RunConfig()
config["test"]["alpha"] = 0.05
config.check()

"""

import copy as _copy
import os as _os

import numpy as _np
import pandas as _pd
import yaml as _yaml


# Errors

class IvqrError(Exception):
    """Base class of all errors raised by the package."""
    pass


class ValidationError(IvqrError, ValueError):
    """Invalid input data, configuration or arguments."""
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = "line %i: %s" % (line, message)
        super(ParseError, self).__init__(message)
        self.line = line


class MissingColumn(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class EmptyCluster(ValidationError):
    pass


class ZeroSizeCluster(ValidationError):
    pass


class IsolatedNode(ValidationError):
    pass


class NumericalError(IvqrError, ArithmeticError):
    """A computation could not produce a meaningful result."""
    pass


class RankDeficient(NumericalError):
    pass


class Unbounded(NumericalError):
    pass


class SingularCrve(NumericalError):
    pass


class SingularMoment(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class AllResidualsOutsideBandwidth(NumericalError):
    pass


class NonInformative(NumericalError):
    pass


class ClusterFitFailure(NumericalError):
    def __init__(self, message, failures=()):
        super(ClusterFitFailure, self).__init__(message)
        self.failures = sorted(failures)


class TooManyExcludedDraws(NumericalError):
    pass


# Warnings

class IvqrWarning(UserWarning):
    pass


class DegenerateInstrument(IvqrWarning):
    pass


class GridDegenerate(IvqrWarning):
    pass


class AssumptionViolation(IvqrWarning):
    pass


class SmallClusterWarning(IvqrWarning):
    pass


class SingleClusterWarning(IvqrWarning):
    pass


def _as_matrix(values, n, name):
    if values is None:
        return _np.zeros((n, 0))
    values = _np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.ndim != 2:
        raise ValidationError("%s must be a vector or a matrix." % name)
    return values


class ClusteredDataset(object):
    """
    A class to model clustered data (y, X, W, Z) with cluster labels and weights.

    :param y: Outcome, length n.
    :type y: array-like
    :param x: Scalar endogenous regressor, length n.
    :type x: array-like
    :param w: Exogenous regressors, n x d_w (without intercept).
    :type w: array-like
    :param z: Excluded instruments, n x d_z.
    :type z: array-like
    :param cluster: Cluster labels, length n. Any hashable labels; mapped to
        0..J-1 in order of first appearance.
    :type cluster: array-like
    :param v: Observation weights (default 1).
    :type v: array-like
    :param add_intercept: Prepend a column of ones to `w`.
    :type add_intercept: bool

    :Example:

    from ivqr.models import ClusteredDataset
    data = ClusteredDataset(y, x, w, z, cluster=states)
    data.subset(data.cluster == 0)
    """
    def __init__(self, y, x, w, z, cluster, v=None, add_intercept=True):
        super(ClusteredDataset, self).__init__()
        self.y = _np.asarray(y, dtype=float).ravel()
        n = self.y.shape[0]
        self.x = _np.asarray(x, dtype=float).ravel()
        w = _as_matrix(w, n, "W")
        if add_intercept:
            w = _np.column_stack([_np.ones(n), w])
        self.w = w
        self.z = _as_matrix(z, n, "Z")
        self.intercept = bool(add_intercept)

        codes, labels = _pd.factorize(_pd.Series(list(cluster)), sort=False)
        self.cluster = codes.astype(int)
        self.cluster_labels = list(labels)
        self.v = _np.ones(n) if v is None else _np.asarray(v, dtype=float).ravel()

        self.check()

    def __repr__(self):
        return "ClusteredDataset with %i observations in %i clusters (d_w=%i, d_z=%i)" % (
            self.n, self.n_clusters, self.d_w, self.d_z)

    def check(self):
        """
        Check row counts, cluster labels, finiteness and weights.
        """
        n = self.y.shape[0]
        for name, values in (("x", self.x), ("w", self.w), ("z", self.z), ("cluster", self.cluster), ("v", self.v)):
            if values.shape[0] != n:
                raise ValidationError("Column block '%s' has %i rows, expected %i." % (name, values.shape[0], n))
        if n == 0:
            raise ValidationError("Dataset is empty.")
        if _np.any(self.cluster < 0):
            raise ValidationError("Cluster labels must not be missing.")
        for name, values in (("y", self.y), ("x", self.x), ("w", self.w), ("z", self.z), ("v", self.v)):
            if not _np.all(_np.isfinite(values)):
                raise NonFinite("Column block '%s' has non-finite entries." % name)
        if _np.any(self.v < 0):
            raise ValidationError("Weights must be nonnegative.")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def n_clusters(self):
        return len(self.cluster_labels)

    @property
    def d_w(self):
        return self.w.shape[1]

    @property
    def d_z(self):
        return self.z.shape[1]

    @property
    def cluster_sizes(self):
        return _np.bincount(self.cluster, minlength=self.n_clusters)

    def cluster_rows(self, j):
        """Row indices of cluster `j`."""
        return _np.flatnonzero(self.cluster == j)

    def exogenous(self):
        """W without the automatically added intercept column."""
        return self.w[:, 1:] if self.intercept else self.w

    def subset(self, rows):
        """
        New dataset made of the given rows (boolean mask or indices); cluster
        labels are re-indexed in order of appearance.
        """
        rows = _np.asarray(rows)
        if rows.dtype == bool:
            rows = _np.flatnonzero(rows)
        labels = [self.cluster_labels[c] for c in self.cluster[rows]]
        return ClusteredDataset(
            self.y[rows], self.x[rows], self.w[rows], self.z[rows], labels,
            v=self.v[rows], add_intercept=False)._with_intercept_flag(self.intercept)

    def _with_intercept_flag(self, flag):
        self.intercept = flag
        return self

    def asDataFrame(self):
        """
        Returns a `pandas.DataFrame` in the CSV layout ``cluster,y,x,w_1..,z_1..,v``.
        """
        df = _pd.DataFrame({"cluster": [self.cluster_labels[c] for c in self.cluster], "y": self.y, "x": self.x})
        exog = self.exogenous()
        for k in range(exog.shape[1]):
            df["w_%i" % (k + 1)] = exog[:, k]
        for k in range(self.d_z):
            df["z_%i" % (k + 1)] = self.z[:, k]
        if _np.any(self.v != 1.0):
            df["v"] = self.v
        return df


METHOD_ALIASES = {
    "parametric": "parametric",
    "parametric-cluster": "parametric-cluster",
    "np-full": "nonparametric-full",
    "nonparametric-full": "nonparametric-full",
    "np-cluster": "nonparametric-cluster",
    "nonparametric-cluster": "nonparametric-cluster",
}


class InstrumentRecipe(object):
    """
    How to build the instrument column(s).

    :param method: One of parametric, parametric-cluster, np-full (nonparametric-full),
        np-cluster (nonparametric-cluster).
    :type method: str
    :param kernel: Smoothing kernel of the nonparametric recipes. Only "uniform".
    :type kernel: str
    :param bandwidths: Optional user bandwidths, keys among h1, h2, h3, h4.
        None values fall back to the rule of thumb.
    :type bandwidths: dict
    :param link: First stage link G(W, pi) of the parametric recipes. Only "linear".
    :type link: str
    """
    def __init__(self, method="np-full", kernel="uniform", bandwidths=None, link="linear"):
        super(InstrumentRecipe, self).__init__()
        if method not in METHOD_ALIASES:
            raise ValidationError("Unknown instrument method '%s'." % method)
        self.method = METHOD_ALIASES[method]
        if kernel != "uniform":
            raise ValidationError("Only the uniform kernel is available, got '%s'." % kernel)
        self.kernel = kernel
        if link != "linear":
            raise ValidationError("Only the linear link is available, got '%s'." % link)
        self.link = link
        self.bandwidths = dict()
        for key, value in (bandwidths or dict()).items():
            if key not in ("h1", "h2", "h3", "h4"):
                raise ValidationError("Unknown bandwidth key '%s'." % key)
            if value is None:
                continue
            if not value > 0:
                raise ValidationError("Bandwidth %s must be strictly positive." % key)
            self.bandwidths[key] = float(value)

    def __repr__(self):
        return "InstrumentRecipe('%s')" % self.method

    @property
    def nonparametric(self):
        return self.method.startswith("nonparametric")

    @property
    def cluster_level(self):
        return self.method.endswith("cluster")

    def to_dict(self):
        return {"method": self.method, "kernel": self.kernel, "link": self.link, "bandwidths": dict(self.bandwidths)}


class InstrumentSet(object):
    """
    Constructed instruments, one n x d_phi matrix per quantile index.

    :param values: Mapping tau -> n x d_phi array.
    :type values: dict
    :param zhat: First stage fitted values ``(Z, W) lambda`` (zero for a degenerate instrument).
    :type zhat: numpy.ndarray
    :param recipe: The recipe that produced the values.
    :type recipe: InstrumentRecipe
    :param bandwidths: Mapping tau -> dict of the bandwidths used (nonparametric recipes).
    :type bandwidths: dict
    :param chi: Mapping tau -> partialling-out coefficients (array, or J arrays for
        cluster-level recipes).
    :type chi: dict
    """
    def __init__(self, values, zhat, recipe, bandwidths=None, chi=None):
        super(InstrumentSet, self).__init__()
        self.values = dict()
        for tau, phi in values.items():
            phi = _np.asarray(phi, dtype=float)
            if phi.ndim == 1:
                phi = phi.reshape(-1, 1)
            self.values[float(tau)] = phi
        self.zhat = _np.asarray(zhat, dtype=float).ravel()
        self.recipe = recipe
        self.bandwidths = bandwidths or dict()
        self.chi = chi or dict()
        self.check()

    def __repr__(self):
        return "InstrumentSet(%s, taus=%s)" % (self.recipe.method, list(self.taus))

    def check(self):
        rows = set(phi.shape[0] for phi in self.values.values())
        if len(rows) > 1 or (rows and rows.pop() != self.zhat.shape[0]):
            raise ValidationError("Instrument values do not match the dataset size.")
        for tau, phi in self.values.items():
            if not _np.all(_np.isfinite(phi)):
                raise NonFinite("Instrument values at tau=%s are not finite." % tau)

    @property
    def taus(self):
        return tuple(sorted(self.values))

    @property
    def d_phi(self):
        return next(iter(self.values.values())).shape[1]

    def phi(self, tau):
        try:
            return self.values[float(tau)]
        except KeyError:
            raise ValidationError("Instruments were not built for tau=%s (available: %s)." % (tau, list(self.taus)))


class ProfileGrid(object):
    """
    Finite grid for the one dimensional search over the endogenous coefficient.

    :param lower: Smallest candidate.
    :type lower: float
    :param upper: Largest candidate (included when on the step lattice).
    :type upper: float
    :param step: Spacing.
    :type step: float
    """
    def __init__(self, lower=-3.0, upper=1.0, step=0.01):
        super(ProfileGrid, self).__init__()
        self.lower = float(lower)
        self.upper = float(upper)
        self.step = float(step)
        if not self.step > 0:
            raise ValidationError("Grid step must be positive.")
        if self.upper < self.lower:
            raise ValidationError("Grid upper bound is below the lower bound.")
        count = int(_np.floor((self.upper - self.lower) / self.step + 1e-9)) + 1
        decimals = max(0, int(_np.ceil(-_np.log10(self.step))) + 3)
        self.points = _np.round(self.lower + self.step * _np.arange(count), decimals)

    @classmethod
    def from_points(cls, points):
        """Grid made of arbitrary sorted candidates."""
        points = _np.unique(_np.asarray(points, dtype=float))
        if points.size == 0:
            raise ValidationError("Grid needs at least one point.")
        step = float(_np.min(_np.diff(points))) if points.size > 1 else 1.0
        grid = cls(points[0], points[-1], step)
        grid.points = points
        return grid

    def __repr__(self):
        return "ProfileGrid([%s, %s], step=%s, %i points)" % (self.lower, self.upper, self.step, len(self))

    def __len__(self):
        return self.points.shape[0]

    @property
    def midpoint(self):
        return 0.5 * (self.points[0] + self.points[-1])

    def to_dict(self):
        return {"min": self.lower, "max": self.upper, "step": self.step}


class TauFit(object):
    """
    Estimates at one quantile index.
    """
    def __init__(self, tau, beta, gamma, theta, profile_norms, a1, boundary=False):
        self.tau = float(tau)
        self.beta = float(beta)
        self.gamma = _np.asarray(gamma, dtype=float)
        self.theta = _np.asarray(theta, dtype=float)
        self.profile_norms = profile_norms
        self.a1 = _np.atleast_2d(a1)
        self.boundary = bool(boundary)

    def __repr__(self):
        return "TauFit(tau=%s, beta=%s)" % (self.tau, self.beta)

    def to_dict(self):
        return {
            "tau": self.tau, "beta": self.beta,
            "gamma": [float(g) for g in self.gamma],
            "theta": [float(t) for t in self.theta],
            "min_profile_norm": float(self.profile_norms.min()),
            "boundary": self.boundary,
        }


class IvqrFit(object):
    """
    Profiled IVQR estimates over a finite set of quantile indices.
    """
    def __init__(self, fits, grid):
        super(IvqrFit, self).__init__()
        self.fits = dict((float(f.tau), f) for f in fits)
        self.grid = grid

    def __repr__(self):
        return "IvqrFit(%s)" % ", ".join("beta(%s)=%.4f" % (t, f.beta) for t, f in sorted(self.fits.items()))

    def __getitem__(self, tau):
        return self.fits[float(tau)]

    @property
    def taus(self):
        return tuple(sorted(self.fits))

    def to_dict(self):
        return {"grid": self.grid.to_dict(), "fits": [self.fits[t].to_dict() for t in self.taus]}

    def profile_frame(self):
        """
        Long `pandas.DataFrame` (tau, b, norm) of every profile norm, plot-ready.
        """
        frames = list()
        for tau in self.taus:
            norms = self.fits[tau].profile_norms
            frames.append(_pd.DataFrame({"tau": tau, "b": norms.index.values, "norm": norms.values}))
        return _pd.concat(frames, ignore_index=True)


class SignVector(object):
    """
    A vector g in {-1, +1}^J of cluster sign changes.
    """
    def __init__(self, g):
        self.g = _np.asarray(g, dtype=int).ravel()
        if self.g.size == 0 or not _np.all(_np.abs(self.g) == 1):
            raise ValidationError("Sign vectors hold only -1 and +1 entries.")

    def __repr__(self):
        return "SignVector(%s)" % "".join("+" if s > 0 else "-" for s in self.g)

    def __len__(self):
        return self.g.size

    def __neg__(self):
        return SignVector(-self.g)

    def __eq__(self, other):
        return isinstance(other, SignVector) and _np.array_equal(self.g, other.g)

    def __hash__(self):
        return hash(tuple(self.g))


class BootstrapDraw(object):
    """
    Bootstrap estimates produced by one sign vector at one quantile index.
    """
    def __init__(self, g, tau, beta, gamma, theta, boundary=False):
        self.g = g
        self.tau = float(tau)
        self.beta = float(beta)
        self.gamma = _np.asarray(gamma, dtype=float)
        self.theta = _np.asarray(theta, dtype=float)
        self.boundary = bool(boundary)

    def __repr__(self):
        return "BootstrapDraw(%r, tau=%s, beta=%s)" % (self.g, self.tau, self.beta)


RESULT_FIELDS = [
    "method", "tau", "beta0", "statistic", "critical_value", "p_value", "reject",
    "n_sign_vectors", "excluded_draws", "alpha", "mode", "boundary_hits", "metadata",
]


class TestResult(object):
    """
    Outcome of one hypothesis test.

    `reject` is always ``statistic > critical_value``; ties do not reject.
    """
    __test__ = False

    def __init__(self, method, statistic, critical_value, p_value, alpha, n_sign_vectors, mode,
                 tau=None, beta0=None, excluded_draws=0, boundary_hits=0, metadata=None):
        self.method = method
        self.statistic = float(statistic)
        self.critical_value = float(critical_value)
        self.p_value = float(p_value)
        self.alpha = float(alpha)
        self.reject = bool(self.statistic > self.critical_value)
        self.n_sign_vectors = int(n_sign_vectors)
        self.mode = mode
        self.tau = tau
        self.beta0 = beta0
        self.excluded_draws = int(excluded_draws)
        self.boundary_hits = int(boundary_hits)
        self.metadata = metadata or dict()

    def __repr__(self):
        return "TestResult(%s: stat=%.4g, cv=%.4g, p=%.3f, %s)" % (
            self.method, self.statistic, self.critical_value, self.p_value, "reject" if self.reject else "accept")

    def to_dict(self):
        return dict((field, getattr(self, field)) for field in RESULT_FIELDS)

    @classmethod
    def from_dict(cls, record):
        result = cls(
            record["method"], record["statistic"], record["critical_value"], record["p_value"],
            record["alpha"], record["n_sign_vectors"], record["mode"], tau=record.get("tau"),
            beta0=record.get("beta0"), excluded_draws=record.get("excluded_draws", 0),
            boundary_hits=record.get("boundary_hits", 0), metadata=record.get("metadata"))
        if "reject" in record and bool(record["reject"]) != result.reject:
            raise ValidationError("Record has reject=%s inconsistent with its statistic." % record["reject"])
        return result


class ConfidenceSet(object):
    """
    Grid points at which a test fails to reject, reported as closed intervals
    of consecutive grid points.
    """
    def __init__(self, method, tau, alpha, grid, accepted):
        self.method = method
        self.tau = float(tau)
        self.alpha = float(alpha)
        self.grid = grid
        self.accepted = _np.asarray(accepted, dtype=bool)

    def __repr__(self):
        return "ConfidenceSet(%s, tau=%s, %s)" % (self.method, self.tau, self.intervals or "empty")

    @property
    def points(self):
        return self.grid.points[self.accepted]

    @property
    def empty(self):
        return not self.accepted.any()

    @property
    def intervals(self):
        intervals = list()
        start = None
        for i, inside in enumerate(self.accepted):
            if inside and start is None:
                start = i
            if not inside and start is not None:
                intervals.append((float(self.grid.points[start]), float(self.grid.points[i - 1])))
                start = None
        if start is not None:
            intervals.append((float(self.grid.points[start]), float(self.grid.points[-1])))
        return intervals

    @property
    def length(self):
        """Total length of the intervals."""
        return sum(hi - lo for lo, hi in self.intervals)

    def to_dict(self):
        return {
            "method": self.method, "tau": self.tau, "alpha": self.alpha,
            "intervals": [list(i) for i in self.intervals], "empty": self.empty,
            "grid": self.grid.to_dict(),
        }


class GroupEstimates(object):
    """
    Per-cluster IVQR estimates used by the group-based baselines.

    :param betas: Mapping cluster index -> estimate, for the clusters that succeeded.
    :type betas: dict
    :param failures: Mapping cluster index -> error message.
    :type failures: dict
    :param n_clusters: J.
    :type n_clusters: int
    """
    def __init__(self, betas, failures, n_clusters, tau):
        self.betas = _pd.Series(betas, dtype=float).sort_index()
        self.failures = dict(failures)
        self.n_clusters = int(n_clusters)
        self.tau = float(tau)
        if len(self.betas) + len(self.failures) != self.n_clusters:
            raise ValidationError("Group estimates do not cover every cluster.")

    def __repr__(self):
        return "GroupEstimates(J=%i, failures=%s)" % (self.n_clusters, sorted(self.failures))


class Network(object):
    """
    Undirected, unweighted graph without self loops.

    :param n: Number of nodes.
    :type n: int
    :param edges: m x 2 array of node pairs (each undirected edge once or twice).
    :type edges: array-like
    """
    def __init__(self, n, edges):
        super(Network, self).__init__()
        from scipy import sparse
        self.n = int(n)
        edges = _np.asarray(edges, dtype=int).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise ValidationError("Edge list refers to nodes outside 0..%i." % (self.n - 1))
        if _np.any(edges[:, 0] == edges[:, 1]):
            raise ValidationError("Self loops are not allowed.")
        pairs = _np.unique(_np.sort(edges, axis=1), axis=0) if edges.size else edges
        self.edges = pairs
        rows = _np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = _np.concatenate([pairs[:, 1], pairs[:, 0]])
        self.adjacency = sparse.csr_matrix((_np.ones(rows.size), (rows, cols)), shape=(self.n, self.n))

    @classmethod
    def from_adjacency(cls, matrix):
        matrix = _np.asarray(matrix)
        if matrix.shape[0] != matrix.shape[1] or not _np.array_equal(matrix, matrix.T):
            raise ValidationError("Adjacency matrix must be square and symmetric.")
        rows, cols = _np.nonzero(_np.triu(matrix, 1))
        if _np.any(_np.diag(matrix) != 0):
            raise ValidationError("Self loops are not allowed.")
        return cls(matrix.shape[0], _np.column_stack([rows, cols]))

    def __repr__(self):
        return "Network with %i nodes and %i edges" % (self.n, self.edges.shape[0])

    @property
    def degrees(self):
        return _np.asarray(self.adjacency.sum(axis=1)).ravel()


class Partition(object):
    """
    Cluster labels of a network's nodes. Nodes in dropped components carry the
    label -1; `sizes` counts labelled nodes only.
    """
    def __init__(self, labels):
        self.labels = _np.asarray(labels, dtype=int)
        kept = self.labels[self.labels >= 0]
        self.J = int(kept.max()) + 1 if kept.size else 0
        self.sizes = _np.bincount(kept, minlength=self.J)

    def __repr__(self):
        return "Partition(J=%i, sizes=%s)" % (self.J, list(self.sizes))

    @property
    def kept(self):
        return _np.flatnonzero(self.labels >= 0)

    def asDataFrame(self):
        return _pd.DataFrame({"node": _np.arange(self.labels.size), "label": self.labels})


class Dgp1Config(object):
    """
    Clustered design with Toeplitz within-cluster dependence and first stage
    strength (pi, 0, 2 pi) across the three thirds of the clusters.
    """
    def __init__(self, n=500, J=9, dz=1, pi=1.0, r=4.0, seed=0):
        self.n = int(n)
        self.J = int(J)
        self.dz = int(dz)
        self.pi = float(pi)
        self.r = float(r)
        self.seed = int(seed)
        self.check()

    def check(self):
        if self.J < 3:
            raise ConfigError("DGP 1 needs J >= 3 (three bands of first stage strength).")
        if self.n < self.J:
            raise ConfigError("DGP 1 needs n >= J.")
        if self.dz < 1:
            raise ConfigError("DGP 1 needs at least one instrument.")

    def with_seed(self, seed):
        other = _copy.copy(self)
        other.seed = int(seed)
        return other

    def to_dict(self):
        return {"dgp": 1, "n": self.n, "J": self.J, "dz": self.dz, "pi": self.pi, "r": self.r, "seed": self.seed}


class Dgp2Config(object):
    """
    Linear-in-means network design; clusters from spectral partitioning.

    :param adjacency_op: "le" links nodes closer than the radius (default);
        "ge" links nodes at least the radius apart.
    :type adjacency_op: str
    """
    def __init__(self, n=500, L=10, seed=0, adjacency_op="le", eigens="largest"):
        self.n = int(n)
        self.L = int(L)
        self.seed = int(seed)
        self.adjacency_op = adjacency_op
        self.eigens = eigens
        self.check()

    def check(self):
        if self.n < 50:
            raise ConfigError("DGP 2 needs n >= 50.")
        if self.L < 1:
            raise ConfigError("DGP 2 needs L >= 1.")
        if self.adjacency_op not in ("le", "ge"):
            raise ConfigError("adjacency_op must be 'le' or 'ge'.")
        if self.eigens not in ("largest", "smallest"):
            raise ConfigError("eigens must be 'largest' or 'smallest'.")

    def with_seed(self, seed):
        other = _copy.copy(self)
        other.seed = int(seed)
        return other

    def to_dict(self):
        return {"dgp": 2, "n": self.n, "L": self.L, "seed": self.seed,
                "adjacency_op": self.adjacency_op, "eigens": self.eigens}


MC_METHODS = ("T_CR", "T", "AR", "AR_CR", "T_STD", "IM", "CRS")


class McConfig(object):
    """
    Monte Carlo harness settings.
    """
    def __init__(self, replications=500, bootstrap_draws=300, taus=(0.1, 0.25, 0.5, 0.75, 0.9), alpha=0.10,
                 methods=("T_CR", "T", "AR", "T_STD", "IM", "CRS"), hypotheses=("H0", "H1"),
                 grid=None, mode="auto", seed=42, n_jobs=1):
        self.replications = int(replications)
        self.bootstrap_draws = int(bootstrap_draws)
        self.taus = tuple(float(t) for t in taus)
        self.alpha = float(alpha)
        self.methods = tuple(methods)
        self.hypotheses = tuple(hypotheses)
        self.grid = None if grid is None else tuple(float(g) for g in grid)
        self.mode = mode
        self.seed = int(seed)
        self.n_jobs = n_jobs
        self.check()

    def check(self):
        if self.replications < 1 or self.bootstrap_draws < 1:
            raise ConfigError("Replications and bootstrap draws must be positive.")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must be inside (0, 1).")
        for method in self.methods:
            if method not in MC_METHODS:
                raise ConfigError("Unknown method '%s'." % method)
        for hypothesis in self.hypotheses:
            if hypothesis not in ("H0", "H1"):
                raise ConfigError("Unknown hypothesis '%s'." % hypothesis)
        for tau in self.taus:
            if not 0 < tau < 1:
                raise ConfigError("tau=%s is not inside (0, 1)." % tau)
        if self.grid is not None and len(self.grid) != 3:
            raise ConfigError("grid must be (min, max, step).")

    def to_dict(self):
        return {
            "replications": self.replications, "bootstrap_draws": self.bootstrap_draws,
            "taus": list(self.taus), "alpha": self.alpha, "methods": list(self.methods),
            "hypotheses": list(self.hypotheses), "grid": None if self.grid is None else list(self.grid),
            "mode": self.mode, "seed": self.seed,
        }


def _merge(base, update):
    """Recursive dict update; None values in `update` are ignored."""
    for key, value in update.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


class RunConfig(object):
    """
    A class to hold the run configuration.

    Defaults are read from the packaged ``ivqr_config.yaml``, then from
    ``~/.ivqr_config.yaml`` when it exists, then from `path`; `overrides`
    (typically the command-line flags) win over all files.

    :param path: Optional YAML file.
    :type path: str
    :param overrides: Nested dict of values that overrule the files.
    :type overrides: dict
    :param user: Read the user-level file in the home directory.
    :type user: bool

    :Example:

    from ivqr.models import RunConfig
    config = RunConfig("run.yaml", overrides={"test": {"alpha": 0.05}})
    config["grid"]["step"]
    """
    def __init__(self, path=None, overrides=None, user=True):
        super(RunConfig, self).__init__()
        with open(_os.path.join(_os.path.dirname(__file__), "ivqr_config.yaml"), "r") as handle:
            self.config = _yaml.safe_load(handle)

        files = list()
        if user:
            files.append(_os.path.join(_os.path.expanduser("~"), ".ivqr_config.yaml"))
        if path is not None:
            if not _os.path.exists(path):
                raise ConfigError("Configuration file '%s' does not exist." % path)
            files.append(path)
        for config_file in files:
            if not _os.path.exists(config_file):
                continue
            with open(config_file, "r") as handle:
                try:
                    content = _yaml.safe_load(handle) or dict()
                except _yaml.YAMLError as e:
                    raise ConfigError("Could not parse '%s': %s" % (config_file, e))
            if not isinstance(content, dict):
                raise ConfigError("Configuration file '%s' is not a mapping." % config_file)
            _merge(self.config, content)

        _merge(self.config, overrides or dict())
        self.check()

    def __repr__(self):
        return "RunConfig(%s)" % ", ".join(sorted(self.config))

    def __getitem__(self, key):
        return self.config[key]

    def check(self):
        """
        Validate types, ranges and choices. Raises `ConfigError`.
        """
        c = self.config
        try:
            if c["instrument"]["method"] not in METHOD_ALIASES:
                raise ConfigError("instrument.method must be one of %s." % sorted(METHOD_ALIASES))
            for key in ("h1", "h2", "h3", "h4"):
                value = c["instrument"].get(key)
                if value is not None and not float(value) > 0:
                    raise ConfigError("instrument.%s must be strictly positive." % key)
            if not float(c["grid"]["step"]) > 0 or float(c["grid"]["max"]) < float(c["grid"]["min"]):
                raise ConfigError("grid needs min <= max and step > 0.")
            if not 0 < float(c["test"]["alpha"]) < 1:
                raise ConfigError("test.alpha must be inside (0, 1).")
            if c["test"]["mode"] not in ("auto", "enumerate", "sample"):
                raise ConfigError("test.mode must be auto, enumerate or sample.")
            if int(c["test"]["draws"]) < 1:
                raise ConfigError("test.draws must be positive.")
            if not 1 <= int(c["test"]["enumerate_max_j"]) <= 20:
                raise ConfigError("test.enumerate_max_j must be between 1 and 20.")
            if not 0 <= float(c["test"]["max_excluded_fraction"]) < 1:
                raise ConfigError("test.max_excluded_fraction must be inside [0, 1).")
            for tau in c["taus"]:
                if not 0 < float(tau) < 1:
                    raise ConfigError("taus must lie inside (0, 1).")
            if c["cluster"]["eigens"] not in ("largest", "smallest"):
                raise ConfigError("cluster.eigens must be largest or smallest.")
            if int(c["cluster"]["L"]) < 1:
                raise ConfigError("cluster.L must be positive.")
            if c["simulation"]["adjacency_op"] not in ("le", "ge"):
                raise ConfigError("simulation.adjacency_op must be le or ge.")
            if int(c["seed"]) < 0:
                raise ConfigError("seed must be nonnegative.")
            if int(c["n_jobs"]) == 0:
                raise ConfigError("n_jobs must not be 0.")
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError("Invalid configuration: %s" % e)

    def to_dict(self):
        return _copy.deepcopy(self.config)

    def recipe(self):
        """`InstrumentRecipe` described by the ``instrument`` section."""
        section = self.config["instrument"]
        return InstrumentRecipe(
            section["method"], bandwidths=dict((k, section.get(k)) for k in ("h1", "h2", "h3", "h4")))

    def grid(self):
        """`ProfileGrid` described by the ``grid`` section."""
        section = self.config["grid"]
        return ProfileGrid(section["min"], section["max"], section["step"])
