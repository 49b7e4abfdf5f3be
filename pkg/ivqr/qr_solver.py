#!/usr/bin/env python

"""
qr_solver
=========

Weighted quantile regression with an optional linear gradient term, posed as
the linear program

    min  tau * V'u + (1 - tau) * V'v - S'eta
    s.t. X eta + u - v = Y,  u >= 0, v >= 0,  eta free

and solved with HiGHS through `scipy.optimize.linprog`.

When the optimal face is not a single point the lexicographically smallest
optimal vertex is returned (status "degenerate-tie").
"""

import logging

import numpy as np
from scipy import optimize, sparse

from .models import NumericalError, RankDeficient, Unbounded, ValidationError
from .toolkit import check_full_rank


logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
OPTIMALITY_TOL = 1e-7
ZERO_RESIDUAL_TOL = 1e-10

OPTIMAL = "optimal"
UNBOUNDED = "unbounded"
DEGENERATE_TIE = "degenerate-tie"


def rho_tau(u, tau):
    """
    Check function ``u * (tau - 1{u <= 0})``.

    Works elementwise on arrays.
    """
    u = np.asarray(u, dtype=float)
    value = u * (tau - (u <= 0))
    if value.ndim == 0:
        return float(value)
    return value


def zero_tolerance(responses):
    """Absolute threshold under which a residual counts as exactly zero."""
    scale = np.max(np.abs(responses)) if np.size(responses) else 0.0
    return ZERO_RESIDUAL_TOL * max(1.0, scale)


def snapped_residuals(responses, design, coefficients):
    """
    ``Y - X eta`` with residuals of interpolated observations set to exactly zero.
    """
    residuals = responses - design @ coefficients
    residuals[np.abs(residuals) <= zero_tolerance(responses)] = 0.0
    return residuals


class QrProblem(object):
    """
    A weighted, gradient-shifted quantile regression problem.

    :param responses: The stacked outcome (y - X b), length n.
    :type responses: numpy.ndarray
    :param design: n x p design ([W, Phi]).
    :type design: numpy.ndarray
    :param weights: Nonnegative weights, length n. Defaults to ones.
    :type weights: numpy.ndarray
    :param tau: Quantile index inside (0, 1).
    :type tau: float
    :param shift: Gradient term S, length p. Defaults to zero.
    :type shift: numpy.ndarray

    :Example:

    from ivqr.qr_solver import QrProblem, solve
    problem = QrProblem([1., 2., 3.], np.ones((3, 1)), tau=0.5)
    solve(problem).coefficients   # array([2.])
    """
    def __init__(self, responses, design, weights=None, tau=0.5, shift=None):
        super(QrProblem, self).__init__()
        self.responses = np.asarray(responses, dtype=float).ravel()
        design = np.asarray(design, dtype=float)
        if design.ndim == 1:
            design = design.reshape(-1, 1)
        self.design = design
        n, p = self.design.shape
        self.weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float).ravel()
        self.tau = float(tau)
        self.shift = np.zeros(p) if shift is None else np.asarray(shift, dtype=float).ravel()
        self.check()

    def __repr__(self):
        return "QrProblem(n=%i, p=%i, tau=%s%s)" % (
            self.n, self.p, self.tau, ", shifted" if np.any(self.shift) else "")

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]

    def check(self):
        n, p = self.design.shape
        if p < 1 or n < p:
            raise ValidationError("Quantile regression needs n >= p >= 1 (got n=%i, p=%i)." % (n, p))
        if self.responses.shape[0] != n or self.weights.shape[0] != n:
            raise ValidationError("Responses, design and weights must have the same number of rows.")
        if self.shift.shape[0] != p:
            raise ValidationError("Shift must have one entry per design column.")
        if not 0.0 < self.tau < 1.0:
            raise ValidationError("tau=%s is not inside (0, 1)." % self.tau)
        if np.any(self.weights < 0):
            raise ValidationError("Weights must be nonnegative.")
        for name, values in (("responses", self.responses), ("design", self.design),
                             ("weights", self.weights), ("shift", self.shift)):
            if not np.all(np.isfinite(values)):
                raise ValidationError("Quantile regression %s are not finite." % name)
        positive = self.weights > 0
        if positive.sum() < p:
            raise RankDeficient("Fewer than p=%i observations have a positive weight." % p)
        check_full_rank(self.design[positive], "Quantile regression design")

    def objective(self, coefficients):
        """Objective value at `coefficients`."""
        coefficients = np.asarray(coefficients, dtype=float).ravel()
        residuals = self.responses - self.design @ coefficients
        return float(np.sum(rho_tau(residuals, self.tau) * self.weights) - self.shift @ coefficients)


class QrSolution(object):
    """
    Optimum of a `QrProblem`.
    """
    def __init__(self, coefficients, objective, positive_part, negative_part, status=OPTIMAL):
        self.coefficients = coefficients
        self.objective = objective
        self.positive_part = positive_part
        self.negative_part = negative_part
        self.status = status

    def __repr__(self):
        return "QrSolution(%s, objective=%.6g, coefficients=%s)" % (self.status, self.objective, self.coefficients)

    @property
    def residuals(self):
        return self.positive_part - self.negative_part


def _linprog(cost, a_eq, b_eq, bounds, a_ub=None, b_ub=None):
    result = optimize.linprog(
        cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs-ds",
        options={"primal_feasibility_tolerance": FEASIBILITY_TOL, "dual_feasibility_tolerance": FEASIBILITY_TOL})
    if result.status in (2, 3):
        raise Unbounded("Quantile regression LP is unbounded: %s" % result.message)
    if result.status != 0:
        raise NumericalError("Quantile regression LP failed (status %i): %s" % (result.status, result.message))
    return result


def _lp_matrices(problem):
    n, p = problem.n, problem.p
    a_eq = sparse.hstack([
        sparse.csr_matrix(problem.design), sparse.identity(n, format="csr"), -sparse.identity(n, format="csr")
    ], format="csr")
    cost = np.concatenate([-problem.shift, problem.tau * problem.weights, (1.0 - problem.tau) * problem.weights])
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    return cost, a_eq, bounds


def _basis_multipliers(problem, coefficients):
    """
    Split observations into interpolated ones (zero residual, positive weight)
    and the rest; return the interpolated indices and the right hand side of the
    first order condition ``sum_h a_i V_i X_i = -(sum_rest psi_i V_i X_i + S)``.
    """
    residuals = snapped_residuals(problem.responses, problem.design, coefficients)
    interpolated = np.flatnonzero((residuals == 0) & (problem.weights > 0))
    rest = np.setdiff1d(np.arange(problem.n), interpolated)
    psi = problem.tau - (residuals[rest] < 0)
    target = -(problem.design[rest].T @ (psi * problem.weights[rest]) + problem.shift)
    return interpolated, target


def _is_unique_vertex(problem, coefficients):
    interpolated, target = _basis_multipliers(problem, coefficients)
    if interpolated.size != problem.p:
        return False
    basis = problem.design[interpolated].T * problem.weights[interpolated]
    try:
        multipliers = np.linalg.solve(basis, target)
    except np.linalg.LinAlgError:
        return False
    margin = OPTIMALITY_TOL
    return bool(np.all(multipliers > problem.tau - 1 + margin) and np.all(multipliers < problem.tau - margin))


def _polish(problem, coefficients):
    """
    Snap a near-vertex to the exact interpolating fit of its p smallest residuals.
    """
    positive = np.flatnonzero(problem.weights > 0)
    residuals = np.abs(problem.responses[positive] - problem.design[positive] @ coefficients)
    chosen = positive[np.argsort(residuals, kind="stable")[:problem.p]]
    try:
        exact = np.linalg.solve(problem.design[chosen], problem.responses[chosen])
    except np.linalg.LinAlgError:
        return coefficients
    scale = max(1.0, abs(problem.objective(coefficients)))
    if problem.objective(exact) <= problem.objective(coefficients) + 1e-12 * scale and \
            np.max(np.abs(exact - coefficients)) <= 1e-5 * max(1.0, np.max(np.abs(coefficients))):
        return exact
    return coefficients


def _lexicographic_vertex(problem, optimum):
    """
    Lexicographically smallest coefficient vector among the optimal solutions.
    """
    cost, a_eq, bounds = _lp_matrices(problem)
    slack = OPTIMALITY_TOL * 1e-2 * max(1.0, abs(optimum))
    a_ub = sparse.csr_matrix(cost.reshape(1, -1))
    b_ub = np.array([optimum + slack])
    fixed = list()
    for k in range(problem.p):
        selector = np.zeros(cost.shape[0])
        selector[k] = 1.0
        bounds_k = list(bounds)
        for j, value in enumerate(fixed):
            bounds_k[j] = (value, value)
        result = _linprog(selector, a_eq, problem.responses, bounds_k, a_ub=a_ub, b_ub=b_ub)
        fixed.append(float(result.x[k]))
    return _polish(problem, np.array(fixed))


def _solution(problem, coefficients, status):
    residuals = snapped_residuals(problem.responses, problem.design, coefficients)
    return QrSolution(
        coefficients, problem.objective(coefficients),
        np.maximum(residuals, 0.0), np.maximum(-residuals, 0.0), status=status)


def solve(problem):
    """
    Minimize ``sum_i rho_tau(Y_i - X_i'eta) V_i - S'eta``.

    :param problem: The problem to solve.
    :type problem: QrProblem
    :returns: The optimum; the positive/negative parts are recomputed from the
        coefficients so complementarity holds exactly.
    :rtype: QrSolution
    :raises Unbounded: when the gradient term makes the objective unbounded below.
    """
    cost, a_eq, bounds = _lp_matrices(problem)
    result = _linprog(cost, a_eq, problem.responses, bounds)
    coefficients = np.asarray(result.x[:problem.p], dtype=float)
    coefficients = _polish(problem, coefficients)

    if _is_unique_vertex(problem, coefficients):
        return _solution(problem, coefficients, OPTIMAL)

    logger.debug("Optimal face of %r is not a unique vertex; refining lexicographically.", problem)
    coefficients = _lexicographic_vertex(problem, problem.objective(coefficients))
    return _solution(problem, coefficients, DEGENERATE_TIE)


def directional_derivative(problem, coefficients, direction):
    """
    One-sided derivative of the objective at `coefficients` along `direction`.
    """
    residuals = snapped_residuals(problem.responses, problem.design, coefficients)
    slope = problem.design @ direction
    zero = residuals == 0
    psi = problem.tau - (residuals < 0)
    value = -np.sum((psi * slope * problem.weights)[~zero])
    value += np.sum(rho_tau(-slope[zero], problem.tau) * problem.weights[zero])
    return float(value - problem.shift @ direction)


def verify_optimality(problem, solution, tol=1e-7):
    """
    Subgradient certificate.

    First every coordinate direction (both signs) must have a directional
    derivative of at least ``-tol``. Then a bounded least squares problem looks
    for multipliers ``a_i`` in ``[tau - 1, tau]`` on the interpolated
    observations that make the subgradient vanish.

    :returns: Whether zero lies in the subdifferential within `tol`.
    :rtype: bool
    """
    coefficients = np.asarray(solution.coefficients, dtype=float)
    for k in range(problem.p):
        direction = np.zeros(problem.p)
        for sign in (1.0, -1.0):
            direction[k] = sign
            if directional_derivative(problem, coefficients, direction) < -tol:
                return False

    interpolated, target = _basis_multipliers(problem, coefficients)
    if interpolated.size == 0:
        return bool(np.max(np.abs(target)) <= tol)
    basis = problem.design[interpolated].T * problem.weights[interpolated]
    lower, upper = problem.tau - 1.0, problem.tau
    fit = optimize.lsq_linear(
        basis, target, bounds=(np.full(interpolated.size, lower), np.full(interpolated.size, upper)),
        method="bvls", tol=1e-12)
    return bool(np.max(np.abs(basis @ fit.x - target)) <= tol)
