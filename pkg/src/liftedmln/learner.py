"""Maximum-likelihood weight learning by maximising the bounded dual.

The dual criterion ``L(lam) = <lam, theta> - log Z(lam)`` is concave; its
gradient is ``theta - E_lam[Q]``.  Optima can be taken orthogonal to the
affine-hull normals of the statistic polytope and inside the box
``|lam|_inf <= log|Omega| / eta``, which is what both optimizers search.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
import numpy as np

from . import numerics
from .logic import ModelSpec, World, stat_vector
from .oracle import statistic_scales
from .polytope import Facet, Polytope, build_polytope, interiority, membership
from .wfomc import LiftedModel, UnsatisfiableTheory, log_world_count

log = logging.getLogger(__name__)

OPTIMIZERS = ("pgd", "ellipsoid")


class LearnError(Exception):
    """Learning refused before optimisation started."""


class InfeasibleStatistics(LearnError):
    """theta lies outside the polytope; ``certificate = (a, b)`` with ``a.v <= b`` on it and ``a.theta > b``."""

    def __init__(self, certificate):
        self.certificate = certificate
        super().__init__("infeasible statistics: theta is outside the marginal polytope")


class ZeroInteriority(LearnError):
    """theta lies on the boundary; the likelihood has no finite maximiser."""

    def __init__(self, facet: Facet | None):
        self.facet = facet
        super().__init__("zero interiority: theta is on the boundary of the marginal polytope "
                         "(eta = 0), so some weight would diverge to infinity")


@dataclass
class LearnProblem:
    model: ModelSpec
    n: int
    theta: tuple                       # exact statistics
    epsilon: float
    eta: float
    log_count: float                   # log |Omega|
    a_eq: list = field(default_factory=list)
    c_eq: list = field(default_factory=list)
    threads: int = 1

    @property
    def num_formulas(self) -> int:
        return len(self.theta)

    @property
    def radius(self) -> float:
        """Box half-width ``log|Omega| / eta``."""
        if math.isinf(self.eta):
            return 0.0
        return self.log_count / self.eta

    def projector(self) -> np.ndarray:
        return numerics.to_float(numerics.null_projection(self.a_eq, self.num_formulas))

    def null_basis(self) -> np.ndarray:
        """Orthonormal columns spanning ``null(A_eq)``."""
        l = self.num_formulas
        rows = numerics.nullspace(self.a_eq, l)
        if not rows:
            return np.zeros((l, 0))
        q, _ = np.linalg.qr(numerics.to_float(rows).T)
        return q


@dataclass
class DualState:
    lam: np.ndarray
    value: float
    grad: np.ndarray
    proj_grad_norm: float
    expected: np.ndarray | None = None

    @property
    def moment_gap(self) -> float:
        return float(np.linalg.norm(self.grad))


@dataclass
class LearnReport:
    lam: list
    weights: list                      # per-grounding MLN weights
    value: float
    expected: list
    theta: tuple
    moment_gap: float
    eta: float
    radius: float
    optimizer: str
    iterations: int
    oracle_calls: int
    status: str                        # "ok" | "budget_exhausted"
    gap_bound: float                   # certified bound on L* - L(lam)
    log_count: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class DualOracle:
    """Value and gradient of the dual through the lifted partition function."""

    def __init__(self, problem: LearnProblem):
        self.problem = problem
        self.lifted = LiftedModel(problem.model, problem.n, problem.threads)
        self.theta = numerics.to_float(list(problem.theta))
        self.projector = problem.projector()

    @property
    def calls(self) -> int:
        return self.lifted.calls

    def __call__(self, lam) -> DualState:
        lam = np.asarray(lam, dtype=float)
        if not np.all(np.isfinite(lam)):
            raise ValueError("weights must be finite")
        log_z, expected = self.lifted.log_partition(lam)
        if log_z == numerics.NEG_INF:
            raise UnsatisfiableTheory("the hard sentences have no model over this domain")
        grad = self.theta - expected
        pg = self.projector @ grad
        return DualState(lam, float(lam @ self.theta - log_z), grad, float(np.linalg.norm(pg)), expected)


def dual_oracle(problem: LearnProblem, lam) -> tuple[float, np.ndarray]:
    state = DualOracle(problem)(lam)
    return state.value, state.grad


def project(v, a_eq) -> np.ndarray:
    """Orthogonal projection of ``v`` onto ``null(A_eq)``."""
    v = np.asarray(v, dtype=float)
    if not len(a_eq):
        return v.copy()
    return numerics.to_float(numerics.null_projection(a_eq, len(v))) @ v


def project_box(v, projector: np.ndarray, radius: float, iterations: int = 10000, tol: float = 1e-13) -> np.ndarray:
    """Euclidean projection onto ``null(A_eq) ∩ {|x|_inf <= radius}`` (Dykstra)."""
    x = projector @ np.asarray(v, dtype=float)
    if np.max(np.abs(x), initial=0.0) <= radius:
        return x
    y = x.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iterations):
        z = np.clip(y + p, -radius, radius)
        p = y + p - z
        y_new = projector @ (z + q)
        q = z + q - y_new
        # y alone can stall for a step while the corrections still move
        done = np.linalg.norm(y_new - y) <= tol and np.linalg.norm(y_new - z) <= tol
        y = y_new
        if done:
            break
    return y


def _gap_bound(state: DualState, radius_2: float) -> float:
    """Concavity bound ``L* - L(lam) <= |g| (|lam*| + |lam|)`` with ``|lam*| <= radius_2``."""
    return state.proj_grad_norm * (radius_2 + float(np.linalg.norm(state.lam)))


@dataclass
class _Outcome:
    state: DualState
    iterations: int
    status: str
    gap_bound: float


def _converged(state: DualState, bound: float, eps: float) -> bool:
    return state.moment_gap <= math.sqrt(eps) and bound <= eps


def pgd_maximize(problem: LearnProblem, oracle: DualOracle | None = None, max_iter: int = 50000,
                 armijo: float = 1e-4) -> _Outcome:
    """Projected gradient ascent from ``lam = 0`` with Armijo backtracking.

    Stops once the moment gap is at most ``sqrt(eps)`` and the concavity
    bound certifies the dual value to within ``eps``.
    """
    oracle = oracle or DualOracle(problem)
    eps, radius = problem.epsilon, problem.radius
    radius_2 = problem.log_count / problem.eta if not math.isinf(problem.eta) else 0.0
    state = oracle(np.zeros(problem.num_formulas))
    if radius == 0.0:
        return _Outcome(state, 0, "ok", _gap_bound(state, 0.0))
    for it in range(max_iter):
        bound = _gap_bound(state, radius_2)
        if _converged(state, bound, eps) or state.proj_grad_norm == 0.0:
            return _Outcome(state, it, "ok", bound)
        direction = oracle.projector @ state.grad
        alpha = 1.0
        while True:
            cand = project_box(state.lam + alpha * direction, oracle.projector, radius)
            new = oracle(cand)
            # a few ulps of slack so rounding in L cannot reject every step near the optimum
            slack = 8 * np.finfo(float).eps * max(1.0, abs(state.value))
            if new.value >= state.value + armijo * float(state.grad @ (cand - state.lam)) - slack:
                break
            alpha *= 0.5
            if alpha < 1e-14:
                log.warning("line search stalled at iteration %d", it)
                return _Outcome(state, it, "budget_exhausted", bound)
        state = new
    return _Outcome(state, max_iter, "budget_exhausted", _gap_bound(state, radius_2))


def ellipsoid_budget(problem: LearnProblem, m: int) -> tuple[float, int]:
    l = problem.num_formulas
    beta = problem.epsilon * problem.eta / ((2 * l + 1) * problem.log_count)
    iters = math.ceil(2 * m * (m + 1) * math.log(math.sqrt(l) / beta)) if m > 1 else \
        math.ceil(2 * math.log(2 * math.sqrt(l) / beta) / math.log(2)) + 1
    return beta, max(iters, 1)


def ellipsoid_maximize(problem: LearnProblem, oracle: DualOracle | None = None) -> _Outcome:
    """Central-cut ellipsoid method in an orthonormal basis of ``null(A_eq)``.

    Starts from the ball of radius ``R sqrt(l)`` around the origin.  Points
    outside the box get a feasibility cut; inside, the projected gradient
    gives an objective cut.  Every objective query also yields the upper
    bound ``L(c) + sqrt(g^T H g)`` on the maximum over the current
    ellipsoid, so the method stops as soon as the best value seen is
    certified to within ``eps`` (and the moment gap is small).
    """
    oracle = oracle or DualOracle(problem)
    eps, radius = problem.epsilon, problem.radius
    basis = problem.null_basis()
    m = basis.shape[1]
    l = problem.num_formulas
    best = oracle(np.zeros(l))
    if radius == 0.0 or m == 0:
        return _Outcome(best, 0, "ok", 0.0)
    _, budget = ellipsoid_budget(problem, m)
    center = np.zeros(m)
    shape = np.eye(m) * (radius * math.sqrt(l)) ** 2
    upper = math.inf
    for it in range(budget):
        lam = basis @ center
        worst = int(np.argmax(np.abs(lam)))
        if abs(lam[worst]) > radius:
            cut = basis[worst] * np.sign(lam[worst])        # keep a.y <= a.c
            state = None
        else:
            state = oracle(lam) if it else best
            if state.value > best.value:
                best = state
            g = basis.T @ state.grad
            spread = float(math.sqrt(max(g @ shape @ g, 0.0)))
            upper = min(upper, max(best.value, state.value + spread))
            if spread == 0.0 or (best.value >= upper - eps and best.moment_gap <= math.sqrt(eps)):
                return _Outcome(best, it, "ok", max(upper - best.value, 0.0))
            cut = -g
        hc = shape @ cut
        denom = math.sqrt(float(cut @ hc))
        if denom == 0.0:
            break
        b = hc / denom
        if m == 1:
            center = center - b / 2
            shape = shape / 4
        else:
            center = center - b / (m + 1)
            shape = (m * m / (m * m - 1.0)) * (shape - (2.0 / (m + 1)) * np.outer(b, b))
            shape = (shape + shape.T) / 2
    status = "ok" if best.value >= upper - eps and best.moment_gap <= math.sqrt(eps) else "budget_exhausted"
    return _Outcome(best, budget, status, max(upper - best.value, 0.0))


def make_problem(model: ModelSpec, theta=None, database: World | None = None, n: int | None = None,
                 epsilon: float = 1e-3, eta: float | None = None, facets: str = "auto",
                 threads: int = 1, polytope: Polytope | None = None) -> tuple[LearnProblem, Polytope]:
    """Statistics, polytope, membership, interiority and ``log|Omega|`` for a learning run."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if eta is not None and eta <= 0:
        raise ValueError("eta must be positive")
    if database is not None:
        theta = stat_vector(model, database)
        n = len(database.domain) if n is None else n
    if theta is None or n is None:
        raise ValueError("need a database, or theta together with a domain size")
    theta = tuple(Fraction(t) for t in theta)
    if len(theta) != len(model.soft):
        raise ValueError(f"theta has {len(theta)} entries, the model has {len(model.soft)} soft formulas")
    log_count = log_world_count(model.hard, model.vocabulary, n)
    if log_count == numerics.NEG_INF:
        raise UnsatisfiableTheory("the hard sentences have no model over this domain")
    poly = polytope or build_polytope(model, n, facets if eta is None else "off")
    member = membership(theta, poly)
    if member.status == "outside":
        raise InfeasibleStatistics(member.certificate)
    if member.status == "boundary":
        raise ZeroInteriority(member.facet)
    if eta is None:
        if poly.dim == 0:
            eta = math.inf
        else:
            if poly.facets is None:
                raise ValueError(f"interiority needs facets (affine dimension {poly.dim}); "
                                 "pass eta explicitly or request full facet enumeration")
            eta = interiority(theta, poly).eta
    problem = LearnProblem(model, n, theta, epsilon, float(eta), float(log_count),
                           [list(r) for r in poly.a_eq], list(poly.c_eq), threads)
    return problem, poly


def solve(problem: LearnProblem, optimizer: str = "pgd") -> LearnReport:
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    oracle = DualOracle(problem)
    run = pgd_maximize if optimizer == "pgd" else ellipsoid_maximize
    out = run(problem, oracle)
    st = out.state
    scales = [float(s) for s in statistic_scales(problem.model.formulas, problem.n)]
    log.info("%s finished: status=%s iterations=%d calls=%d gap=%.3g",
             optimizer, out.status, out.iterations, oracle.calls, st.moment_gap)
    return LearnReport(
        lam=st.lam.tolist(),
        weights=[s * v for s, v in zip(scales, st.lam.tolist())],
        value=st.value,
        expected=st.expected.tolist(),
        theta=problem.theta,
        moment_gap=st.moment_gap,
        eta=problem.eta,
        radius=problem.radius,
        optimizer=optimizer,
        iterations=out.iterations,
        oracle_calls=oracle.calls,
        status=out.status,
        gap_bound=out.gap_bound,
        log_count=problem.log_count,
    )


def learn(model: ModelSpec, database: World | None = None, theta=None, n: int | None = None,
          epsilon: float = 1e-3, eta: float | None = None, optimizer: str = "pgd",
          facets: str = "auto", threads: int = 1) -> LearnReport:
    """Learn MLN weights whose expected statistics match ``theta`` (or the database's)."""
    problem, _ = make_problem(model, theta, database, n, epsilon, eta, facets, threads)
    return solve(problem, optimizer)
