"""Brute-force ground truth: enumerate every possible world over a small domain.

Worlds are bit vectors over the ground atoms.  They are evaluated in chunks
of consecutive indices with numpy, which keeps a full 2**25 sweep inside a
few seconds.  Every summary the oracle produces is derived from one exact
histogram ``(true atoms per predicate, injective counts per soft formula) ->
number of worlds``, so the exact-rational results do not depend on
evaluation order.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from . import numerics
from .logic import (Atom, Distinct, Formula, Iff, Implies, ModelSpec, Not, Or, And,
                    Vocabulary, World, grounding_count, variables)

DEFAULT_CAP = 25
_CHUNK_BITS = 20


class CapExceeded(RuntimeError):
    """Raised when a brute-force sweep would exceed the ground-atom cap."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightFunctions:
    """Per-predicate weights for true (``w``) and false (``w_bar``) ground atoms; default 1."""
    w: Mapping[str, object] = field(default_factory=dict)
    w_bar: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for v in list(self.w.values()) + list(self.w_bar.values()):
            if not v > 0:
                raise ValueError("weights must be strictly positive")

    def true_weight(self, pred):
        return self.w.get(pred, 1)

    def false_weight(self, pred):
        return self.w_bar.get(pred, 1)

    @property
    def exact(self) -> bool:
        return all(isinstance(v, (int, Fraction)) for v in list(self.w.values()) + list(self.w_bar.values()))


def as_domain(domain) -> tuple[str, ...]:
    if isinstance(domain, int):
        return tuple(f"C{i}" for i in range(domain))
    return tuple(domain)


def statistic_scales(formulas: Sequence[Formula], n: int) -> list[Fraction]:
    """``1 / (C(n,k) k!)`` per formula; 0 when the formula has no injective grounding."""
    out = []
    for f in formulas:
        g = grounding_count(len(variables(f)), n)
        out.append(Fraction(1, g) if g else Fraction(0))
    return out


# ---------------------------------------------------------------------------
# vectorised evaluation
# ---------------------------------------------------------------------------

def _eval(f: Formula, s, truth):
    if isinstance(f, Atom):
        return truth[(f.pred, *(s[a] for a in f.args))]
    if isinstance(f, Not):
        return np.logical_not(_eval(f.arg, s, truth))
    if isinstance(f, Distinct):
        return s[f.left] != s[f.right]
    a = _eval(f.left, s, truth)
    b = _eval(f.right, s, truth)
    if isinstance(f, And):
        return np.logical_and(a, b)
    if isinstance(f, Or):
        return np.logical_or(a, b)
    if isinstance(f, Implies):
        return np.logical_or(np.logical_not(a), b)
    if isinstance(f, Iff):
        return np.equal(a, b)
    raise TypeError(f)


def _truth_table(ground, idx: np.ndarray, constant_from: int):
    """Atom truth arrays for the world indices ``idx``.

    Bits at or above ``constant_from`` are identical across the chunk and
    become Python bools (numpy broadcasts them for free).
    """
    truth = {}
    first = int(idx[0]) if idx.size else 0
    for k, atom in enumerate(ground):
        if k >= constant_from:
            truth[atom] = bool((first >> k) & 1)
        else:
            truth[atom] = ((idx >> k) & 1).astype(bool)
    return truth


def _chunks(m: int, cap: int):
    if m > cap:
        raise CapExceeded(f"{m} ground atoms exceed the brute-force cap of {cap}")
    total = 1 << m
    size = min(total, 1 << _CHUNK_BITS)
    for start in range(0, total, size):
        yield np.arange(start, start + size, dtype=np.int64), min(m, _CHUNK_BITS)


def _hard_mask(hard, domain, truth, size):
    mask = np.ones(size, dtype=bool)
    for sentence in hard:
        vs = variables(sentence)
        for consts in itertools.product(domain, repeat=len(vs)):
            mask &= np.broadcast_to(_eval(sentence, dict(zip(vs, consts)), truth), (size,))
            if not mask.any():
                return mask
    return mask


def enumerate_models(vocab: Vocabulary, hard: Sequence[Formula], domain, cap: int = DEFAULT_CAP) -> Iterator[World]:
    """Stream every world over ``domain`` that satisfies all hard sentences."""
    domain = as_domain(domain)
    ground = vocab.ground_atoms(domain)
    for idx, low in _chunks(len(ground), cap):
        truth = _truth_table(ground, idx, low)
        mask = _hard_mask(hard, domain, truth, idx.size)
        for i in idx[mask]:
            i = int(i)
            yield World(domain, frozenset(a for k, a in enumerate(ground) if (i >> k) & 1))


@dataclass(frozen=True)
class WorldTable:
    """Exact histogram of the models of the hard sentences.

    ``rows[r] = (true atoms per predicate..., injective count per formula...)``
    and ``counts[r]`` is the number of worlds sharing that row.
    """
    vocab: Vocabulary
    formulas: tuple
    n: int
    rows: np.ndarray
    counts: tuple[int, ...]

    @property
    def num_worlds(self) -> int:
        return sum(self.counts)

    @property
    def predicate_counts(self) -> np.ndarray:
        return self.rows[:, :len(self.vocab.predicates)]

    @property
    def formula_counts(self) -> np.ndarray:
        return self.rows[:, len(self.vocab.predicates):]

    def statistics(self) -> list[tuple[Fraction, ...]]:
        scales = statistic_scales(self.formulas, self.n)
        return [tuple(Fraction(int(c)) * s for c, s in zip(row, scales)) for row in self.formula_counts]

    def float_statistics(self) -> np.ndarray:
        scales = np.array([float(s) for s in statistic_scales(self.formulas, self.n)])
        return self.formula_counts.astype(float) * scales


@lru_cache(maxsize=64)
def world_table(vocab: Vocabulary, hard: tuple, formulas: tuple, domain: tuple, cap: int = DEFAULT_CAP) -> WorldTable:
    ground = vocab.ground_atoms(domain)
    preds = vocab.predicates
    n = len(domain)
    radices = [(n if vocab.arity(p) == 1 else n * n) + 1 for p in preds]
    radices += [grounding_count(len(variables(f)), n) + 1 for f in formulas]
    hist: Counter = Counter()
    for idx, low in _chunks(len(ground), cap):
        truth = _truth_table(ground, idx, low)
        mask = _hard_mask(hard, domain, truth, idx.size)
        sel = idx[mask]
        if sel.size == 0:
            continue
        truth = _truth_table(ground, sel, low) if sel.size != idx.size else truth
        cols = []
        for p in preds:
            col = np.zeros(sel.size, dtype=np.int64)
            for atom in ground:
                if atom[0] == p:
                    col += np.broadcast_to(truth[atom], (sel.size,))
            cols.append(col)
        for f in formulas:
            vs = variables(f)
            col = np.zeros(sel.size, dtype=np.int64)
            for consts in itertools.permutations(domain, len(vs)):
                col += np.broadcast_to(_eval(f, dict(zip(vs, consts)), truth), (sel.size,))
            cols.append(col)
        if not cols:
            hist[()] += int(sel.size)
            continue
        # mixed-radix row keys: a 1-d unique is far cheaper than unique(axis=0)
        key = np.zeros(sel.size, dtype=np.int64)
        for col, radix in zip(cols, radices):
            key = key * radix + col
        uniq, cnt = np.unique(key, return_counts=True)
        for k, c in zip(uniq.tolist(), cnt.tolist()):
            row = []
            for radix in reversed(radices):
                k, digit = divmod(k, radix)
                row.append(digit)
            hist[tuple(reversed(row))] += c
    keys = sorted(hist)
    width = len(preds) + len(formulas)
    rows = np.array(keys, dtype=np.int64).reshape(len(keys), width)
    return WorldTable(vocab, formulas, len(domain), rows, tuple(hist[k] for k in keys))


def model_table(model: ModelSpec, domain, cap: int = DEFAULT_CAP) -> WorldTable:
    return world_table(model.vocabulary, tuple(model.hard), model.formulas, as_domain(domain), cap)


# ---------------------------------------------------------------------------
# counting and the dual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CountResult:
    log_value: float
    exact: Fraction | int | None


def brute_wfomc(vocab: Vocabulary, hard: Sequence[Formula], weights: WeightFunctions, domain,
                cap: int = DEFAULT_CAP) -> CountResult:
    """Weighted model count by direct summation over every model of ``hard``."""
    domain = as_domain(domain)
    table = world_table(vocab, tuple(hard), (), domain, cap)
    n = len(domain)
    sizes = [n if vocab.arity(p) == 1 else n * n for p in vocab.predicates]
    counts = table.predicate_counts
    logs = []
    for row, mult in zip(counts, table.counts):
        lw = math.log(mult)
        for p, t, g in zip(vocab.predicates, row, sizes):
            lw += int(t) * math.log(weights.true_weight(p)) + (g - int(t)) * math.log(weights.false_weight(p))
        logs.append(lw)
    exact = None
    if weights.exact:
        exact = Fraction(0)
        for row, mult in zip(counts, table.counts):
            term = Fraction(mult)
            for p, t, g in zip(vocab.predicates, row, sizes):
                term *= Fraction(weights.true_weight(p)) ** int(t) * Fraction(weights.false_weight(p)) ** (g - int(t))
            exact += term
        if exact.denominator == 1:
            exact = exact.numerator
    return CountResult(numerics.logsumexp(logs), exact)


def brute_world_count(vocab: Vocabulary, hard: Sequence[Formula], domain, cap: int = DEFAULT_CAP) -> int:
    """Exact number of models of ``hard``."""
    return world_table(vocab, tuple(hard), (), as_domain(domain), cap).num_worlds


def brute_log_partition(model: ModelSpec, domain, lam, cap: int = DEFAULT_CAP) -> tuple[float, np.ndarray]:
    """``(log Z, E[Q])`` with ``Z = sum_w exp(<lam, Q_w>)`` over the models of the hard sentences."""
    table = model_table(model, domain, cap)
    if table.num_worlds == 0:
        return numerics.NEG_INF, np.full(len(model.soft), np.nan)
    q = table.float_statistics()
    logw = np.log(np.array(table.counts, dtype=float)) + q @ np.asarray(lam, dtype=float)
    log_z = numerics.logsumexp(logw)
    p = np.exp(logw - log_z)
    return log_z, p @ q


def brute_dual(model: ModelSpec, domain, lam, theta, cap: int = DEFAULT_CAP) -> tuple[float, np.ndarray]:
    """Dual criterion ``L(lam) = <lam, theta> - log Z`` and its gradient ``theta - E[Q]``."""
    theta = numerics.to_float(list(theta))
    log_z, expected = brute_log_partition(model, domain, lam, cap)
    if log_z == numerics.NEG_INF:
        raise ValueError("the hard sentences have no model over this domain")
    return float(np.dot(lam, theta) - log_z), theta - expected


def brute_polytope_points(model: ModelSpec, domain, cap: int = DEFAULT_CAP) -> set[tuple[Fraction, ...]]:
    return set(model_table(model, domain, cap).statistics())


def _in_hull_exact(p, others) -> bool:
    a_eq = [[q[k] for q in others] for k in range(len(p))] + [[1] * len(others)]
    return numerics.lp_solve([0] * len(others), A_eq=a_eq, b_eq=list(p) + [1]).optimal


def brute_hull_vertices(points) -> set[tuple[Fraction, ...]]:
    """Points that are not convex combinations of the other points.

    A floating-point LP over all other points proposes a small support; the
    decision is always made by an exact LP (on that support when it works,
    otherwise on every other point).
    """
    pts = sorted({tuple(Fraction(v) for v in p) for p in points})
    arr = numerics.to_float(pts)
    out = set()
    for i, p in enumerate(pts):
        others = pts[:i] + pts[i + 1:]
        if not others:
            out.add(p)
            continue
        rest = np.delete(arr, i, axis=0)
        a_eq = np.vstack([rest.T, np.ones(len(rest))])
        res = linprog(np.zeros(len(rest)), A_eq=a_eq, b_eq=np.append(arr[i], 1.0), bounds=(0, None),
                      method="highs")
        if res.status == 0:
            support = [others[k] for k in np.flatnonzero(res.x > 1e-9)]
            if support and _in_hull_exact(p, support):
                continue
        if not _in_hull_exact(p, others):
            out.add(p)
    return out


def brute_kl(model: ModelSpec, domain, lam_p, lam_q, cap: int = DEFAULT_CAP) -> float:
    """``D_KL(p || q)`` between the MLN distributions with weights ``lam_p`` and ``lam_q``."""
    table = model_table(model, domain, cap)
    q = table.float_statistics()
    mult = np.log(np.array(table.counts, dtype=float))
    lp = q @ np.asarray(lam_p, float)
    lq = q @ np.asarray(lam_q, float)
    log_zp = numerics.logsumexp(mult + lp)
    log_zq = numerics.logsumexp(mult + lq)
    prob = np.exp(mult + lp - log_zp)
    return float(prob @ ((lp - log_zp) - (lq - log_zq)))


def direction_basis(points) -> np.ndarray:
    """Orthonormal basis (columns) of the span of ``points - points[0]``."""
    points = list(points)
    diffs = [[a - b for a, b in zip(p, points[0])] for p in points[1:]]
    basis = numerics.row_basis(diffs) if diffs else []
    l = len(points[0])
    if not basis:
        return np.zeros((l, 0))
    q, _ = np.linalg.qr(numerics.to_float(basis).T)
    return q


def brute_mle(model: ModelSpec, domain, theta, tolerance: float = 1e-10, max_iter: int = 200,
              min_curvature: float = 1e-8, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Maximum-likelihood weights by dense Newton ascent on the enumerated dual.

    Works in an orthonormal basis of the directions spanned by the statistic
    points, so the result has no component along the affine-hull normals.
    Raises ``ConvergenceError`` when ``theta`` is outside the polytope (the
    gradient never vanishes) or on its boundary (the gradient does vanish
    numerically, but only once the distribution has collapsed onto a face,
    which shows up as curvature below ``min_curvature``).
    """
    table = model_table(model, domain, cap)
    q = table.float_statistics()
    logc = np.log(np.array(table.counts, dtype=float))
    theta = numerics.to_float(list(theta))
    basis = direction_basis(table.statistics())
    lam = np.zeros(q.shape[1])
    if basis.shape[1] == 0:
        return lam

    def state(lam):
        logw = logc + q @ lam
        log_z = numerics.logsumexp(logw)
        p = np.exp(logw - log_z)
        mean = p @ q
        cov = (q - mean).T @ ((q - mean) * p[:, None])
        return float(lam @ theta - log_z), theta - mean, cov

    value, grad, cov = state(lam)
    for _ in range(max_iter):
        g = basis.T @ grad
        h = basis.T @ cov @ basis
        if np.linalg.norm(g) <= tolerance:
            if np.linalg.eigvalsh(h).min() < min_curvature:
                break
            return lam
        step = basis @ np.linalg.solve(h, g)
        t = 1.0
        while True:
            cand = lam + t * step
            cv, cg, cc = state(cand)
            if cv >= value + 1e-4 * t * float(g @ (basis.T @ step)) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12 or np.linalg.norm(cand) > 1e6:
            break
        lam, value, grad, cov = cand, cv, cg, cc
    raise ConvergenceError("dual did not converge; theta is on the boundary of or outside the polytope")
