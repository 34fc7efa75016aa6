"""Lifted weighted model counting for universally quantified two-variable theories.

A *cell* fixes every unary atom and every reflexive binary atom of one domain
element; a *pair type* fixes the directed binary atoms ``R(a,b), R(b,a)`` of
an unordered pair of distinct elements.  Given the cell of every element,
pair types of different pairs are independent, so

    WFOMC = sum_j multinomial(n; j) * prod_q u_q^j_q
            * prod_q r_qq^C(j_q,2) * prod_{q<r} r_qr^(j_q j_r)

where ``j`` ranges over compositions of ``n`` into the valid cells.  Soft
formulas are folded in through their xi predicates: since ``xi_i`` is fixed
by the biconditional, summing it out leaves a factor ``w(xi_i)`` per true
injective grounding of ``alpha_i``.  All tables are computed once per model;
only their log-weights depend on the weights.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from . import numerics
from .logic import (Atom, Distinct, Formula, Iff, ModelSpec, And, Vocabulary,
                    evaluate_with, grounding_count, variables)
from .oracle import CountResult, WeightFunctions, statistic_scales

CHUNK = 1 << 15


class UnsatisfiableTheory(ValueError):
    """The hard sentences have no model over the domain (Z = 0)."""


@dataclass(frozen=True)
class Cell:
    index: int                 # position among all 2**(|U|+|B|) cells
    truth: tuple[bool, ...]    # unary atoms, then reflexive binary atoms


@dataclass(frozen=True)
class LiftedTables:
    """Weight-independent structure of a theory.

    Feature columns are: true atoms per predicate (vocabulary order), then the
    number of true injective groundings contributed per soft formula.
    """
    vocab: Vocabulary
    formulas: tuple
    num_cells: int
    cells: tuple[Cell, ...]
    cell_features: np.ndarray                     # (valid cells, d)
    pairs: tuple[tuple[int, int], ...]            # (q, r), q <= r, positions in ``cells``
    pair_types: tuple[tuple[tuple[bool, ...], ...], ...]   # allowed types per pair
    pair_features: tuple[np.ndarray, ...]         # (allowed types, d) per pair

    @property
    def width(self) -> int:
        return len(self.vocab.predicates) + len(self.formulas)


def _cell_atoms(vocab: Vocabulary):
    return [(p, 0) for p in vocab.unary] + [(r, 0, 0) for r in vocab.binary]


def _pair_atoms(vocab: Vocabulary):
    return [a for r in vocab.binary for a in ((r, 0, 1), (r, 1, 0))]


def _local_truth(vocab, cell_a: Cell, cell_b: Cell | None, ptype=None):
    """Truth lookup for a one- or two-element local world on elements 0 and 1."""
    table = {}
    for cell, e in ((cell_a, 0), (cell_b, 1)):
        if cell is None:
            continue
        for atom, t in zip(_cell_atoms(vocab), cell.truth):
            table[(atom[0],) + tuple(e for _ in atom[1:])] = t
    if ptype is not None:
        for atom, t in zip(_pair_atoms(vocab), ptype):
            table[atom] = t
    return lambda pred, args: table[(pred, *args)]


@lru_cache(maxsize=128)
def build_tables(vocab: Vocabulary, hard: tuple, formulas: tuple) -> LiftedTables:
    preds = vocab.predicates
    n_cell_atoms = len(vocab.unary) + len(vocab.binary)
    one_var = [len(variables(f)) == 1 for f in formulas]
    cells, cell_feats = [], []
    for index in range(1 << n_cell_atoms):
        cell = Cell(index, tuple(bool((index >> k) & 1) for k in range(n_cell_atoms)))
        holds = _local_truth(vocab, cell, None)
        ok = all(evaluate_with(h, holds, {v: 0 for v in variables(h)}) for h in hard)
        if not ok:
            continue
        feats = [int(t) for t in cell.truth]
        feats += [int(evaluate_with(f, holds, {variables(f)[0]: 0})) if unary else 0
                  for f, unary in zip(formulas, one_var)]
        cells.append(cell)
        cell_feats.append(feats)

    two_var_hard = [h for h in hard if len(variables(h)) == 2]
    n_pair_atoms = 2 * len(vocab.binary)
    all_types = list(itertools.product((False, True), repeat=n_pair_atoms))
    pairs, pair_types, pair_feats = [], [], []
    for qi, ri in itertools.combinations_with_replacement(range(len(cells)), 2):
        allowed, feats = [], []
        for ptype in all_types:
            holds = _local_truth(vocab, cells[qi], cells[ri], ptype)
            ok = True
            for h in two_var_hard:
                x, y = variables(h)
                if not (evaluate_with(h, holds, {x: 0, y: 1}) and evaluate_with(h, holds, {x: 1, y: 0})):
                    ok = False
                    break
            if not ok:
                continue
            row = [int(ptype[2 * k]) + int(ptype[2 * k + 1]) for k in range(len(vocab.binary))]
            row = [0] * len(vocab.unary) + row
            for f, unary in zip(formulas, one_var):
                if unary:
                    row.append(0)
                else:
                    x, y = variables(f)
                    row.append(int(evaluate_with(f, holds, {x: 0, y: 1})) + int(evaluate_with(f, holds, {x: 1, y: 0})))
            allowed.append(ptype)
            feats.append(row)
        pairs.append((qi, ri))
        pair_types.append(tuple(allowed))
        pair_feats.append(np.array(feats, dtype=np.int64).reshape(len(feats), len(preds) + len(formulas)))
    width = len(preds) + len(formulas)
    return LiftedTables(vocab, tuple(formulas), 1 << n_cell_atoms, tuple(cells),
                        np.array(cell_feats, dtype=np.int64).reshape(len(cells), width),
                        tuple(pairs), tuple(pair_types), tuple(pair_feats))


def corrupt(tables: LiftedTables) -> LiftedTables:
    """Test hook: drop one allowed pair type so lifted results visibly disagree."""
    for k, types in enumerate(tables.pair_types):
        if len(types) > 1:
            types = tables.pair_types[:k] + (types[1:],) + tables.pair_types[k + 1:]
            feats = tables.pair_features[:k] + (tables.pair_features[k][1:],) + tables.pair_features[k + 1:]
            return replace(tables, pair_types=types, pair_features=feats)
    cells = tables.cell_features.copy()
    cells[0, 0] += 1
    return replace(tables, cell_features=cells)


# ---------------------------------------------------------------------------
# compositions of n into the valid cells
# ---------------------------------------------------------------------------

def compositions(n: int, parts: int, chunk: int = CHUNK) -> Iterator[np.ndarray]:
    """All vectors of ``parts`` nonnegative ints summing to ``n``, in fixed order, in chunks."""
    if parts == 0:
        if n == 0:
            yield np.zeros((1, 0), dtype=np.int64)
        return
    bars = itertools.combinations(range(n + parts - 1), parts - 1)
    while True:
        block = list(itertools.islice(bars, chunk))
        if not block:
            return
        b = np.array(block, dtype=np.int64).reshape(len(block), parts - 1)
        edges = np.concatenate([np.full((len(block), 1), -1), b, np.full((len(block), 1), n + parts - 1)], axis=1)
        yield np.diff(edges, axis=1) - 1


def _pair_counts(j: np.ndarray, pairs) -> np.ndarray:
    out = np.empty((j.shape[0], len(pairs)), dtype=np.int64)
    for k, (q, r) in enumerate(pairs):
        out[:, k] = j[:, q] * (j[:, q] - 1) // 2 if q == r else j[:, q] * j[:, r]
    return out


# ---------------------------------------------------------------------------
# weighted evaluation
# ---------------------------------------------------------------------------

def _feature_coefficients(tables: LiftedTables, weights: WeightFunctions | None, soft_log: np.ndarray):
    preds = tables.vocab.predicates
    beta = np.zeros(tables.width)
    cell_const = pair_const = 0.0
    if weights is not None:
        for k, p in enumerate(preds):
            lw, lwb = math.log(weights.true_weight(p)), math.log(weights.false_weight(p))
            beta[k] = lw - lwb
            cell_const += lwb
            if p in tables.vocab.binary:
                pair_const += 2 * lwb
    beta[len(preds):] = soft_log
    return beta, cell_const, pair_const


def _log_tables(tables: LiftedTables, beta, cell_const, pair_const):
    log_u = tables.cell_features @ beta + cell_const
    log_r = np.full(len(tables.pairs), numerics.NEG_INF)
    pair_mean = np.zeros((len(tables.pairs), tables.width))
    for k, feats in enumerate(tables.pair_features):
        if feats.shape[0] == 0:
            continue
        lw = feats @ beta
        lr = numerics.logsumexp(lw)
        log_r[k] = lr + pair_const
        pair_mean[k] = np.exp(lw - lr) @ feats
    return log_u, log_r, pair_mean


def _chunk_sum(j, n, tables, log_u, log_r, pair_mean):
    pc = _pair_counts(j, tables.pairs)
    finite = np.isfinite(log_r)
    terms = gammaln(n + 1) - gammaln(j + 1).sum(axis=1) + j @ log_u + pc[:, finite] @ log_r[finite]
    if not finite.all():
        dead = (pc[:, ~finite] > 0).any(axis=1)
        terms[dead] = numerics.NEG_INF
    log_z = numerics.logsumexp(terms)
    if log_z == numerics.NEG_INF:
        return log_z, np.zeros(tables.width)
    p = np.exp(terms - log_z)
    expected = p @ (j @ tables.cell_features) + p @ (pc @ pair_mean)
    return log_z, expected


def weighted_sum(tables: LiftedTables, n: int, weights: WeightFunctions | None = None,
                 soft_log=None, threads: int = 1) -> tuple[float, np.ndarray]:
    """``(log WFOMC, expected feature totals)``.

    ``soft_log[i]`` is the log-weight per true injective grounding of soft
    formula ``i``.  The outer sum is split into fixed-size chunks whose
    results are merged in order, so the output does not depend on
    ``threads``.
    """
    soft_log = np.zeros(len(tables.formulas)) if soft_log is None else np.asarray(soft_log, dtype=float)
    beta, cc, pc = _feature_coefficients(tables, weights, soft_log)
    log_u, log_r, pair_mean = _log_tables(tables, beta, cc, pc)
    chunks = compositions(n, len(tables.cells))
    work = lambda j: _chunk_sum(j, n, tables, log_u, log_r, pair_mean)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(j) for j in chunks]
    if not parts:
        return numerics.NEG_INF, np.zeros(tables.width)
    logs = np.array([lz for lz, _ in parts])
    log_z = numerics.logsumexp(logs)
    if log_z == numerics.NEG_INF:
        return log_z, np.zeros(tables.width)
    expected = sum(np.exp(lz - log_z) * e for lz, e in parts if lz != numerics.NEG_INF)
    return log_z, expected


def exact_sum(tables: LiftedTables, n: int, weights: WeightFunctions | None = None) -> Fraction | int:
    """Exact WFOMC with rational predicate weights and all soft weights 1."""
    weights = weights or WeightFunctions()
    preds = tables.vocab.predicates
    wt = [Fraction(weights.true_weight(p)) for p in preds]
    wf = [Fraction(weights.false_weight(p)) for p in preds]
    binary = [p in tables.vocab.binary for p in preds]

    def mono(feats, slots):
        out = Fraction(1)
        for t, a, b, s in zip(feats, wt, wf, slots):
            out *= a ** int(t) * b ** (s - int(t))
        return out

    u = [mono(f, [1] * len(preds)) for f in tables.cell_features]
    pair_slots = [2 if b else 0 for b in binary]
    r = [sum((mono(f, pair_slots) for f in feats), Fraction(0)) for feats in tables.pair_features]
    total = Fraction(0)
    for block in compositions(n, len(tables.cells)):
        for j in block.tolist():
            term = Fraction(math.factorial(n))
            for q, jq in enumerate(j):
                term /= math.factorial(jq)
                term *= u[q] ** jq
            for k, (q, s) in enumerate(tables.pairs):
                cnt = j[q] * (j[q] - 1) // 2 if q == s else j[q] * j[s]
                if cnt:
                    term *= r[k] ** cnt
            total += term
    return total.numerator if total.denominator == 1 else total


# ---------------------------------------------------------------------------
# model-level API
# ---------------------------------------------------------------------------

class LiftedModel:
    """Partition function and expected statistics of an MLN at a fixed domain size."""

    def __init__(self, model: ModelSpec, n: int, threads: int = 1, tables: LiftedTables | None = None):
        if n < 1:
            raise ValueError("domain size must be at least 1")
        self.model = model
        self.n = n
        self.threads = threads
        self.tables = tables or build_tables(model.vocabulary, tuple(model.hard), model.formulas)
        self.scales = np.array([float(s) for s in statistic_scales(model.formulas, n)])
        self.calls = 0

    def log_partition(self, lam) -> tuple[float, np.ndarray]:
        """``(log Z, E[Q])`` where ``Z = sum_w exp(<lam, Q_w>)``."""
        self.calls += 1
        lam = np.asarray(lam, dtype=float)
        log_z, feats = weighted_sum(self.tables, self.n, None, self.scales * lam, self.threads)
        expected = feats[len(self.model.vocabulary.predicates):] * self.scales
        return log_z, expected


def lifted_z(model: ModelSpec, lam, n: int, threads: int = 1) -> float:
    """``log Z``; ``-inf`` when the hard sentences are unsatisfiable over ``n`` elements."""
    return LiftedModel(model, n, threads).log_partition(lam)[0]


def lifted_expectations(model: ModelSpec, lam, n: int, threads: int = 1) -> np.ndarray:
    log_z, expected = LiftedModel(model, n, threads).log_partition(lam)
    if log_z == numerics.NEG_INF:
        raise UnsatisfiableTheory("Z = 0: the hard sentences have no model")
    return expected


def lifted_wfomc(vocab: Vocabulary, hard: Sequence[Formula], weights: WeightFunctions, n: int,
                 exact: bool = False, threads: int = 1) -> CountResult:
    tables = build_tables(vocab, tuple(hard), ())
    log_value, _ = weighted_sum(tables, n, weights, None, threads)
    value = exact_sum(tables, n, weights) if exact and weights.exact else None
    return CountResult(log_value, value)


def log_world_count(hard: Sequence[Formula], vocab: Vocabulary, n: int, exact: bool = False):
    """``log |Omega|``, or the exact integer count with ``exact=True``."""
    tables = build_tables(vocab, tuple(hard), ())
    if exact:
        return exact_sum(tables, n)
    return weighted_sum(tables, n)[0]


def xi_name(vocab: Vocabulary, i: int) -> str:
    name = f"xi{i + 1}"
    while name in vocab.predicates:
        name = "_" + name
    return name


def encode(model: ModelSpec, lam, n: int) -> tuple[Vocabulary, tuple[Formula, ...], WeightFunctions]:
    """Xi-predicate encoding: ``WFOMC(theory, w, w_bar) = Z``.

    Each soft formula gets a fresh predicate ``xi_i`` over its variables with
    ``xi_i <=> (alpha_i & x != y)`` and ``w(xi_i) = exp(lam_i / (C(n,k) k!))``.
    """
    unary, binary, theory, w = [], [], list(model.hard), {}
    for i, (wf, l) in enumerate(zip(model.soft, lam)):
        vs = variables(wf.formula)
        name = xi_name(model.vocabulary, i)
        body = wf.formula
        if len(vs) == 2:
            body = And(body, Distinct(*vs))
            binary.append(name)
        else:
            unary.append(name)
        theory.append(Iff(Atom(name, vs), body))
        g = grounding_count(len(vs), n)
        w[name] = math.exp(float(l) / g) if g and l != 0 else 1
    return model.vocabulary.extend(unary, binary), tuple(theory), WeightFunctions(w=w)
