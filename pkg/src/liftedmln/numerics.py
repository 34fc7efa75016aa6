"""Exact rational linear algebra, an exact simplex LP solver and log-space helpers.

Everything that decides polytope structure works on ``fractions.Fraction``
values so no tolerance ever enters a vertex or facet decision.  Floating
point is used only for the dual objective and the optimizers, and the
conversion is always explicit (``to_float``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Callable, Iterable, Sequence

import numpy as np

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# log-space reals
# ---------------------------------------------------------------------------

def logsumexp(values: Iterable[float]) -> float:
    """Stable ``log(sum(exp(v)))``; returns exactly ``-inf`` iff every input is ``-inf``."""
    arr = np.fromiter(values, dtype=float)
    if arr.size == 0:
        return NEG_INF
    top = arr.max()
    if top == NEG_INF:
        return NEG_INF
    if top == math.inf:
        return math.inf
    return float(top + np.log(np.exp(arr - top).sum()))


def log_add(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def central_gradient(f: Callable[[np.ndarray], float], x, step: float = 1e-4) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (f(x + e) - f(x - e)) / (2 * step)
    return grad


# ---------------------------------------------------------------------------
# rational matrices
# ---------------------------------------------------------------------------

def to_fraction_matrix(rows) -> list[list[Fraction]]:
    return [[Fraction(v) for v in row] for row in rows]


def to_float(values) -> np.ndarray:
    """Lossy conversion of a rational vector or matrix to float64."""
    return np.array(values, dtype=object).astype(float)


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def _integer_row(row: Sequence[Fraction]) -> list[int]:
    den = reduce(_lcm, (Fraction(v).denominator for v in row), 1)
    return [int(Fraction(v) * den) for v in row]


def _primitive(row: list[int]) -> list[int]:
    g = reduce(math.gcd, row, 0)
    if g > 1:
        return [v // g for v in row]
    return row


def rref(matrix: Sequence[Sequence], ncols: int | None = None) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form and pivot columns.

    Elimination runs fraction-free on integer rows (content is divided out
    after each step to keep entries small); only the final normalisation by
    the pivot produces fractions.
    """
    rows = [_integer_row(r) for r in matrix]
    if not rows:
        return [], []
    ncols = len(rows[0]) if ncols is None else ncols
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        if r == len(rows):
            break
        sel = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if sel is None:
            continue
        rows[r], rows[sel] = rows[sel], rows[r]
        p = rows[r]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = _primitive([p[c] * a - f * b for a, b in zip(rows[i], p)])
        pivots.append(c)
        r += 1
    out = []
    for i, c in enumerate(pivots):
        piv = rows[i][c]
        out.append([Fraction(v, piv) for v in rows[i]])
    return out, pivots


def rank(matrix) -> int:
    return len(rref(matrix)[1]) if matrix else 0


def row_basis(matrix) -> list[list[Fraction]]:
    return rref(matrix)[0] if matrix else []


def nullspace(matrix, ncols: int) -> list[list[Fraction]]:
    """Basis of ``{x : M x = 0}``, one basis vector per free column."""
    if not matrix:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    reduced, pivots = rref(matrix, ncols)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for row, pc in zip(reduced, pivots):
            v[pc] = -row[f]
        basis.append(v)
    return basis


def matmul(a, b) -> list[list[Fraction]]:
    bt = list(zip(*b))
    return [[sum((x * y for x, y in zip(row, col)), Fraction(0)) for col in bt] for row in a]


def matvec(a, v) -> list[Fraction]:
    return [sum((x * y for x, y in zip(row, v)), Fraction(0)) for row in a]


def transpose(a) -> list[list]:
    return [list(c) for c in zip(*a)]


def solve(a, b) -> list[list[Fraction]]:
    """Solve ``A X = B`` for square invertible ``A`` (``B`` is a matrix)."""
    n = len(a)
    aug = [list(a[i]) + list(b[i]) for i in range(n)]
    reduced, pivots = rref(aug, n)
    if pivots != list(range(n)):
        raise ValueError("singular system")
    return [row[n:] for row in reduced]


def null_projection(a, ncols: int) -> list[list[Fraction]]:
    """Orthogonal projector onto ``null(A)``: ``I - A^T (A A^T)^{-1} A``.

    Rows of ``A`` must be linearly independent.
    """
    eye = [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    if not a:
        return eye
    gram = matmul(a, transpose(a))
    x = solve(gram, a)
    correction = matmul(transpose(a), x)
    return [[eye[i][j] - correction[i][j] for j in range(ncols)] for i in range(ncols)]


# ---------------------------------------------------------------------------
# exact simplex
# ---------------------------------------------------------------------------

@dataclass
class LPResult:
    status: str                      # "optimal" | "infeasible" | "unbounded"
    x: list[Fraction] | None = None
    value: Fraction | None = None
    dual: list[Fraction] | None = None     # eq rows first, then ub rows
    farkas: list[Fraction] | None = None   # y with y^T A >= 0, y^T b < 0 when infeasible

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    def __init__(self, rows, rhs):
        self.m = len(rows)
        self.rows = [list(r) + [b] for r, b in zip(rows, rhs)]
        self.basis: list[int] = []

    def pivot(self, r: int, c: int):
        rows = self.rows
        p = rows[r][c]
        rows[r] = [v / p for v in rows[r]]
        pr = rows[r]
        for i in range(self.m):
            if i != r:
                f = rows[i][c]
                if f:
                    rows[i] = [a - f * b for a, b in zip(rows[i], pr)]
        self.basis[r] = c

    def run(self, cost, allowed) -> str:
        """Maximise ``cost . x`` with Bland's rule."""
        ncols = len(cost)
        while True:
            in_basis = set(self.basis)
            cb = [cost[b] for b in self.basis]
            enter = None
            for j in range(ncols):
                if not allowed[j] or j in in_basis:
                    continue
                red = cost[j] - sum((cb[i] * self.rows[i][j] for i in range(self.m) if self.rows[i][j]), Fraction(0))
                if red > 0:
                    enter = j
                    break
            if enter is None:
                return "optimal"
            best = None
            for i in range(self.m):
                a = self.rows[i][enter]
                if a > 0:
                    ratio = self.rows[i][-1] / a
                    if best is None or ratio < best[0] or (ratio == best[0] and self.basis[i] < self.basis[best[1]]):
                        best = (ratio, i)
            if best is None:
                return "unbounded"
            self.pivot(best[1], enter)

    def duals(self, cost, art0: int) -> list[Fraction]:
        cb = [cost[b] for b in self.basis]
        return [sum((cb[k] * self.rows[k][art0 + i] for k in range(self.m)), Fraction(0)) for i in range(self.m)]


def lp_solve(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, check: bool = False) -> LPResult:
    """Exact two-phase simplex: maximise ``c.x`` s.t. ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``x >= 0``.

    Bland's rule guarantees termination.  With ``check=True`` the returned
    dual is verified for feasibility and strong duality.
    """
    c = [Fraction(v) for v in c]
    n = len(c)
    A_eq = to_fraction_matrix(A_eq or [])
    A_ub = to_fraction_matrix(A_ub or [])
    b_eq = [Fraction(v) for v in (b_eq or [])]
    b_ub = [Fraction(v) for v in (b_ub or [])]
    n_slack = len(A_ub)
    rows, rhs = [], []
    for row, b in zip(A_eq, b_eq):
        rows.append(row + [Fraction(0)] * n_slack)
        rhs.append(b)
    for k, (row, b) in enumerate(zip(A_ub, b_ub)):
        rows.append(row + [Fraction(int(k == s)) for s in range(n_slack)])
        rhs.append(b)
    m = len(rows)
    signs = [1 if b >= 0 else -1 for b in rhs]
    rows = [[v * s for v in row] for row, s in zip(rows, signs)]
    rhs = [b * s for b, s in zip(rhs, signs)]
    art0 = n + n_slack
    ncols = art0 + m
    full = [row + [Fraction(int(i == k)) for k in range(m)] for i, row in enumerate(rows)]
    tab = _Tableau(full, rhs)
    tab.basis = list(range(art0, ncols))

    phase1 = [Fraction(0)] * art0 + [Fraction(-1)] * m
    tab.run(phase1, [True] * ncols)
    value1 = sum((phase1[b] * tab.rows[i][-1] for i, b in enumerate(tab.basis)), Fraction(0))
    if value1 < 0:
        y = tab.duals(phase1, art0)
        farkas = [yi * s for yi, s in zip(y, signs)]
        # phase-1 duals satisfy y^T A >= 0 and y^T b = value1 < 0
        return LPResult("infeasible", farkas=farkas)
    # drive zero-level artificials out of the basis where possible
    for i in range(m):
        if tab.basis[i] >= art0:
            col = next((j for j in range(art0) if tab.rows[i][j] != 0), None)
            if col is not None:
                tab.pivot(i, col)

    cost = c + [Fraction(0)] * (n_slack + m)
    allowed = [True] * art0 + [False] * m
    status = tab.run(cost, allowed)
    if status == "unbounded":
        return LPResult("unbounded")
    x = [Fraction(0)] * ncols
    for i, b in enumerate(tab.basis):
        x[b] = tab.rows[i][-1]
    value = sum((ci * xi for ci, xi in zip(c, x[:n])), Fraction(0))
    y = [yi * s for yi, s in zip(tab.duals(cost, art0), signs)]
    result = LPResult("optimal", x=x[:n], value=value, dual=y)
    if check:
        _check_duality(c, A_eq, b_eq, A_ub, b_ub, result)
    return result


def _check_duality(c, A_eq, b_eq, A_ub, b_ub, result: LPResult):
    y = result.dual
    A = A_eq + A_ub
    b = b_eq + b_ub
    for j in range(len(c)):
        col = sum((y[i] * A[i][j] for i in range(len(A))), Fraction(0))
        assert col >= c[j], f"dual infeasible at column {j}"
    for k in range(len(A_ub)):
        assert y[len(A_eq) + k] >= 0, "negative multiplier on inequality row"
    assert sum((yi * bi for yi, bi in zip(y, b)), Fraction(0)) == result.value, "duality gap"
