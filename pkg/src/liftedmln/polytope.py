"""Relational marginal polytopes: statistic points, vertices, affine hull, facets, interiority.

Statistic points are generated from cell configurations: a composition of
the domain into cells plus, for every unordered pair of cells, how many
element pairs take each allowed pair type.  All geometry is exact; floats
appear only when a Euclidean distance has to be reported.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import numerics
from .logic import ModelSpec, grounding_count, variables
from .wfomc import LiftedTables, build_tables, compositions

log = logging.getLogger(__name__)

StatVector = tuple  # of Fraction


@dataclass(frozen=True)
class CellConfiguration:
    cells: tuple[int, ...]                      # element count per cell, all 2**(|U|+|B|) cells
    pair_types: tuple[tuple[int, ...], ...]     # per cell pair (tables order): count per allowed type


def _check_domain(model: ModelSpec, n: int):
    k = max((len(variables(f)) for f in model.formulas), default=1)
    if n < k:
        raise ValueError(f"statistics of {k}-variable formulas are undefined on a domain of size {n}")


def _tables(model: ModelSpec) -> LiftedTables:
    return build_tables(model.vocabulary, tuple(model.hard), model.formulas)


def _pair_count(j, q, r) -> int:
    return j[q] * (j[q] - 1) // 2 if q == r else j[q] * j[r]


def iter_configurations(model: ModelSpec, n: int) -> Iterator[CellConfiguration]:
    """Every realisable cell configuration (exhaustive; meant for small domains)."""
    t = _tables(model)
    for block in compositions(n, len(t.cells)):
        for j in block.tolist():
            choices = []
            for (q, r), types in zip(t.pairs, t.pair_types):
                c = _pair_count(j, q, r)
                if c and not types:
                    choices = None
                    break
                choices.append([tuple(v) for v in next(compositions(c, len(types), chunk=1 << 30)).tolist()]
                               if types else [()])
            if choices is None:
                continue
            full = [0] * t.num_cells
            for cell, jq in zip(t.cells, j):
                full[cell.index] = jq
            for k in itertools.product(*choices):
                yield CellConfiguration(tuple(full), tuple(k))


def configuration_statistics(model: ModelSpec, n: int, config: CellConfiguration) -> StatVector:
    t = _tables(model)
    npred = len(model.vocabulary.predicates)
    counts = np.zeros(len(model.formulas), dtype=np.int64)
    for pos, cell in enumerate(t.cells):
        counts += config.cells[cell.index] * t.cell_features[pos, npred:]
    for feats, k in zip(t.pair_features, config.pair_types):
        if len(k):
            counts += np.asarray(k, dtype=np.int64) @ feats[:, npred:]
    return _to_stats(model, n, counts.tolist())


def _to_stats(model, n, counts) -> StatVector:
    return tuple(Fraction(int(c), grounding_count(len(variables(f)), n)) for c, f in zip(counts, model.formulas))


@lru_cache(maxsize=4096)
def _multiset_sums(types: tuple[int, ...], count: int) -> np.ndarray:
    """Encoded sums of ``count`` draws (with repetition) from ``types``."""
    acc = np.zeros(1, dtype=np.int64)
    step = np.array(types, dtype=np.int64)
    for _ in range(count):
        acc = np.unique(np.add.outer(acc, step).ravel())
    return acc


def _minkowski(a: np.ndarray, b: np.ndarray, block: int = 4096) -> np.ndarray:
    if a.size < b.size:
        a, b = b, a
    parts = [np.unique(np.add.outer(a[i:i + block], b).ravel()) for i in range(0, a.size, block)]
    return np.unique(np.concatenate(parts))


def enumerate_points(model: ModelSpec, n: int) -> set[StatVector]:
    """Exactly ``{Q_w(Phi) : w a model of the hard sentences}``.

    Statistics are linear in the configuration, so pairs whose allowed types
    induce the same set of feature vectors are pooled and each pool
    contributes the set of sums of its draws.  Vectors are encoded in mixed
    radix; partial sums never exceed the totals, so encoding commutes with
    addition.
    """
    _check_domain(model, n)
    t = _tables(model)
    npred = len(model.vocabulary.predicates)
    bounds = [grounding_count(len(variables(f)), n) for f in model.formulas]
    mult = np.ones(len(bounds), dtype=np.int64)
    for i in range(len(bounds) - 2, -1, -1):
        mult[i] = mult[i + 1] * (bounds[i + 1] + 1)

    def encode(rows) -> np.ndarray:
        return np.asarray(rows, dtype=np.int64).reshape(-1, len(bounds)) @ mult

    cell_keys = encode(t.cell_features[:, npred:])
    pools: dict[tuple, list[int]] = {}
    pool_of = []
    for feats in t.pair_features:
        key = tuple(sorted(set(encode(feats[:, npred:]).tolist())))
        pool_of.append(pools.setdefault(key, [len(pools)])[0] if key else None)
    pool_keys = {v[0]: k for k, v in pools.items()}

    found: set[int] = set()
    seen_loads: dict[tuple, np.ndarray] = {}
    for block in compositions(n, len(t.cells)):
        for j in block.tolist():
            load = [0] * len(pool_keys)
            ok = True
            for (q, r), pool in zip(t.pairs, pool_of):
                c = _pair_count(j, q, r)
                if not c:
                    continue
                if pool is None:
                    ok = False
                    break
                load[pool] += c
            if not ok:
                continue
            load = tuple(load)
            if load not in seen_loads:
                acc = np.zeros(1, dtype=np.int64)
                for pool, c in enumerate(load):
                    if c:
                        acc = _minkowski(acc, _multiset_sums(pool_keys[pool], c))
                seen_loads[load] = acc
            base = int(np.dot(j, cell_keys)) if len(cell_keys) else 0
            found.update((seen_loads[load] + base).tolist())
    points = set()
    for key in found:
        counts = []
        for m in mult.tolist():
            c, key = divmod(key, m)
            counts.append(c)
        points.add(_to_stats(model, n, counts))
    return points


# ---------------------------------------------------------------------------
# affine hull and vertices
# ---------------------------------------------------------------------------

def affine_hull(points) -> tuple[list[list[Fraction]], list[Fraction]]:
    """Maximal independent system ``A x = c`` satisfied by every point (reduced echelon form)."""
    points = [tuple(Fraction(v) for v in p) for p in points]
    if not points:
        raise ValueError("empty point set")
    l = len(points[0])
    diffs = [[a - b for a, b in zip(p, points[0])] for p in points[1:]]
    diffs = [d for d in diffs if any(d)]
    normals = numerics.nullspace(numerics.row_basis(diffs), l) if diffs else numerics.nullspace([], l)
    a_eq = numerics.row_basis(normals) if normals else []
    c_eq = numerics.matvec(a_eq, points[0]) if a_eq else []
    return a_eq, c_eq


def _free_columns(a_eq, l: int) -> list[int]:
    """Coordinates that parametrise the affine hull (non-pivot columns of the echelon form)."""
    pivots = {next(i for i, v in enumerate(row) if v != 0) for row in a_eq}
    return [i for i in range(l) if i not in pivots]


def _in_hull(p, columns) -> numerics.LPResult:
    """Feasibility of ``p = sum a_v v, sum a_v = 1, a >= 0``."""
    d = len(p)
    a_eq = [[v[i] for v in columns] for i in range(d)] + [[1] * len(columns)]
    return numerics.lp_solve([0] * len(columns), A_eq=a_eq, b_eq=list(p) + [1])


def _candidates(z: list[tuple]) -> list[int]:
    d = len(z[0])
    if d == 1:
        lo = min(range(len(z)), key=lambda i: z[i])
        hi = max(range(len(z)), key=lambda i: z[i])
        return sorted({lo, hi})
    try:
        return sorted(ConvexHull(numerics.to_float(z)).vertices.tolist())
    except (QhullError, ValueError) as exc:
        log.debug("qhull failed (%s); checking every point", exc)
        return list(range(len(z)))


def extract_vertices(points) -> list[StatVector]:
    """Vertices of the convex hull, decided by exact LPs.

    Qhull on the hull coordinates only proposes candidates; the result is
    certified exactly: every other point must lie in the hull of the
    candidates, and a candidate is kept iff it is not a convex combination
    of the remaining candidates.
    """
    pts = sorted({tuple(Fraction(v) for v in p) for p in points})
    if not pts:
        raise ValueError("empty point set")
    if len(pts) == 1:
        return pts
    a_eq, _ = affine_hull(pts)
    free = _free_columns(a_eq, len(pts[0]))
    z = [tuple(p[i] for i in free) for p in pts]
    cand = _candidates(z)
    changed = True
    while changed:
        changed = False
        cols = [z[i] for i in cand]
        for i in range(len(z)):
            if i not in cand and not _in_hull(z[i], cols).optimal:
                cand = sorted(set(cand) | {i})
                changed = True
                break
    keep = [i for i in cand if not _in_hull(z[i], [z[k] for k in cand if k != i]).optimal]
    return [pts[i] for i in keep]


# ---------------------------------------------------------------------------
# polytope
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Facet:
    normal: tuple[Fraction, ...]    # a, with a.x <= offset on the polytope
    offset: Fraction


@dataclass(frozen=True)
class Polytope:
    points: tuple[StatVector, ...]
    vertices: tuple[StatVector, ...]
    a_eq: tuple[tuple[Fraction, ...], ...]
    c_eq: tuple[Fraction, ...]
    dim: int
    facets: tuple[Facet, ...] | None = None

    @property
    def num_formulas(self) -> int:
        return len(self.vertices[0])

    @property
    def free(self) -> list[int]:
        return _free_columns(self.a_eq, self.num_formulas)

    def hull_coords(self, x) -> tuple:
        return tuple(Fraction(x[i]) for i in self.free)


def from_points(points, facets: str = "auto") -> Polytope:
    pts = tuple(sorted({tuple(Fraction(v) for v in p) for p in points}))
    if not pts:
        raise ValueError("empty point set: the hard sentences have no model")
    verts = tuple(extract_vertices(pts))
    a_eq, c_eq = affine_hull(verts)
    l = len(pts[0])
    dim = l - len(a_eq)
    poly = Polytope(pts, verts, tuple(map(tuple, a_eq)), tuple(c_eq), dim)
    want = facets == "full" or (facets == "auto" and dim <= 3)
    if facets == "full" and dim > 3:
        log.warning("enumerating facets in dimension %d; cost grows as C(vertices, %d)", dim, dim)
    if want:
        poly = Polytope(pts, verts, poly.a_eq, poly.c_eq, dim, tuple(enumerate_facets(poly)))
    return poly


def build_polytope(model: ModelSpec, n: int, facets: str = "auto") -> Polytope:
    return from_points(enumerate_points(model, n), facets)


def _integer_coords(z):
    den = 1
    for p in z:
        for v in p:
            den = den * v.denominator // math.gcd(den, v.denominator)
    return [tuple(int(v * den) for v in p) for p in z], den


def _normal(base, others) -> tuple[int, ...] | None:
    """Integer normal of the hyperplane through ``base`` and ``others`` (None if degenerate)."""
    rows = [[a - b for a, b in zip(o, base)] for o in others]
    d = len(base)
    if d == 2:
        (u0, u1), = rows
        h = (u1, -u0)
    elif d == 3:
        (u0, u1, u2), (v0, v1, v2) = rows
        h = (u1 * v2 - u2 * v1, u2 * v0 - u0 * v2, u0 * v1 - u1 * v0)
    else:
        ns = numerics.nullspace(rows, d)
        if len(ns) != 1:
            return None
        h = tuple(int(v) for v in numerics._integer_row(ns[0]))
    if not any(h):
        return None
    g = 0
    for v in h:
        g = math.gcd(g, v)
    return tuple(v // g for v in h)


def enumerate_facets(poly: Polytope) -> list[Facet]:
    """Facets inside the affine hull by exhaustive search over d-subsets of vertices."""
    d = poly.dim
    if d == 0:
        return []
    free = poly.free
    z, den = _integer_coords([poly.hull_coords(v) for v in poly.vertices])
    found: dict[tuple, Facet] = {}
    if d == 1:
        lo, hi = min(p[0] for p in z), max(p[0] for p in z)
        sides = [((-1,), -lo), ((1,), hi)]
    else:
        sides = []
        zarr = np.array(z, dtype=object)
        for subset in itertools.combinations(range(len(z)), d):
            h = _normal(z[subset[0]], [z[i] for i in subset[1:]])
            if h is None:
                continue
            g = sum(a * b for a, b in zip(h, z[subset[0]]))
            vals = zarr.dot(np.array(h, dtype=object)) - g
            if all(v <= 0 for v in vals):
                sides.append((h, g))
            elif all(v >= 0 for v in vals):
                sides.append((tuple(-v for v in h), -g))
    l = poly.num_formulas
    for h, g in sides:
        normal = [Fraction(0)] * l
        for i, v in zip(free, h):
            normal[i] = Fraction(v)
        key = (tuple(h), g)
        found.setdefault(key, Facet(tuple(normal), Fraction(g, den)))
    return [found[k] for k in sorted(found)]


# ---------------------------------------------------------------------------
# membership and interiority
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Membership:
    status: str                                 # "inside" | "boundary" | "outside"
    coefficients: tuple[Fraction, ...] | None = None   # convex weights over the vertices
    certificate: tuple | None = None            # (a, b): a.v <= b on the polytope, a.theta > b
    facet: Facet | None = None                  # a facet containing theta (boundary)


def membership(theta, poly: Polytope) -> Membership:
    theta = tuple(Fraction(v) for v in theta)
    if len(theta) != poly.num_formulas:
        raise ValueError("theta has the wrong dimension")
    for row, c in zip(poly.a_eq, poly.c_eq):
        lhs = sum((a * t for a, t in zip(row, theta)), Fraction(0))
        if lhs != c:
            # leaves the affine hull: one side of the equation separates
            sign = 1 if lhs > c else -1
            return Membership("outside", certificate=(tuple(sign * a for a in row), sign * c))
    zt = poly.hull_coords(theta)
    zv = [poly.hull_coords(v) for v in poly.vertices]
    nv = len(zv)
    d = len(zt)
    # max t s.t. sum a_v z_v = z_theta, sum a_v = 1, a_v >= t >= 0
    a_eq = [[v[i] for v in zv] + [0] for i in range(d)] + [[1] * nv + [0]]
    a_ub = [[-int(k == i) for k in range(nv)] + [1] for i in range(nv)]
    res = numerics.lp_solve([0] * nv + [1], A_eq=a_eq, b_eq=list(zt) + [1], A_ub=a_ub, b_ub=[0] * nv)
    if res.optimal:
        coeffs = tuple(res.x[:nv])
        if res.value > 0 or nv == 1:
            return Membership("inside", coefficients=coeffs)
        facet = None
        if poly.facets is not None:
            facet = next((f for f in poly.facets
                          if sum((a * t for a, t in zip(f.normal, theta)), Fraction(0)) == f.offset), None)
        return Membership("boundary", coefficients=coeffs, facet=facet)
    farkas = _in_hull(zt, zv).farkas
    # farkas: y_z . z_v + y_0 >= 0 for every vertex, y_z . z_theta + y_0 < 0
    normal = [Fraction(0)] * poly.num_formulas
    for i, y in zip(poly.free, farkas[:d]):
        normal[i] = -y
    return Membership("outside", certificate=(tuple(normal), farkas[d]))


@dataclass(frozen=True)
class Interiority:
    eta: float | None              # exact (facet-based) radius; None when facets are unavailable
    eta_squared: Fraction | None
    upper_bound: float | None = None
    facet: Facet | None = None     # closest facet


def facet_distance_squared(theta, facet: Facet, projector) -> Fraction:
    """Squared Euclidean distance, within the affine hull, from theta to the facet's hyperplane."""
    slack = facet.offset - sum((a * t for a, t in zip(facet.normal, theta)), Fraction(0))
    pa = numerics.matvec(projector, facet.normal)
    norm2 = sum((v * v for v in pa), Fraction(0))
    return slack * slack / norm2


def interiority(theta, poly: Polytope, samples: int = 0, seed: int = 0) -> Interiority:
    """Radius of the largest hull-relative Euclidean ball around theta inside the polytope."""
    theta = tuple(Fraction(v) for v in theta)
    if membership(theta, poly).status != "inside":
        return Interiority(0.0, Fraction(0))
    if poly.dim == 0:
        return Interiority(math.inf, None)
    upper = _sampled_upper_bound(theta, poly, samples, seed) if samples else None
    if poly.facets is None:
        return Interiority(None, None, upper)
    projector = numerics.null_projection([list(r) for r in poly.a_eq], poly.num_formulas)
    best = min(((facet_distance_squared(theta, f, projector), k) for k, f in enumerate(poly.facets)))
    return Interiority(math.sqrt(best[0]), best[0], upper, poly.facets[best[1]])


def _sampled_upper_bound(theta, poly: Polytope, samples: int, seed: int) -> float:
    """min over random hull directions u of max{t : theta + t u in P}; an upper bound on eta."""
    rng = np.random.default_rng(seed)
    free = poly.free
    l = poly.num_formulas
    zv = [poly.hull_coords(v) for v in poly.vertices]
    zt = poly.hull_coords(theta)
    pivots = [i for i in range(l) if i not in free]
    best = math.inf
    for _ in range(samples):
        u = [Fraction(int(v)) for v in rng.integers(-50, 51, size=len(free))]
        if not any(u):
            continue
        # pivot coordinates follow from the echelon rows: x_p = c - sum_free a x_free
        full = [Fraction(0)] * l
        for i, v in zip(free, u):
            full[i] = v
        for row, p in zip(poly.a_eq, pivots):
            full[p] = -sum((row[i] * full[i] for i in free), Fraction(0))
        nv, d = len(zv), len(zt)
        a_eq = [[v[i] for v in zv] + [-u[i]] for i in range(d)] + [[1] * nv + [0]]
        res = numerics.lp_solve([0] * nv + [1], A_eq=a_eq, b_eq=list(zt) + [1])
        if res.optimal:
            best = min(best, float(res.value) * math.sqrt(sum(float(v) ** 2 for v in full)))
    return best
