"""Function-free, quantifier-free first-order formulas over unary and binary predicates.

Formulas are immutable ASTs.  Soft formulas carry a weight in *statistic
space*: the weight multiplies the normalised statistic ``Q_w(alpha)``, not the
raw grounding count.  Hard formulas are read under an implicit universal
closure.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Union


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Iff:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Distinct:
    """``x != y``; only produced internally (the xi encoding), never parsed."""
    left: str
    right: str


Formula = Union[Atom, Not, And, Or, Implies, Iff, Distinct]
# a hard formula, read as universally closed
Sentence = Formula

_BINARY_OPS = {And: "&", Or: "|", Implies: "=>", Iff: "<=>"}
_PRECEDENCE = {Iff: 1, Implies: 2, Or: 3, And: 4}


def variables(f: Formula) -> tuple[str, ...]:
    """Free variables in order of first appearance."""
    seen: dict[str, None] = {}

    def walk(g):
        if isinstance(g, Atom):
            for a in g.args:
                seen.setdefault(a)
        elif isinstance(g, Distinct):
            seen.setdefault(g.left)
            seen.setdefault(g.right)
        elif isinstance(g, Not):
            walk(g.arg)
        else:
            walk(g.left)
            walk(g.right)

    walk(f)
    return tuple(seen)


def atoms(f: Formula) -> Iterable[Atom]:
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, Not):
        yield from atoms(f.arg)
    elif isinstance(f, Distinct):
        return
    else:
        yield from atoms(f.left)
        yield from atoms(f.right)


def to_text(f: Formula, parent: int = 0) -> str:
    if isinstance(f, Atom):
        return f"{f.pred}({','.join(f.args)})"
    if isinstance(f, Distinct):
        return f"{f.left} != {f.right}"
    if isinstance(f, Not):
        return "!" + to_text(f.arg, 5)
    prec = _PRECEDENCE[type(f)]
    right_assoc = isinstance(f, (Implies, Iff))
    left = to_text(f.left, prec + 1 if right_assoc else prec)
    right = to_text(f.right, prec if right_assoc else prec + 1)
    text = f"{left} {_BINARY_OPS[type(f)]} {right}"
    return f"({text})" if prec < parent else text


def evaluate_with(f: Formula, holds: Callable[[str, tuple], bool], s: Mapping[str, object]) -> bool:
    """Evaluate ``f`` under substitution ``s`` against an arbitrary truth lookup."""
    if isinstance(f, Atom):
        try:
            return holds(f.pred, tuple(s[a] for a in f.args))
        except KeyError as exc:
            raise KeyError(f"unbound variable {exc.args[0]!r}") from None
    if isinstance(f, Not):
        return not evaluate_with(f.arg, holds, s)
    if isinstance(f, Distinct):
        return s[f.left] != s[f.right]
    a = evaluate_with(f.left, holds, s)
    if isinstance(f, And):
        return a and evaluate_with(f.right, holds, s)
    if isinstance(f, Or):
        return a or evaluate_with(f.right, holds, s)
    if isinstance(f, Implies):
        return (not a) or evaluate_with(f.right, holds, s)
    return a == evaluate_with(f.right, holds, s)


# ---------------------------------------------------------------------------
# models and worlds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    unary: tuple[str, ...] = ()
    binary: tuple[str, ...] = ()

    def __post_init__(self):
        names = self.unary + self.binary
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate predicate names in {names}")

    @property
    def predicates(self) -> tuple[str, ...]:
        return self.unary + self.binary

    def arity(self, name: str) -> int:
        if name in self.unary:
            return 1
        if name in self.binary:
            return 2
        raise KeyError(f"unknown predicate {name!r}")

    def extend(self, unary=(), binary=()) -> "Vocabulary":
        return Vocabulary(self.unary + tuple(unary), self.binary + tuple(binary))

    def ground_atoms(self, domain: Iterable[str]) -> list[tuple]:
        """All ground atoms, reflexive binary atoms included."""
        domain = list(domain)
        out = [(p, c) for p in self.unary for c in domain]
        out += [(r, a, b) for r in self.binary for a in domain for b in domain]
        return out


@dataclass(frozen=True)
class WeightedFormula:
    formula: Formula
    weight: float

    @property
    def arity(self) -> int:
        return len(variables(self.formula))


@dataclass(frozen=True)
class ModelSpec:
    vocabulary: Vocabulary
    soft: tuple[WeightedFormula, ...] = ()
    hard: tuple[Sentence, ...] = ()

    @property
    def formulas(self) -> tuple[Formula, ...]:
        return tuple(wf.formula for wf in self.soft)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(wf.weight for wf in self.soft)

    def with_weights(self, weights) -> "ModelSpec":
        soft = tuple(WeightedFormula(wf.formula, float(w)) for wf, w in zip(self.soft, weights))
        return ModelSpec(self.vocabulary, soft, self.hard)


@dataclass(frozen=True)
class World:
    domain: tuple[str, ...]
    atoms: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        consts = set(self.domain)
        if len(consts) != len(self.domain):
            raise ValueError("duplicate constants in domain")
        for a in self.atoms:
            if not set(a[1:]) <= consts:
                raise ValueError(f"atom {a} uses a constant outside the domain")

    def holds(self, pred: str, args: tuple) -> bool:
        return (pred, *args) in self.atoms


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def evaluate(f: Formula, w: World, s: Mapping[str, str]) -> bool:
    missing = [v for v in variables(f) if v not in s]
    if missing:
        raise KeyError(f"unbound variable {missing[0]!r}")
    return evaluate_with(f, w.holds, s)


def injective_count(f: Formula, w: World) -> int:
    """Number of injective substitutions of the free variables that satisfy ``f``."""
    vs = variables(f)
    return sum(
        evaluate_with(f, w.holds, dict(zip(vs, consts)))
        for consts in itertools.permutations(w.domain, len(vs))
    )


def grounding_count(k: int, n: int) -> int:
    """``C(n,k) * k!``: the number of injective groundings of a k-variable formula."""
    return math.perm(n, k)


def formula_statistic(f: Formula, w: World) -> Fraction:
    k = len(variables(f))
    n = len(w.domain)
    if n < k:
        raise ValueError(f"statistic of a {k}-variable formula is undefined on a domain of size {n}")
    return Fraction(injective_count(f, w), grounding_count(k, n))


def stat_vector(m: ModelSpec, w: World) -> tuple[Fraction, ...]:
    return tuple(formula_statistic(f, w) for f in m.formulas)


def satisfies(w: World, sentence: Sentence) -> bool:
    """Universal closure over all groundings, including non-injective ones."""
    vs = variables(sentence)
    return all(
        evaluate_with(sentence, w.holds, dict(zip(vs, consts)))
        for consts in itertools.product(w.domain, repeat=len(vs))
    )


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(<=>)|(=>)|([!&|(),~])|([A-Za-z_][A-Za-z0-9_]*)|(\S))")


class _FormulaParser:
    def __init__(self, text: str, line: int, offset: int):
        self.line = line
        self.tokens: list[tuple[str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                break
            if m.group(5):
                raise ParseError(f"unexpected character {m.group(5)!r}", line, offset + m.start(5) + 1)
            tok = next(g for g in m.groups() if g)
            self.tokens.append((tok, offset + m.start(m.lastindex) + 1))
            pos = m.end()
        self.end_col = offset + len(text.rstrip()) + 1
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def col(self):
        return self.tokens[self.i][1] if self.i < len(self.tokens) else self.end_col

    def take(self, expected=None):
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            want = f"{expected!r}" if expected else "a token"
            got = "end of line" if tok is None else repr(tok)
            raise ParseError(f"expected {want}, got {got}", self.line, self.col())
        self.i += 1
        return tok

    def parse(self) -> Formula:
        f = self.iff()
        if self.peek() is not None:
            raise ParseError(f"unexpected {self.peek()!r}", self.line, self.col())
        return f

    def iff(self):
        left = self.implies()
        if self.peek() == "<=>":
            self.take()
            return Iff(left, self.iff())
        return left

    def implies(self):
        left = self.disj()
        if self.peek() == "=>":
            self.take()
            return Implies(left, self.implies())
        return left

    def disj(self):
        f = self.conj()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.conj())
        return f

    def conj(self):
        f = self.neg()
        while self.peek() == "&":
            self.take()
            f = And(f, self.neg())
        return f

    def neg(self):
        if self.peek() in ("!", "~"):
            self.take()
            return Not(self.neg())
        if self.peek() == "(":
            self.take()
            f = self.iff()
            self.take(")")
            return f
        return self.atom()

    def atom(self):
        col = self.col()
        name = self.take()
        if not re.match(r"[A-Za-z_]", name):
            raise ParseError(f"expected a predicate, got {name!r}", self.line, col)
        self.take("(")
        args = []
        while True:
            acol = self.col()
            arg = self.take()
            if not re.match(r"[A-Za-z_]", arg):
                raise ParseError(f"expected a variable, got {arg!r}", self.line, acol)
            if not arg[0].islower():
                raise ParseError(f"constant {arg!r} in formula; formulas must be constant-free", self.line, acol)
            args.append(arg)
            if self.peek() == ",":
                self.take()
                continue
            self.take(")")
            break
        if len(args) > 2:
            raise ParseError(f"predicate {name!r} has arity {len(args)}; only arity 1 and 2 are supported",
                             self.line, col)
        return Atom(name, tuple(args))


def parse_formula(text: str, line: int = 1, offset: int = 0) -> Formula:
    f = _FormulaParser(text, line, offset).parse()
    nvars = len(variables(f))
    if nvars > 2:
        raise ParseError(f"formula has {nvars} variables; at most 2 are supported", line, offset + 1)
    return f


class _VocabBuilder:
    def __init__(self):
        self.arity: dict[str, int] = {}

    def declare(self, name: str, arity: int, line: int, col: int):
        if arity not in (1, 2):
            raise ParseError(f"predicate {name!r} has arity {arity}; only arity 1 and 2 are supported", line, col)
        if self.arity.setdefault(name, arity) != arity:
            raise ParseError(f"predicate {name!r} used with arity {arity}, declared with {self.arity[name]}",
                             line, col)

    def absorb(self, f: Formula, line: int, col: int):
        for a in atoms(f):
            self.declare(a.pred, len(a.args), line, col)

    def build(self) -> Vocabulary:
        return Vocabulary(tuple(p for p, k in self.arity.items() if k == 1),
                          tuple(p for p, k in self.arity.items() if k == 2))


def _strip_comment(raw: str) -> str:
    return raw.split("#", 1)[0]


def parse_model(text: str) -> ModelSpec:
    """Parse the line-oriented model format.

    ``predicate name/arity``, ``<weight> :: <formula>`` or ``hard <formula>``;
    ``#`` starts a comment.
    """
    vocab = _VocabBuilder()
    soft, hard = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        body = line.strip()
        m = re.fullmatch(r"predicate\s+([A-Za-z_][A-Za-z0-9_]*)\s*/\s*(\d+)", body)
        if m:
            vocab.declare(m.group(1), int(m.group(2)), lineno, indent + 1)
            continue
        m = re.match(r"hard\s+", body)
        if m:
            f = parse_formula(line[indent + m.end():], lineno, indent + m.end())
            vocab.absorb(f, lineno, indent + 1)
            hard.append(f)
            continue
        if "::" in body:
            head, _, rest = line.partition("::")
            try:
                weight = float(head)
            except ValueError:
                raise ParseError(f"invalid weight {head.strip()!r}", lineno, indent + 1) from None
            if not math.isfinite(weight):
                raise ParseError("weights must be finite", lineno, indent + 1)
            f = parse_formula(rest, lineno, len(head) + 2)
            vocab.absorb(f, lineno, indent + 1)
            soft.append(WeightedFormula(f, weight))
            continue
        raise ParseError(f"unrecognised line {body!r}", lineno, indent + 1)
    return ModelSpec(vocab.build(), tuple(soft), tuple(hard))


_GROUND = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(\s*([^()]*)\)")


def parse_database(text: str, vocabulary: Vocabulary | None = None) -> World:
    """Parse ``domain A B ...`` followed by one ground atom per line (closed world)."""
    domain: list[str] | None = None
    found = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw).strip()
        if not body:
            continue
        if body.startswith("domain"):
            if domain is not None:
                raise ParseError("domain declared twice", lineno, 1)
            domain = body.split()[1:]
            continue
        m = _GROUND.fullmatch(body)
        if m is None:
            raise ParseError(f"expected a ground atom, got {body!r}", lineno, 1)
        args = tuple(a.strip() for a in m.group(2).split(","))
        if domain is None:
            raise ParseError("ground atom before the domain declaration", lineno, 1)
        for a in args:
            if a not in domain:
                raise ParseError(f"constant {a!r} is not in the domain", lineno, 1)
        if vocabulary is not None:
            try:
                ar = vocabulary.arity(m.group(1))
            except KeyError:
                raise ParseError(f"unknown predicate {m.group(1)!r}", lineno, 1) from None
            if ar != len(args):
                raise ParseError(f"predicate {m.group(1)!r} has arity {ar}", lineno, 1)
        found.append((m.group(1), *args))
    if domain is None:
        raise ParseError("missing domain declaration", 1, 1)
    return World(tuple(domain), frozenset(found))


def load_model(path) -> ModelSpec:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def load_database(path, vocabulary: Vocabulary | None = None) -> World:
    return parse_database(Path(path).read_text(encoding="utf-8"), vocabulary)
