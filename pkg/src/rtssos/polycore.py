"""Sparse polynomials over exponent vectors, parity types and monomial bases."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb
from typing import Iterable, Mapping, Sequence

Exponent = tuple  # tuple[int, ...]
ParityVector = tuple  # tuple[int, ...] with entries in {0, 1}

MAX_DEGREE = 1000
BASIS_CAP = 2_000_000


class PolyError(ValueError):
    pass


class ParseError(PolyError):
    def __init__(self, message: str, pos: int | None = None):
        self.pos = pos
        if pos is not None:
            message = f"{message} at position {pos}"
        super().__init__(message)


class ZeroPolynomialError(PolyError):
    """Raised by relaxation entry points handed the zero polynomial."""


class BasisCapError(PolyError):
    pass


def grlex_key(a: Sequence[int]):
    """Sort key: total degree first, then larger leading entries first.

    For n=3 this orders degree one as x1, x2, x3 and parity types as
    000, 100, 010, 001, 110, 101, 011, 111.
    """
    return (sum(a), tuple(-x for x in a))


def parity(a: Sequence[int]) -> ParityVector:
    return tuple(x & 1 for x in a)


def xor(a: Sequence[int], b: Sequence[int]) -> ParityVector:
    return tuple(x ^ y for x, y in zip(a, b))


def add(a: Sequence[int], b: Sequence[int]) -> Exponent:
    return tuple(x + y for x, y in zip(a, b))


def _coef(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


class Polynomial:
    """Immutable sparse polynomial ``sum c_a x^a`` with exact rational coefficients."""

    __slots__ = ("n", "_terms", "degree")

    def __init__(self, n: int, terms: Mapping[Sequence[int], object] | Iterable = ()):
        if n < 1:
            raise PolyError("variable count must be positive")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Exponent, Fraction] = {}
        for exp, c in items:
            exp = tuple(int(e) for e in exp)
            if len(exp) != n:
                raise PolyError(f"exponent {exp} has length {len(exp)}, expected {n}")
            if any(e < 0 for e in exp):
                raise PolyError(f"negative exponent in {exp}")
            acc[exp] = acc.get(exp, Fraction(0)) + _coef(c)
        self.n = n
        self._terms = {e: c for e, c in acc.items() if c != 0}
        self.degree = max((sum(e) for e in self._terms), default=0)

    @property
    def terms(self) -> dict[Exponent, Fraction]:
        return dict(self._terms)

    def support(self) -> list[Exponent]:
        return sorted(self._terms, key=grlex_key)

    def coefficient(self, exp: Sequence[int]) -> Fraction:
        return self._terms.get(tuple(exp), Fraction(0))

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.n == other.n and self._terms == other._terms

    def __hash__(self) -> int:
        return hash((self.n, frozenset(self._terms.items())))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if self.n != other.n:
            raise PolyError("variable count mismatch")
        return Polynomial(self.n, list(self._terms.items()) + list(other._terms.items()))

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.n, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def evaluate(self, x: Sequence[float]) -> float:
        total = 0.0
        for exp, c in self._terms.items():
            t = float(c)
            for xi, e in zip(x, exp):
                if e:
                    t *= xi ** e
            total += t
        return total

    def __str__(self) -> str:
        return format_polynomial(self)

    def __repr__(self) -> str:
        return f"Polynomial(n={self.n}, {format_polynomial(self)!r})"

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "terms": [
                {"exp": list(e), "coef": f"{c.numerator}/{c.denominator}"}
                for e, c in sorted(self._terms.items(), key=lambda t: grlex_key(t[0]))
            ],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "Polynomial":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(int(data["n"]), [(t["exp"], Fraction(t["coef"])) for t in data["terms"]])


def monomial_str(exp: Sequence[int]) -> str:
    parts = []
    for i, e in enumerate(exp, start=1):
        if e == 1:
            parts.append(f"x{i}")
        elif e > 1:
            parts.append(f"x{i}^{e}")
    return "*".join(parts) if parts else "1"


def format_polynomial(p: Polynomial) -> str:
    if p.is_zero():
        return "0"
    out = []
    for k, exp in enumerate(sorted(p._terms, key=grlex_key, reverse=True)):
        c = p._terms[exp]
        sign = "-" if c < 0 else "+"
        a = -c if c < 0 else c
        num = str(a.numerator) if a.denominator == 1 else f"{a.numerator}/{a.denominator}"
        if sum(exp) == 0:
            body = num
        elif a == 1:
            body = monomial_str(exp)
        else:
            body = f"{num}*{monomial_str(exp)}"
        if k == 0:
            out.append(body if sign == "+" else f"-{body}")
        else:
            out.append(f" {sign} {body}")
    return "".join(out)


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?(?:/\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x(?P<idx>\d+)(?:\s*\^\s*(?P<pow>\d+))?)"
    r"|(?P<op>[-+*])"
    r")"
)


def parse_polynomial(text: str, n: int) -> Polynomial:
    """Parse ``c*x1^2*x3 - x2 + 5`` style input into a :class:`Polynomial`."""
    pos = 0
    end = len(text.rstrip())
    terms: list[tuple[Exponent, Fraction]] = []
    sign = 1
    expect_term = True
    coef: Fraction | None = None
    exp = [0] * n
    seen_factor = False
    need_factor = False

    def flush(at: int):
        nonlocal coef, exp, seen_factor
        if not seen_factor:
            raise ParseError("expected a term", at)
        terms.append((tuple(exp), sign * (coef if coef is not None else Fraction(1))))
        coef, exp, seen_factor = None, [0] * n, False

    if not text.strip():
        raise ParseError("empty input", 0)
    while pos < end:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        start = m.start() + (len(m.group(0)) - len(m.group(0).lstrip()))
        pos = m.end()
        if m.group("op") in ("+", "-"):
            if need_factor:
                raise ParseError("dangling '*'", start)
            if seen_factor:
                flush(start)
                sign = 1 if m.group("op") == "+" else -1
            elif expect_term and not terms and sign == 1 and coef is None:
                sign = 1 if m.group("op") == "+" else -1
            else:
                raise ParseError("unexpected sign", start)
            expect_term = True
        elif m.group("op") == "*":
            if not seen_factor or need_factor:
                raise ParseError("unexpected '*'", start)
            need_factor = True
        elif m.group("num") is not None:
            if seen_factor and not need_factor:
                raise ParseError("missing operator before number", start)
            try:
                value = Fraction(m.group("num"))
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"bad number {m.group('num')!r}", start) from None
            coef = value if coef is None else coef * value
            seen_factor, need_factor, expect_term = True, False, False
        else:
            if seen_factor and not need_factor and coef is None:
                raise ParseError("missing operator before variable", start)
            idx = int(m.group("idx"))
            if not 1 <= idx <= n:
                raise ParseError(f"variable x{idx} out of range 1..{n}", start)
            power = int(m.group("pow")) if m.group("pow") is not None else 1
            exp[idx - 1] += power
            if exp[idx - 1] > MAX_DEGREE or sum(exp) > MAX_DEGREE:
                raise ParseError(f"degree exceeds {MAX_DEGREE}", start)
            seen_factor, need_factor, expect_term = True, False, False
    if need_factor:
        raise ParseError("dangling '*'", end)
    flush(end)
    return Polynomial(n, terms)


@dataclass(frozen=True)
class MonomialBasis:
    elements: tuple
    index: dict = field(compare=False, repr=False)

    @classmethod
    def from_exponents(cls, exps: Iterable[Sequence[int]]) -> "MonomialBasis":
        elems = tuple(sorted({tuple(e) for e in exps}, key=grlex_key))
        return cls(elems, {e: i for i, e in enumerate(elems)})

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i: int) -> Exponent:
        return self.elements[i]

    def __contains__(self, e) -> bool:
        return tuple(e) in self.index

    @property
    def n(self) -> int:
        return len(self.elements[0]) if self.elements else 0


@dataclass(frozen=True)
class ParityPartition:
    """Split of a basis into parity classes, keys in grlex order of the types."""

    types: tuple  # ordered parity vectors
    classes: dict  # parity vector -> list of basis positions
    class_of: tuple  # basis position -> parity vector

    def __len__(self) -> int:
        return len(self.types)

    def type_index(self) -> dict:
        return {t: i for i, t in enumerate(self.types)}

    def sizes(self) -> list[int]:
        return [len(self.classes[t]) for t in self.types]


def _exponents_upto(n: int, d: int):
    for deg in range(d + 1):
        for combo in combinations_with_replacement(range(n), deg):
            e = [0] * n
            for i in combo:
                e[i] += 1
            yield tuple(e)


def standard_basis(n: int, d: int, cap: int = BASIS_CAP) -> MonomialBasis:
    if n < 1 or d < 0:
        raise PolyError("need n >= 1 and d >= 0")
    size = comb(n + d, d)
    if size > cap:
        raise BasisCapError(f"basis size C({n}+{d},{d}) = {size} exceeds cap {cap}")
    return _standard_basis(n, d)


@lru_cache(maxsize=64)
def _standard_basis(n: int, d: int) -> MonomialBasis:
    return MonomialBasis.from_exponents(_exponents_upto(n, d))


def partition_by_parity(b: MonomialBasis) -> ParityPartition:
    classes: dict = {}
    class_of = []
    for i, e in enumerate(b.elements):
        t = parity(e)
        classes.setdefault(t, []).append(i)
        class_of.append(t)
    types = tuple(sorted(classes, key=grlex_key))
    return ParityPartition(types, {t: classes[t] for t in types}, tuple(class_of))


# -- Newton polytope ---------------------------------------------------------

def _in_hull_exact(point: Sequence[int], verts: Sequence[Sequence[int]]) -> bool:
    """Phase-one simplex over the rationals: is ``point`` a convex combination of ``verts``?"""
    n = len(point)
    m = n + 1
    k = len(verts)
    # rows: sum_j v_j[i] lam_j = point[i]; sum_j lam_j = 1 ; columns: lam (k), artificials (m)
    rows = []
    for i in range(n):
        rows.append([Fraction(v[i]) for v in verts] + [Fraction(0)] * m + [Fraction(point[i])])
    rows.append([Fraction(1)] * k + [Fraction(0)] * m + [Fraction(1)])
    for i in range(m):
        rows[i][k + i] = Fraction(1)
    basis = [k + i for i in range(m)]
    width = k + m
    # reduced costs of phase-one objective (minimize sum of artificials)
    cost = [Fraction(0)] * (width + 1)
    for r in rows:
        for j in range(k):
            cost[j] -= r[j]
        cost[width] -= r[width]
    while True:
        enter = next((j for j in range(width) if cost[j] < 0), None)  # Bland's rule
        if enter is None:
            break
        best = None
        for i, r in enumerate(rows):
            if r[enter] > 0:
                ratio = r[width] / r[enter]
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:  # unbounded cannot happen in phase one
            break
        piv = best[1]
        prow = rows[piv]
        pv = prow[enter]
        if pv != 1:
            prow[:] = [x / pv for x in prow]
        for i, r in enumerate(rows):
            if i != piv and r[enter] != 0:
                f = r[enter]
                r[:] = [a - f * b for a, b in zip(r, prow)]
        f = cost[enter]
        cost[:] = [a - f * b for a, b in zip(cost, prow)]
        basis[piv] = enter
    return cost[width] == 0


def in_newton_polytope(point: Sequence[int], support: Sequence[Sequence[int]]) -> bool:
    """Exact test ``point in conv(support)`` (closed polytope)."""
    point = tuple(point)
    sup = [tuple(s) for s in support]
    if point in set(sup):
        return True
    for i in range(len(point)):
        col = [s[i] for s in sup]
        if not min(col) <= point[i] <= max(col):
            return False
    degs = [sum(s) for s in sup]
    if not min(degs) <= sum(point) <= max(degs):
        return False
    return _in_hull_exact(point, sup)


def _has_simplex_support(support: set, n: int, two_d: int) -> bool:
    if tuple([0] * n) not in support:
        return False
    for i in range(n):
        e = [0] * n
        e[i] = two_d
        if tuple(e) not in support:
            return False
    return True


def newton_basis(f: Polynomial | Iterable[Sequence[int]], n: int | None = None,
                 cap: int = BASIS_CAP) -> MonomialBasis:
    """Lattice points of half the Newton polytope of ``f`` (boundary included)."""
    if isinstance(f, Polynomial):
        n = f.n
        support = f.support()
    else:
        support = [tuple(a) for a in f]
        if n is None:
            n = len(support[0]) if support else 0
    if not support:
        raise PolyError("empty support")
    deg = max(sum(a) for a in support)
    if deg % 2:
        raise PolyError(f"odd degree {deg}")
    d = deg // 2
    sup = set(support)
    cand = standard_basis(n, d, cap)
    if _has_simplex_support(sup, n, deg):
        # conv(support) is the whole scaled simplex, so every candidate qualifies
        return cand
    verdict = _hull_prefilter([tuple(2 * x for x in a) for a in cand], list(sup), n)
    keep = [a for a, v in zip(cand, verdict)
            if v or (v is None and in_newton_polytope(tuple(2 * x for x in a), support))]
    # candidates are already in grlex order
    return MonomialBasis(tuple(keep), {e: i for i, e in enumerate(keep)})


def _hull_prefilter(points: list, support: list, n: int) -> list:
    """Facet test via qhull; ``None`` marks points near a facet, left to the exact test.

    Integer points off an integer facet sit at distance well above the band,
    so the float verdicts outside it agree with the exact test.
    """
    undecided = [None] * len(points)
    if len(support) <= n + 1 or not points:
        return undecided
    import numpy as np
    from scipy.spatial import ConvexHull, QhullError

    pts = np.asarray(support, dtype=float)
    if np.linalg.matrix_rank(pts[1:] - pts[0]) < n:
        return undecided
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return undecided
    eq = hull.equations
    slack = np.asarray(points, dtype=float) @ eq[:, :-1].T + eq[:, -1]
    worst = slack.max(axis=1)
    out = []
    for w in worst:
        out.append(True if w <= 1e-9 else False if w >= 1e-6 else None)
    return out
