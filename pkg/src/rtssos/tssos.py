"""Term-sparsity iteration on parity classes, plus the direct full-basis procedure.

The parity-class route works on a matrix indexed by the parity types of the
basis; the full-basis route (``oracle_two_step``) materializes the r x r
support-extension matrix and is only meant for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, comb
from typing import Iterable, Sequence

import numpy as np

from .graphs import BlockPartition, SymBinMatrix, UnionFind, block_closure, connected_components
from .polycore import (
    BASIS_CAP,
    BasisCapError,
    MonomialBasis,
    ParityPartition,
    Polynomial,
    PolyError,
    ZeroPolynomialError,
    grlex_key,
    newton_basis,
    parity,
    partition_by_parity,
    standard_basis,
)

ORACLE_CAP = 2000


class SupportSet:
    """A finite set of exponents indexed by parity type."""

    __slots__ = ("exponents", "_by_parity")

    def __init__(self, exponents: Iterable[Sequence[int]]):
        self.exponents = frozenset(tuple(e) for e in exponents)
        self._by_parity = None

    @property
    def by_parity(self) -> dict:
        if self._by_parity is None:
            bp: dict = {}
            for e in self.exponents:
                bp.setdefault(parity(e), []).append(e)
            self._by_parity = {t: sorted(v, key=grlex_key) for t, v in sorted(bp.items(), key=lambda kv: grlex_key(kv[0]))}
        return self._by_parity

    def parity_types(self) -> list:
        return list(self.by_parity)

    def __contains__(self, e) -> bool:
        return tuple(e) in self.exponents

    def __len__(self) -> int:
        return len(self.exponents)

    def __iter__(self):
        return iter(sorted(self.exponents, key=grlex_key))

    def __eq__(self, other) -> bool:
        return isinstance(other, SupportSet) and self.exponents == other.exponents

    def __or__(self, other: "SupportSet") -> "SupportSet":
        return SupportSet(self.exponents | other.exponents)


class _BasisIndex:
    """Numpy view of a basis used for fast ``alpha - beta in basis`` queries."""

    def __init__(self, basis: MonomialBasis, part: ParityPartition):
        self.basis = basis
        self.part = part
        self.E = np.array(basis.elements, dtype=np.int64).reshape(len(basis), -1)
        self.radix = int(self.E.max(initial=0)) + 1
        self.weights = self.radix ** np.arange(self.E.shape[1], dtype=np.int64)
        codes = self.E @ self.weights
        self.order = np.argsort(codes)
        self.sorted_codes = codes[self.order]
        tidx = part.type_index()
        self.type_of = np.array([tidx[t] for t in part.class_of], dtype=np.int64)

    def complements(self, alpha: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Positions (i, j) with basis[i] + basis[j] == alpha."""
        a = np.asarray(alpha, dtype=np.int64)
        diff = a[None, :] - self.E
        ok = np.all((diff >= 0) & (diff < self.radix), axis=1)
        rows = np.nonzero(ok)[0]
        if rows.size == 0:
            return rows, rows
        c = diff[rows] @ self.weights
        pos = np.searchsorted(self.sorted_codes, c)
        pos = np.minimum(pos, len(self.sorted_codes) - 1)
        hit = self.sorted_codes[pos] == c
        return rows[hit], self.order[pos[hit]]


_INDEX_CACHE: dict = {}


def basis_index(basis: MonomialBasis, part: ParityPartition | None = None) -> _BasisIndex:
    key = id(basis)
    hit = _INDEX_CACHE.get(key)
    if hit is not None and hit[0] is basis:
        return hit[1]
    idx = _BasisIndex(basis, part or partition_by_parity(basis))
    if len(_INDEX_CACHE) > 64:
        _INDEX_CACHE.clear()
    _INDEX_CACHE[key] = (basis, idx)
    return idx


def support_extension_small(S: SupportSet | Iterable, p: ParityPartition,
                            basis: MonomialBasis) -> SymBinMatrix:
    """Parity-type matrix: (delta, sigma) set iff some beta+gamma in S with those types.

    Only exponents of nonzero parity can create off-diagonal entries, so the
    even part of ``S`` is skipped.
    """
    if not isinstance(S, SupportSet):
        S = SupportSet(S)
    idx = basis_index(basis, p)
    tidx = p.type_index()
    zero = tuple([0] * basis.n)
    edges = set()
    for nu, alphas in S.by_parity.items():
        if nu == zero:
            continue
        # parity type pairs (delta, delta ^ nu) that are still open
        open_pairs = set()
        for t in p.types:
            s = tuple(x ^ y for x, y in zip(t, nu))
            if s in tidx:
                i, j = tidx[t], tidx[s]
                open_pairs.add((i, j) if i < j else (j, i))
        open_pairs -= edges
        for alpha in alphas:
            if not open_pairs:
                break
            rows, cols = idx.complements(alpha)
            if rows.size == 0:
                continue
            ti = idx.type_of[rows]
            tj = idx.type_of[cols]
            lo = np.minimum(ti, tj)
            hi = np.maximum(ti, tj)
            for pair in set(zip(lo.tolist(), hi.tolist())):
                if pair in open_pairs:
                    edges.add(pair)
                    open_pairs.discard(pair)
    return SymBinMatrix(len(p.types), edges, p.types)


def reconstruct_full(B_small: SymBinMatrix, p: ParityPartition) -> BlockPartition:
    """Blocks of the basis: unions of the parity classes joined in ``B_small``."""
    comps = connected_components(B_small)
    blocks = []
    for comp in comps:
        members = []
        for t in comp:
            members.extend(p.classes[p.types[t]])
        blocks.append(members)
    return BlockPartition.from_blocks(blocks)


def block_sums(basis: MonomialBasis, blocks: Iterable[Sequence[int]]) -> SupportSet:
    """``{beta + gamma : beta, gamma in a common block}``."""
    E = np.array(basis.elements, dtype=np.int64).reshape(len(basis), -1)
    out = set()
    for b in blocks:
        sub = E[list(b)]
        sums = (sub[:, None, :] + sub[None, :, :]).reshape(-1, E.shape[1])
        out.update(map(tuple, np.unique(sums, axis=0).tolist()))
    return SupportSet(out)


def shift_support(S: Iterable, shifts: Iterable[Sequence[int]]) -> SupportSet:
    """Minkowski sum ``shifts + S``."""
    sh = [tuple(s) for s in shifts]
    return SupportSet(tuple(a + b for a, b in zip(s, e)) for e in S for s in sh)


def difference_support(S: Iterable, shifts: Iterable[Sequence[int]]) -> SupportSet:
    """``{u - g : u in S, g in shifts}`` restricted to nonnegative vectors."""
    sh = [tuple(s) for s in shifts]
    out = set()
    for u in S:
        for g in sh:
            v = tuple(a - b for a, b in zip(u, g))
            if min(v) >= 0:
                out.add(v)
    return SupportSet(out)


# -- unconstrained -------------------------------------------------------------

@dataclass
class TssosState:
    k: int
    basis: MonomialBasis
    parity: ParityPartition
    S: SupportSet
    C_small: SymBinMatrix | None = None
    B_small: SymBinMatrix | None = None
    blocks: BlockPartition | None = None
    stabilized: bool = False

    @property
    def width(self) -> int:
        return self.blocks.width if self.blocks is not None else 0


@dataclass(frozen=True)
class TssosStep:
    k: int
    blocks: BlockPartition
    stabilized: bool


def relaxation_support(f: Polynomial) -> list:
    """``{0} | supp(f)``: the support of ``f - lambda``."""
    if f.is_zero():
        raise ZeroPolynomialError("the zero polynomial has no relaxation")
    zero = tuple([0] * f.n)
    sup = f.support()
    return sup if zero in f.terms else [zero] + sup


def default_basis(f: Polynomial, cap: int = BASIS_CAP) -> MonomialBasis:
    sup = relaxation_support(f)
    if f.degree % 2:
        raise PolyError(f"odd degree {f.degree}")
    return newton_basis(sup, f.n, cap)


def tssos_init(f: Polynomial, basis: MonomialBasis | None = None) -> TssosState:
    sup = relaxation_support(f)
    if basis is None:
        basis = default_basis(f)
    p = partition_by_parity(basis)
    doubled = (tuple(2 * x for x in b) for b in basis)
    S0 = SupportSet(list(sup) + list(doubled))
    B0 = SymBinMatrix.identity(len(p.types), p.types)
    return TssosState(0, basis, p, S0, None, B0, reconstruct_full(B0, p))


def tssos_step(st: TssosState) -> TssosState:
    C = support_extension_small(st.S, st.parity, st.basis)
    B = block_closure(C)
    blocks = reconstruct_full(B, st.parity)
    stable = st.B_small is not None and st.k >= 1 and B.edges == st.B_small.edges
    S = block_sums(st.basis, blocks.blocks)
    return TssosState(st.k + 1, st.basis, st.parity, S, C, B, blocks, stable)


def run_tssos(f: Polynomial, k_max: int | str = "stabilize", basis: MonomialBasis | None = None,
              max_steps: int | None = None) -> list[TssosStep]:
    """Iterate until ``k_max`` steps, or until the block pattern repeats."""
    st = tssos_init(f, basis)
    limit = len(st.parity.types) + 1 if max_steps is None else max_steps
    out: list[TssosStep] = []
    while True:
        st = tssos_step(st)
        if out and st.stabilized:
            out[-1] = TssosStep(out[-1].k, out[-1].blocks, True)
            if k_max == "stabilize":
                break
        out.append(TssosStep(st.k, st.blocks, st.stabilized))
        if k_max != "stabilize" and st.k >= int(k_max):
            break
        if st.k > limit:
            break
    return out


def tssos_state_at(f: Polynomial, k: int, basis: MonomialBasis | None = None) -> TssosState:
    st = tssos_init(f, basis)
    for _ in range(k):
        st = tssos_step(st)
    return st


# -- constrained -----------------------------------------------------------------

@dataclass(frozen=True)
class Pop:
    objective: Polynomial
    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.objective.is_zero():
            raise ZeroPolynomialError("zero objective")
        for g in self.constraints:
            if g.n != self.objective.n:
                raise PolyError("constraint variable count differs from objective")
            if g.is_zero():
                raise ZeroPolynomialError("zero constraint polynomial")

    @property
    def n(self) -> int:
        return self.objective.n

    @property
    def m(self) -> int:
        return len(self.constraints)

    @property
    def d_j(self) -> list[int]:
        return [0] + [ceil(g.degree / 2) for g in self.constraints]

    @property
    def d(self) -> int:
        return max([ceil(self.objective.degree / 2)] + self.d_j[1:])

    def g(self, j: int) -> Polynomial:
        if j == 0:
            return Polynomial(self.n, {tuple([0] * self.n): 1})
        return self.constraints[j - 1]

    def supp_g(self, j: int) -> list:
        return self.g(j).support()

    def joint_support(self) -> list:
        out = set(self.objective.support())
        for g in self.constraints:
            out.update(g.support())
        return sorted(out, key=grlex_key)


@dataclass
class ConstrainedState:
    pop: Pop
    d_hat: int
    k: int
    bases: list
    parities: list
    S: list  # SupportSet per j
    C_small: list
    B_small: list
    blocks: list
    stabilized: bool = False

    def union(self) -> SupportSet:
        out = set()
        for s in self.S:
            out |= s.exponents
        return SupportSet(out)


def constrained_init(pop: Pop, d_hat: int, cap: int = BASIS_CAP) -> ConstrainedState:
    if d_hat < pop.d:
        raise PolyError(f"relaxation order {d_hat} below minimum {pop.d}")
    bases, parts, blocks, Bs = [], [], [], []
    for dj in pop.d_j:
        size = comb(pop.n + d_hat - dj, d_hat - dj)
        if size > cap:
            raise BasisCapError(f"basis size {size} exceeds cap {cap}")
        b = standard_basis(pop.n, d_hat - dj)
        p = partition_by_parity(b)
        bases.append(b)
        parts.append(p)
        B0 = SymBinMatrix.identity(len(p.types), p.types)
        Bs.append(B0)
        blocks.append(reconstruct_full(B0, p))
    zero = tuple([0] * pop.n)
    A = set(pop.joint_support())
    A.add(zero)
    S0 = SupportSet(A | {tuple(2 * x for x in b) for b in bases[0]})
    S = [S0] + [SupportSet(()) for _ in range(pop.m)]
    return ConstrainedState(pop, d_hat, 0, bases, parts, S, [None] * (pop.m + 1), Bs, blocks)


def constrained_step(st: ConstrainedState) -> ConstrainedState:
    U = st.union()
    C, B, S, blocks = [], [], [], []
    for j in range(st.pop.m + 1):
        sg = st.pop.supp_g(j)
        shifted = difference_support(U, sg)
        Cj = support_extension_small(shifted, st.parities[j], st.bases[j])
        Bj = block_closure(Cj)
        bl = reconstruct_full(Bj, st.parities[j])
        C.append(Cj)
        B.append(Bj)
        blocks.append(bl)
        S.append(shift_support(block_sums(st.bases[j], bl.blocks), sg))
    stable = st.k >= 1 and all(b.edges == o.edges for b, o in zip(B, st.B_small))
    return ConstrainedState(st.pop, st.d_hat, st.k + 1, st.bases, st.parities, S, C, B, blocks, stable)


def constrained_state_at(pop: Pop, d_hat: int, k: int) -> ConstrainedState:
    st = constrained_init(pop, d_hat)
    for _ in range(k):
        st = constrained_step(st)
    return st


def run_constrained(pop: Pop, d_hat: int, k_max: int | str = "stabilize") -> list[ConstrainedState]:
    st = constrained_init(pop, d_hat)
    out = []
    limit = sum(len(p.types) for p in st.parities) + 1
    while True:
        st = constrained_step(st)
        out.append(st)
        if st.stabilized and k_max == "stabilize":
            break
        if k_max != "stabilize" and st.k >= int(k_max):
            break
        if st.k > limit:
            break
    return out


# -- full-basis procedure (test oracle) -----------------------------------------

def _full_closure_blocks(basis: MonomialBasis, member) -> BlockPartition:
    r = len(basis)
    uf = UnionFind(r)
    for i in range(r):
        for j in range(i + 1, r):
            if member(basis[i], basis[j]):
                uf.union(i, j)
    return BlockPartition.from_blocks(uf.groups())


def oracle_two_step(f: Polynomial | Pop, k: int, d_hat: int | None = None,
                    basis: MonomialBasis | None = None, cap: int = ORACLE_CAP):
    """Direct support extension + block closure over the full basis.

    Returns a BlockPartition for a polynomial, or a list (one per j) for a Pop.
    """
    if isinstance(f, Polynomial):
        if basis is None:
            basis = default_basis(f)
        if len(basis) > cap:
            raise BasisCapError(f"oracle basis size {len(basis)} exceeds cap {cap}")
        S = set(relaxation_support(f)) | {tuple(2 * x for x in b) for b in basis}
        blocks = None
        for _ in range(k):
            blocks = _full_closure_blocks(basis, lambda b, c: tuple(x + y for x, y in zip(b, c)) in S)
            S = {tuple(x + y for x, y in zip(basis[i], basis[j])) for bl in blocks for i in bl for j in bl}
        return blocks
    pop = f
    if d_hat is None:
        d_hat = pop.d
    bases = [standard_basis(pop.n, d_hat - dj) for dj in pop.d_j]
    if max(len(b) for b in bases) > cap:
        raise BasisCapError("oracle basis exceeds cap")
    zero = tuple([0] * pop.n)
    S = [set(pop.joint_support()) | {zero} | {tuple(2 * x for x in b) for b in bases[0]}]
    S += [set() for _ in range(pop.m)]
    result = None
    for _ in range(k):
        U = set().union(*S)
        result, newS = [], []
        for j in range(pop.m + 1):
            sg = pop.supp_g(j)

            def member(b, c, sg=sg):
                s = tuple(x + y for x, y in zip(b, c))
                return any(tuple(a + g_ for a, g_ in zip(s, g)) in U for g in sg)

            bl = _full_closure_blocks(bases[j], member)
            result.append(bl)
            newS.append({tuple(bases[j][a][t] + bases[j][b][t] + g[t] for t in range(pop.n))
                         for blk in bl for a in blk for b in blk for g in sg})
        S = newS
    return result
