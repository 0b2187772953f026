"""Refinement of term-sparsity block partitions by per-parity-type integer programs.

Starting from the support-extension matrix ``W = C^(k)`` over parity types,
the loop visits every nonzero parity type ``nu`` of the support set.  For
each one it compresses ``W`` restricted to the ``nu``-pairing onto the current
groups of types, closes it, and solves a small program that merges groups
while keeping an ``eps``-fraction of the witnessing pairs of every exponent of
type ``nu`` inside blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil
from typing import Sequence

import numpy as np

from .graphs import (
    BlockPartition,
    SymBinMatrix,
    UnionFind,
    block_closure,
    chordal_extension,
    connected_components,
)
from .ip import CoverRow, IPProblem, IPSolution, solve_ip
from .polycore import MonomialBasis, ParityPartition, Polynomial, grlex_key, partition_by_parity
from .tssos import (
    ConstrainedState,
    Pop,
    SupportSet,
    basis_index,
    constrained_state_at,
    difference_support,
    reconstruct_full,
    support_extension_small,
    tssos_state_at,
)


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class RefineConfig:
    k: int = 1
    eps: Fraction = Fraction(1, 2)
    tie_break: str = "balanced"
    ip_budget: float = 60.0
    skip_satisfied: bool = True
    nu_order: str = "grlex"

    def __post_init__(self):
        object.__setattr__(self, "eps", as_fraction(self.eps))
        if not (0 < self.eps < 1):
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    @property
    def tau(self) -> Fraction:
        return self.k - 1 + self.eps

    @classmethod
    def from_tau(cls, tau, **kw) -> "RefineConfig":
        t = as_fraction(tau)
        k = int(t) + 1
        eps = t - (k - 1)
        if eps == 0:
            raise ValueError(f"tau {tau} is an integer; use plain TSSOS at that step")
        return cls(k=k, eps=eps, **kw)


# -- matrices -------------------------------------------------------------------

def assemble_A(alpha: Sequence[int], basis: MonomialBasis) -> SymBinMatrix:
    """Pattern of basis pairs summing to ``alpha``; (beta, beta) pairs sit on the diagonal."""
    rows, cols = basis_index(basis).complements(alpha)
    m = SymBinMatrix(len(basis), zip(rows.tolist(), cols.tolist()))
    return m


def supp_A_count(alpha: Sequence[int], basis: MonomialBasis) -> int:
    """Number of ordered pairs ``(beta, gamma)`` with ``beta + gamma = alpha``."""
    rows, _ = basis_index(basis).complements(alpha)
    return int(rows.size)


def assemble_E(nu: Sequence[int], types: Sequence[Sequence[int]]) -> SymBinMatrix:
    """Types ``delta, sigma`` with ``delta + sigma = nu`` mod 2 (identity when nu = 0)."""
    pos = {tuple(t): i for i, t in enumerate(types)}
    edges = []
    for i, t in enumerate(types):
        s = tuple(a ^ b for a, b in zip(t, nu))
        j = pos.get(s)
        if j is not None and j != i:
            edges.append((i, j))
    return SymBinMatrix(len(types), edges, types)


def e_dense(nu: Sequence[int], types: Sequence[Sequence[int]]) -> np.ndarray:
    """Dense ``E_nu`` with its true diagonal (zero unless nu = 0)."""
    a = assemble_E(nu, types).to_dense(diagonal=0)
    if not any(nu):
        np.fill_diagonal(a, 1)
    return a


def compress_D(M: SymBinMatrix, groups: Sequence[Sequence[int]]) -> SymBinMatrix:
    """Group-level OR of ``M``."""
    owner = {t: g for g, grp in enumerate(groups) for t in grp}
    edges = {(owner[i], owner[j]) for i, j in M.edges if owner[i] != owner[j]}
    return SymBinMatrix(len(groups), edges)


def assemble_K(alpha: Sequence[int], basis: MonomialBasis, groups_of_positions: Sequence[Sequence[int]]) -> np.ndarray:
    """``[K]_ij`` = ordered pairs (beta in I_i, gamma in I_j) with ``beta + gamma = alpha``."""
    owner = np.empty(len(basis), dtype=np.int64)
    for g, grp in enumerate(groups_of_positions):
        owner[list(grp)] = g
    rows, cols = basis_index(basis).complements(alpha)
    k = np.zeros((len(groups_of_positions),) * 2, dtype=np.int64)
    np.add.at(k, (owner[rows], owner[cols]), 1)
    return k


def _positions(groups: Sequence[Sequence[int]], p: ParityPartition) -> list:
    return [[pos for t in grp for pos in p.classes[p.types[t]]] for grp in groups]


def build_ip(eps, components: Sequence[Sequence[int]], sizes: Sequence[int],
             K_set: Sequence[tuple], labels=None) -> IPProblem:
    """Program for one ``nu``: ``K_set`` holds ``(alpha, K)`` pairs over groups."""
    rows = []
    for alpha, K in K_set:
        total = int(K.sum())
        if total == 0:
            continue
        coeffs = []
        r = K.shape[0]
        for i in range(r):
            for j in range(i + 1, r):
                c = int(K[i, j] + K[j, i])
                if c:
                    coeffs.append(((i, j), c))
        rows.append(CoverRow(tuple(coeffs), int(np.trace(K)), total, tuple(alpha)))
    return IPProblem(tuple(sizes), tuple(tuple(c) for c in components), tuple(rows), eps, labels)


# -- the loop -------------------------------------------------------------------

@dataclass
class NuStep:
    nu: tuple
    groups_before: list
    groups_after: list
    E: list
    M: list
    D: list
    D_bar: list
    n_vars: int = 0
    n_cons: int = 0
    omega: int | None = None
    y: dict = field(default_factory=dict)
    solved: bool = False
    status: str = "skipped"

    def to_json(self) -> dict:
        return {
            "nu": list(self.nu),
            "groups_before": self.groups_before,
            "groups_after": self.groups_after,
            "E": self.E,
            "M": self.M,
            "D_M": self.D,
            "D_M_closure": self.D_bar,
            "ip": {
                "solved": self.solved,
                "status": self.status,
                "vars": self.n_vars,
                "cons": self.n_cons,
                "omega": self.omega,
                "y": {f"{i + 1},{j + 1}": v for (i, j), v in sorted(self.y.items())},
            },
        }


@dataclass
class RefineResult:
    blocks: BlockPartition
    groups: list  # groups of parity-type indices
    parity: ParityPartition
    basis: MonomialBasis
    support: SupportSet
    tssos_blocks: BlockPartition
    C_small: SymBinMatrix
    steps: list
    eps: Fraction
    time_ip: float = 0.0

    @property
    def width(self) -> int:
        return self.blocks.width

    def trace_json(self) -> dict:
        return {
            "types": ["".join(map(str, t)) for t in self.parity.types],
            "class_sizes": [len(self.parity.classes[t]) for t in self.parity.types],
            "eps": str(self.eps),
            "steps": [s.to_json() for s in self.steps],
            "final_groups": self.groups,
            "block_sizes": self.blocks.sizes(),
        }

    def ip_sizes(self) -> list:
        return [(s.n_vars, s.n_cons) for s in self.steps if s.solved]


def _nu_sequence(S: SupportSet, order: str) -> list:
    if order == "grlex":
        return sorted(S.by_parity, key=grlex_key)
    if order == "support":
        # first appearance along the lexicographically sorted support
        seen = {}
        for e in sorted(S.exponents):
            seen.setdefault(tuple(x % 2 for x in e), None)
        return list(seen)
    raise ValueError(f"unknown nu order {order!r}")


def refine_core(basis: MonomialBasis, p: ParityPartition, S: SupportSet, W: SymBinMatrix,
                eps, tie_break: str = "balanced", ip_budget: float = 60.0,
                skip_satisfied: bool = True, trace: bool = False, nu_order: str = "grlex"):
    """Run the nu-loop; returns (groups of type indices, steps, ip time)."""
    eps = as_fraction(eps)
    types = p.types
    uf = UnionFind(len(types))
    zero = tuple([0] * basis.n)
    steps = []
    ip_time = 0.0
    class_size = [len(p.classes[t]) for t in types]
    for nu in _nu_sequence(S, nu_order):
        if nu == zero:
            continue
        alphas = S.by_parity[nu]
        groups = uf.groups()
        E = assemble_E(nu, types)
        M = W.hadamard(E)
        D = compress_D(M, groups)
        Dbar_parts = connected_components(D)
        sizes = [sum(class_size[t] for t in g) for g in groups]
        pos_groups = _positions(groups, p)
        K_set = []
        for alpha in alphas:
            K = assemble_K(alpha, basis, pos_groups)
            if K.sum():
                K_set.append((alpha, K))
        ip = build_ip(eps, Dbar_parts.blocks, sizes, K_set)
        step = None
        if trace:
            step = NuStep(nu, [list(g) for g in groups], [], e_dense(nu, types).tolist(),
                          (M.to_dense(diagonal=1)).tolist(), D.to_dense(diagonal=1).tolist(),
                          block_closure(D).to_dense(diagonal=1).tolist())
        satisfied = all(row.need(eps) <= 0 for row in ip.rows)
        if ip.rows and not (skip_satisfied and satisfied) and ip.var_pairs:
            sol = solve_ip(ip, budget=ip_budget, tie_break=tie_break)
            ip_time += sol.stats.time
            for blk in sol.blocks:
                for g in blk[1:]:
                    uf.union(groups[blk[0]][0], groups[g][0])
            if step is not None:
                step.solved = True
                step.status = sol.stats.status
                step.n_vars = len(ip.var_pairs)
                step.n_cons = ip.n_constraints()
                step.omega = sol.omega
                step.y = sol.y
        if step is not None:
            step.groups_after = [list(g) for g in uf.groups()]
            steps.append(step)
    return uf.groups(), steps, ip_time


def refine(f: Polynomial, cfg: RefineConfig, basis: MonomialBasis | None = None,
           trace: bool = False) -> RefineResult:
    """Refined partition ``I^(tau)`` of the basis for an unconstrained problem."""
    st = tssos_state_at(f, cfg.k - 1, basis)
    C = support_extension_small(st.S, st.parity, st.basis)
    tblocks = reconstruct_full(block_closure(C), st.parity)
    groups, steps, t_ip = refine_core(st.basis, st.parity, st.S, C, cfg.eps, cfg.tie_break,
                                      cfg.ip_budget, cfg.skip_satisfied, trace, cfg.nu_order)
    blocks = BlockPartition.from_blocks(_positions(groups, st.parity))
    res = RefineResult(blocks, groups, st.parity, st.basis, st.S, tblocks, C, steps, cfg.eps, t_ip)
    return res


def constrained_support(st: ConstrainedState, j: int) -> SupportSet:
    """``(S_0 - supp(g_j)) & (B^(j) + B^(j))`` for the localizing index ``j``."""
    shifted = difference_support(st.S[0], st.pop.supp_g(j))
    d = st.d_hat - st.pop.d_j[j]
    return SupportSet(e for e in shifted.exponents if sum(e) <= 2 * d)


def refine_constrained(pop: Pop, d_hat: int, cfgs: Sequence[RefineConfig] | RefineConfig,
                       trace: bool = False) -> list[RefineResult]:
    """One refined partition per ``j = 0..m``; all configs must share ``k``."""
    if isinstance(cfgs, RefineConfig):
        cfgs = [cfgs] * (pop.m + 1)
    if len(cfgs) != pop.m + 1:
        raise ValueError(f"need {pop.m + 1} configs, got {len(cfgs)}")
    ks = {c.k for c in cfgs}
    if len(ks) != 1:
        raise ValueError("all configs must share the same base step k")
    k = ks.pop()
    prev = constrained_state_at(pop, d_hat, k - 1)
    U = prev.union()
    out = []
    for j, cfg in enumerate(cfgs):
        basis, p = prev.bases[j], prev.parities[j]
        W = support_extension_small(difference_support(U, pop.supp_g(j)), p, basis)
        tblocks = reconstruct_full(block_closure(W), p)
        S = constrained_support(prev, j)
        groups, steps, t_ip = refine_core(basis, p, S, W, cfg.eps, cfg.tie_break,
                                          cfg.ip_budget, cfg.skip_satisfied, trace, cfg.nu_order)
        blocks = BlockPartition.from_blocks(_positions(groups, p))
        out.append(RefineResult(blocks, groups, p, basis, S, tblocks, W, steps, cfg.eps, t_ip))
    return out


# -- checks ----------------------------------------------------------------------

def condition_c1_violations(basis: MonomialBasis, blocks: BlockPartition, S: SupportSet, eps) -> list:
    """Exponents of nonzero parity whose co-blocked pair count falls below ``eps * |supp A|``."""
    eps = as_fraction(eps)
    owner = np.empty(len(basis), dtype=np.int64)
    for b, blk in enumerate(blocks.blocks):
        owner[list(blk)] = b
    idx = basis_index(basis)
    bad = []
    for alpha in S:
        if not any(x % 2 for x in alpha):
            continue
        rows, cols = idx.complements(alpha)
        total = rows.size
        if total == 0:
            continue
        kept = int(np.count_nonzero(owner[rows] == owner[cols]))
        if kept < eps * total:
            bad.append((alpha, kept, total))
    return bad


def even_coverage_ok(basis: MonomialBasis, blocks: BlockPartition) -> bool:
    """Every pair summing to an element of ``2B`` lies inside one block."""
    owner = np.empty(len(basis), dtype=np.int64)
    for b, blk in enumerate(blocks.blocks):
        owner[list(blk)] = b
    idx = basis_index(basis)
    for beta in basis:
        rows, cols = idx.complements(tuple(2 * x for x in beta))
        if np.any(owner[rows] != owner[cols]):
            return False
    return True


# -- chordal variants -------------------------------------------------------------

def support_graph(basis: MonomialBasis, S: SupportSet, shifts: Sequence | None = None,
                  within: BlockPartition | None = None) -> SymBinMatrix:
    """Full-basis pattern: (beta, gamma) set iff ``g + beta + gamma`` hits ``S`` for some shift g.

    With ``within`` given, only pairs inside one of its blocks are considered.
    """
    E = np.array(basis.elements, dtype=np.int64).reshape(len(basis), -1)
    targets = S.exponents
    sh = [tuple(s) for s in shifts] if shifts else [tuple([0] * basis.n)]
    sh_arr = np.array(sh, dtype=np.int64)
    if within is None:
        within = BlockPartition.from_blocks([range(len(basis))])
    edges = []
    for blk in within.blocks:
        idx = np.array(blk, dtype=np.int64)
        if idx.size < 2:
            continue
        sub = E[idx]
        ii, jj = np.triu_indices(idx.size, 1)
        sums = sub[ii] + sub[jj]
        hit = np.zeros(ii.size, dtype=bool)
        for g in sh_arr:
            shifted = sums + g
            hit |= np.fromiter((tuple(v) in targets for v in shifted.tolist()), dtype=bool, count=ii.size)
        edges.extend(zip(idx[ii[hit]].tolist(), idx[jj[hit]].tolist()))
    return SymBinMatrix(len(basis), edges)


def chordal_cliques(f: Polynomial, k: int = 1, basis: MonomialBasis | None = None) -> list:
    """Maximal cliques of a chordal extension of the full support-extension graph."""
    st = tssos_state_at(f, k - 1, basis)
    _, cliques = chordal_extension(support_graph(st.basis, st.S))
    return cliques


def refined_chordal(f: Polynomial, cfg: RefineConfig, basis: MonomialBasis | None = None):
    """Cliques of a chordal extension of ``C_A^(k)`` restricted to the refined blocks."""
    res = refine(f, cfg, basis)
    st_basis = res.basis
    g = support_graph(st_basis, res.support, within=res.blocks)
    _, cliques = chordal_extension(g)
    return cliques, res


def constrained_chordal_cliques(pop: Pop, d_hat: int, k: int = 1,
                                refined: Sequence[RefineResult] | None = None) -> list:
    """Per-j cliques for chordal (refined when ``refined`` is given) constrained relaxations."""
    prev = constrained_state_at(pop, d_hat, k - 1)
    U = prev.union()
    out = []
    for j in range(pop.m + 1):
        within = refined[j].blocks if refined is not None else None
        g = support_graph(prev.bases[j], U, pop.supp_g(j), within)
        _, cliques = chordal_extension(g)
        out.append(cliques)
    return out
