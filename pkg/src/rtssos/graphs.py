"""Symmetric 0/1 matrices as graphs: block closure, components, chordal extension."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class SymBinMatrix:
    """Symmetric binary matrix stored as an off-diagonal edge set.

    The diagonal is implicit and treated as all ones, which is how every
    matrix in the term-sparsity iteration behaves (``2*beta`` is always in
    the support set).
    """

    __slots__ = ("size", "edges", "labels")

    def __init__(self, size: int, edges: Iterable[tuple[int, int]] = (), labels: Sequence | None = None):
        es = set()
        for i, j in edges:
            if not (0 <= i < size and 0 <= j < size):
                raise IndexError(f"edge ({i}, {j}) outside [0, {size})")
            if i != j:
                es.add((i, j) if i < j else (j, i))
        self.size = size
        self.edges = frozenset(es)
        self.labels = tuple(labels) if labels is not None else None

    @classmethod
    def from_dense(cls, a, labels=None) -> "SymBinMatrix":
        a = np.asarray(a)
        r = a.shape[0]
        if a.shape != (r, r) or not np.array_equal(a, a.T):
            raise ValueError("matrix must be square and symmetric")
        ii, jj = np.nonzero(np.triu(a, 1))
        return cls(r, zip(ii.tolist(), jj.tolist()), labels)

    @classmethod
    def identity(cls, size: int, labels=None) -> "SymBinMatrix":
        return cls(size, (), labels)

    @classmethod
    def complete(cls, size: int, labels=None) -> "SymBinMatrix":
        return cls(size, ((i, j) for i in range(size) for j in range(i + 1, size)), labels)

    def to_dense(self, diagonal: int = 1) -> np.ndarray:
        a = np.zeros((self.size, self.size), dtype=np.int8)
        if diagonal:
            np.fill_diagonal(a, 1)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def __getitem__(self, ij) -> int:
        i, j = ij
        if i == j:
            return 1
        return int(((i, j) if i < j else (j, i)) in self.edges)

    def __eq__(self, other) -> bool:
        return isinstance(other, SymBinMatrix) and self.size == other.size and self.edges == other.edges

    def __hash__(self):
        return hash((self.size, self.edges))

    def __repr__(self) -> str:
        return f"SymBinMatrix(size={self.size}, edges={len(self.edges)})"

    def neighbors(self) -> list[set[int]]:
        adj = [set() for _ in range(self.size)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def hadamard(self, other: "SymBinMatrix") -> "SymBinMatrix":
        return SymBinMatrix(self.size, self.edges & other.edges, self.labels)

    def issubset(self, other: "SymBinMatrix") -> bool:
        return self.edges <= other.edges

    def to_dot(self, name: str = "G") -> str:
        lines = [f"graph {name} {{"]
        for v in range(self.size):
            label = self.labels[v] if self.labels is not None else v
            if isinstance(label, tuple):
                label = "".join(str(x) for x in label)
            lines.append(f'  {v} [label="{label}"];')
        for i, j in sorted(self.edges):
            lines.append(f"  {i} -- {j};")
        lines.append("}")
        return "\n".join(lines) + "\n"


class UnionFind:
    """Disjoint sets over ``0..n-1``; the representative is the minimum index."""

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, k: int) -> int:
        root = k
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[k] != root:
            self.parent[k], k = root, self.parent[k]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return ra

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for v in range(len(self.parent)):
            out.setdefault(self.find(v), []).append(v)
        return [out[r] for r in sorted(out)]


@dataclass(frozen=True)
class BlockPartition:
    blocks: tuple  # tuple of sorted index tuples, ordered by minimum index

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]]) -> "BlockPartition":
        bs = [tuple(sorted(b)) for b in blocks if len(tuple(b)) > 0]
        bs.sort(key=lambda b: b[0])
        return cls(tuple(bs))

    @property
    def width(self) -> int:
        return max((len(b) for b in self.blocks), default=0)

    @property
    def size(self) -> int:
        return sum(len(b) for b in self.blocks)

    def sizes(self) -> list[int]:
        return sorted((len(b) for b in self.blocks), reverse=True)

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def block_of(self) -> dict[int, int]:
        return {v: k for k, b in enumerate(self.blocks) for v in b}

    def refines(self, other: "BlockPartition") -> bool:
        """True if every block of ``self`` lies inside one block of ``other``."""
        owner = other.block_of()
        return all(len({owner[v] for v in b}) == 1 for b in self.blocks)

    def to_matrix(self) -> SymBinMatrix:
        n = self.size
        return SymBinMatrix(n, ((b[i], b[j]) for b in self.blocks
                                for i in range(len(b)) for j in range(i + 1, len(b))))


def connected_components(b: SymBinMatrix) -> BlockPartition:
    uf = UnionFind(b.size)
    for i, j in b.edges:
        uf.union(i, j)
    return BlockPartition.from_blocks(uf.groups())


def block_closure(b: SymBinMatrix) -> SymBinMatrix:
    m = connected_components(b).to_matrix()
    return SymBinMatrix(b.size, m.edges, b.labels)


def chordal_extension(b: SymBinMatrix) -> tuple[SymBinMatrix, list[tuple[int, ...]]]:
    """Greedy minimum-degree elimination; returns the filled graph and its maximal cliques.

    Ties on degree go to the lowest vertex index.
    """
    adj = b.neighbors()
    work = [set(s) for s in adj]
    alive = set(range(b.size))
    fill = set()
    candidates = []
    while alive:
        v = min(alive, key=lambda u: (len(work[u]), u))
        nb = sorted(work[v])
        for x in range(len(nb)):
            for y in range(x + 1, len(nb)):
                p, q = nb[x], nb[y]
                if q not in work[p]:
                    work[p].add(q)
                    work[q].add(p)
                    fill.add((p, q))
        candidates.append(frozenset([v, *nb]))
        for u in nb:
            work[u].discard(v)
        alive.discard(v)
    # cliques of the elimination game: keep the inclusion-maximal ones
    candidates.sort(key=len, reverse=True)
    maximal: list[frozenset] = []
    for c in candidates:
        if not any(c <= m for m in maximal):
            maximal.append(c)
    cliques = sorted({tuple(sorted(c)) for c in maximal})
    return SymBinMatrix(b.size, b.edges | fill, b.labels), cliques


def perfect_elimination_ordering(b: SymBinMatrix) -> list[int] | None:
    """Maximum cardinality search; returns a PEO if ``b`` is chordal, else None."""
    adj = b.neighbors()
    n = b.size
    weight = [0] * n
    numbered = [False] * n
    order = []
    for _ in range(n):
        v = max((u for u in range(n) if not numbered[u]), key=lambda u: (weight[u], -u))
        numbered[v] = True
        order.append(v)
        for u in adj[v]:
            if not numbered[u]:
                weight[u] += 1
    peo = order[::-1]
    pos = {v: i for i, v in enumerate(peo)}
    for v in peo:
        later = [u for u in adj[v] if pos[u] > pos[v]]
        if not later:
            continue
        first = min(later, key=lambda u: pos[u])
        if any(w != first and w not in adj[first] for w in later):
            return None
    return peo


def is_chordal(b: SymBinMatrix) -> bool:
    return perfect_elimination_ordering(b) is not None
