import random
import time

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtssos.graphs import (
    BlockPartition,
    SymBinMatrix,
    UnionFind,
    block_closure,
    chordal_extension,
    connected_components,
    is_chordal,
    perfect_elimination_ordering,
)

EX21 = np.array([
    [1, 0, 1, 1, 0],
    [0, 1, 0, 1, 0],
    [1, 0, 1, 0, 0],
    [1, 1, 0, 1, 0],
    [0, 0, 0, 0, 1],
])
EX21_BAR = np.array([
    [1, 1, 1, 1, 0],
    [1, 1, 1, 1, 0],
    [1, 1, 1, 1, 0],
    [1, 1, 1, 1, 0],
    [0, 0, 0, 0, 1],
])


def random_graph(rng, r, p):
    edges = [(i, j) for i in range(r) for j in range(i + 1, r) if rng.random() < p]
    return SymBinMatrix(r, edges)


def bfs_components(g: SymBinMatrix):
    nb = g.neighbors()
    seen, comps = set(), []
    for s in range(g.size):
        if s in seen:
            continue
        comp, queue = [], [s]
        seen.add(s)
        while queue:
            u = queue.pop()
            comp.append(u)
            for v in nb[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        comps.append(sorted(comp))
    return sorted(comps)


def test_example_block_closure():
    t0 = time.perf_counter()
    bar = block_closure(SymBinMatrix.from_dense(EX21))
    elapsed = time.perf_counter() - t0
    assert (bar.to_dense() == EX21_BAR).all()
    assert elapsed < 0.01


def test_example_components():
    part = connected_components(SymBinMatrix.from_dense(EX21))
    assert sorted(map(list, part.blocks)) == [[0, 1, 2, 3], [4]]
    assert part.width == 4


def test_closure_trivial_cases():
    ident = SymBinMatrix.identity(4)
    assert block_closure(ident).edges == ident.edges
    path = SymBinMatrix(3, [(0, 1), (1, 2)])
    assert (block_closure(path).to_dense() == np.ones((3, 3))).all()
    assert connected_components(SymBinMatrix(4, [])).width == 1
    assert connected_components(SymBinMatrix.complete(6)).width == 6


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.floats(0.0, 0.2), st.integers(0, 10**6))
def test_components_match_bfs_and_networkx(r, p, seed):
    g = random_graph(random.Random(seed), r, p)
    ours = sorted(sorted(b) for b in connected_components(g).blocks)
    assert ours == bfs_components(g)
    G = nx.Graph()
    G.add_nodes_from(range(r))
    G.add_edges_from(g.edges)
    assert ours == sorted(sorted(c) for c in nx.connected_components(G))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.floats(0.0, 0.15), st.integers(0, 10**6))
def test_closure_idempotent_and_monotone(r, p, seed):
    rng = random.Random(seed)
    a = random_graph(rng, r, p)
    extra = random_graph(rng, r, p / 2)
    b = SymBinMatrix(r, set(a.edges) | set(extra.edges))
    abar, bbar = block_closure(a), block_closure(b)
    assert block_closure(abar).edges == abar.edges
    assert a.issubset(abar)
    assert abar.issubset(bbar)
    expect = connected_components(a).to_matrix()
    assert abar.edges == expect.edges


def test_union_find_min_representative():
    uf = UnionFind(6)
    uf.union(4, 2)
    uf.union(5, 4)
    uf.union(1, 3)
    assert uf.find(5) == 2
    assert uf.groups() == [[0], [1, 3], [2, 4, 5]]


def test_block_partition_refines():
    fine = BlockPartition.from_blocks([[0], [1, 2], [3]])
    coarse = BlockPartition.from_blocks([[0, 1, 2], [3]])
    assert fine.refines(coarse)
    assert not coarse.refines(fine)
    assert fine.sizes() == [2, 1, 1]


def test_chordal_tree_unchanged():
    tree = SymBinMatrix(5, [(0, 1), (1, 2), (1, 3), (3, 4)])
    ext, cliques = chordal_extension(tree)
    assert ext.edges == tree.edges
    assert sorted(cliques) == sorted(tuple(sorted(e)) for e in tree.edges)


def test_chordal_four_cycle_gets_one_chord():
    cyc = SymBinMatrix(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    ext, cliques = chordal_extension(cyc)
    assert len(ext.edges) == 5
    assert sorted(len(c) for c in cliques) == [3, 3]
    assert is_chordal(ext)
    assert not is_chordal(cyc)


def test_chordal_complete_graph():
    k5 = SymBinMatrix.complete(5)
    ext, cliques = chordal_extension(k5)
    assert ext.edges == k5.edges
    assert cliques == [(0, 1, 2, 3, 4)]


def _peo_ok(g: SymBinMatrix, order) -> bool:
    nb = g.neighbors()
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        later = [u for u in nb[v] if pos[u] > pos[v]]
        for i, a in enumerate(later):
            for b in later[i + 1:]:
                if b not in nb[a]:
                    return False
    return True


def test_chordal_extension_random_suite():
    rng = random.Random(7)
    t0 = time.monotonic()
    for _ in range(200):
        r = rng.randint(1, 64)
        g = random_graph(rng, r, rng.uniform(0.0, 0.25))
        ext, cliques = chordal_extension(g)
        order = perfect_elimination_ordering(ext)
        assert order is not None and _peo_ok(ext, order)
        assert g.issubset(ext)
        assert len(set(cliques)) == len(cliques)
        assert all(list(c) == sorted(c) for c in cliques)
        G = nx.Graph()
        G.add_nodes_from(range(r))
        G.add_edges_from(ext.edges)
        assert nx.is_chordal(G)
        assert sorted(cliques) == sorted(tuple(sorted(c)) for c in nx.find_cliques(G))
        H = nx.Graph()
        H.add_nodes_from(range(r))
        H.add_edges_from(g.edges)
        cl_sets = [set(c) for c in cliques]
        for c in nx.find_cliques(H):
            assert any(set(c) <= s for s in cl_sets)
    assert time.monotonic() - t0 < 60


def test_to_dot_lists_edges():
    dot = SymBinMatrix(3, [(0, 2)]).to_dot("G")
    assert dot.startswith("graph G")
    assert "0 -- 2" in dot


def test_hadamard():
    a = SymBinMatrix(3, [(0, 1), (1, 2)])
    b = SymBinMatrix(3, [(1, 2), (0, 2)])
    assert a.hadamard(b).edges == {(1, 2)}


def test_invalid_index_rejected():
    with pytest.raises(IndexError):
        SymBinMatrix(2, [(0, 2)])
