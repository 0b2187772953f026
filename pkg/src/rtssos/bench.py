"""Random test polynomials and an experiment runner producing CSV rows."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .graphs import BlockPartition
from .polycore import Polynomial, newton_basis, parse_polynomial, standard_basis
from .refine import (
    RefineConfig,
    as_fraction,
    chordal_cliques,
    constrained_chordal_cliques,
    refine,
    refine_constrained,
    support_graph,
)
from .graphs import chordal_extension
from .tssos import Pop, constrained_state_at, default_basis, run_tssos

REJECTION_CAP = 1_000_000


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GenSpec:
    family: str  # "I" | "II" | "III" (generator number)
    n: int
    two_d: int
    s: int = 0
    k: tuple = ()  # (k1, k2, k3, k4) for family II
    min_nonzero: int | None = None
    max_nonzero: int | None = None
    seed: int = 0


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _unit(rng) -> Fraction:
    """Uniform in (0, 1]."""
    return Fraction(1.0 - rng.random())


def _sym(rng) -> Fraction:
    """Uniform in [-1, 1], redrawn on an exact zero."""
    while True:
        v = 2.0 * rng.random() - 1.0
        if v != 0.0:
            return Fraction(v)


def _random_exponent(rng, n: int, D: int) -> tuple:
    """Uniform over N^n_D (stars and bars over n + 1 parts)."""
    cuts = np.sort(rng.choice(D + n, size=n, replace=False))
    parts = np.diff(np.concatenate(([-1], cuts, [D + n]))) - 1
    return tuple(int(x) for x in parts[:n])


def _draw(rng, accept, sampler):
    for _ in range(REJECTION_CAP):
        e = sampler()
        if accept(e):
            return e
    raise GeneratorError(f"rejection sampling exceeded {REJECTION_CAP} attempts")


def gen_randpoly1(spec: GenSpec, rng=None) -> Polynomial:
    """``c_0 + sum c_i x_i^{2d} + sum c'_j x^{alpha_j}`` with ``s - n - 1`` random alphas."""
    n, two_d, s = spec.n, spec.two_d, spec.s
    if s < n + 2:
        raise GeneratorError(f"s={s} must be at least n + 2 = {n + 2}")
    lo = spec.min_nonzero or 0
    hi = spec.max_nonzero if spec.max_nonzero is not None else n
    if lo > min(n, two_d - 1) or hi < 1 or lo > hi:
        raise GeneratorError("nonzero-count filter leaves nothing to sample")
    rng = rng if rng is not None else make_rng(spec.seed)
    terms = {tuple([0] * n): _unit(rng)}
    for i in range(n):
        e = [0] * n
        e[i] = two_d
        terms[tuple(e)] = _unit(rng)
    chosen = set()

    def ok(e):
        nz = sum(1 for x in e if x)
        return nz >= max(lo, 1) and nz <= hi and e not in chosen

    for _ in range(s - n - 1):
        e = _draw(rng, ok, lambda: _random_exponent(rng, n, two_d - 1))
        chosen.add(e)
        terms[e] = _sym(rng)
    return Polynomial(n, terms)


def gen_randpoly2(spec: GenSpec, rng=None) -> Polynomial:
    """Mixed-degree diagonal plus even fillers, then odd and cross terms inside ``B_g + B_g``."""
    return randpoly2_parts(spec, rng)[0]


def randpoly2_parts(spec: GenSpec, rng=None) -> tuple:
    """``(f, g, betas)``: the output, its even part ``g`` and the cross exponents drawn from ``B_g + B_g``."""
    n, two_d = spec.n, spec.two_d
    d = two_d // 2
    k1, k2, k3, k4 = spec.k
    if not 0 <= k1 <= n:
        raise GeneratorError("k1 must lie in [0, n]")
    rng = rng if rng is not None else make_rng(spec.seed)
    perm = [int(v) for v in rng.permutation(n)]
    raised = perm[:k1]
    A2 = sorted(i for i in raised if rng.random() < 0.5)
    A3 = sorted(i for i in raised if i not in A2)
    g_terms = {}
    for i in range(n):
        e = [0] * n
        e[i] = 2 * d + (2 if i in A2 else 4 if i in A3 else 0)
        g_terms[tuple(e)] = _unit(rng)
    gammas = set()
    for _ in range(k2):
        eta = _draw(rng, lambda e: sum(e) > d and tuple(2 * x for x in e) not in gammas
                    and tuple(2 * x for x in e) not in g_terms,
                    lambda: _random_exponent(rng, n, d + 2))
        gam = tuple(2 * x for x in eta)
        gammas.add(gam)
        g_terms[gam] = _unit(rng)
    g = Polynomial(n, g_terms)
    d_g = g.degree // 2
    Bg = newton_basis(g.support(), n)
    doubled = {tuple(2 * x for x in b) for b in Bg}
    terms = dict(g_terms)
    used = set(terms)
    for _ in range(k3):
        a = _draw(rng, lambda e: e not in used, lambda: _random_exponent(rng, n, two_d))
        used.add(a)
        terms[a] = _sym(rng)
    elems = Bg.elements
    if k4:
        def pick():
            i, j = rng.integers(len(elems), size=2)
            return tuple(x + y for x, y in zip(elems[int(i)], elems[int(j)]))

        for _ in range(k4):
            b = _draw(rng, lambda e: sum(e) > two_d and e not in doubled and e not in used, pick)
            used.add(b)
            terms[b] = _unit(rng) if sum(b) == 2 * d_g else _sym(rng)
    betas = [e for e in terms if e not in g_terms and sum(e) > two_d]
    return Polynomial(n, terms), g, betas


def gen_randpoly3(spec: GenSpec, rng=None) -> Polynomial:
    """``s`` random terms in ``N^n_{2d}`` with at least one of top degree."""
    n, two_d, s = spec.n, spec.two_d, spec.s
    if s < 1:
        raise GeneratorError("s must be positive")
    if s > comb(n + two_d, n):
        raise GeneratorError("s exceeds the number of available exponents")
    rng = rng if rng is not None else make_rng(spec.seed)
    terms = {}
    # first term is the top-degree witness
    top = _draw(rng, lambda e: sum(e) == two_d, lambda: _random_exponent(rng, n, two_d))
    terms[top] = _sym(rng)
    while len(terms) < s:
        e = _draw(rng, lambda e: e not in terms, lambda: _random_exponent(rng, n, two_d))
        terms[e] = _sym(rng)
    return Polynomial(n, terms)


def generate(spec: GenSpec) -> Polynomial:
    if spec.family == "I":
        return gen_randpoly1(spec)
    if spec.family == "II":
        return gen_randpoly2(spec)
    if spec.family == "III":
        return gen_randpoly3(spec)
    raise GeneratorError(f"unknown family {spec.family!r}")


# -- experiment runner ----------------------------------------------------------------

CSV_COLUMNS = ["seed", "method", "mb", "bound", "time_total", "time_ip", "status"]


@dataclass
class ExperimentRow:
    seed: object
    method: str
    mb: object
    bound: float | None
    time_total: float
    time_ip: float
    status: str

    def as_list(self) -> list:
        bound = "" if self.bound is None else repr(self.bound)
        mb = self.mb if not isinstance(self.mb, tuple) else "(" + ",".join(map(str, self.mb)) + ")"
        return [self.seed, self.method, mb, bound, f"{self.time_total:.3f}", f"{self.time_ip:.3f}", self.status]


def ball(n: int, radius) -> Polynomial:
    r2 = as_fraction(radius) ** 2
    terms = {tuple([0] * n): r2}
    for i in range(n):
        e = [0] * n
        e[i] = 2
        terms[tuple(e)] = Fraction(-1)
    return Polynomial(n, terms)


def _method_kind(method: str) -> tuple:
    if method in ("t1", "t2", "t3"):
        return ("tssos", int(method[1]))
    if method in ("c1", "c2", "c3"):
        return ("chordal", int(method[1]))
    if method == "dense":
        return ("dense", 0)
    if method.startswith("rc"):
        return ("refined-chordal", [as_fraction(t) for t in method[2:].strip("()").split(",")])
    return ("refine", [as_fraction(t) for t in method.strip("()").split(",")])


def _solve_bound(sdp, solver: dict | None):
    from .sdp import solve_sdp

    if not solver:
        return None, "no-solver"
    rep = solve_sdp(sdp, solver.get("command"), solver.get("timeout", 5000.0))
    status = rep.status
    if status == "infeasible":
        status = "infeasible-relaxation"
    return rep.bound, status


def run_method(f: Polynomial, method: str, pop: Pop | None = None, d_hat: int | None = None,
               solver: dict | None = None, tie_break: str = "balanced") -> ExperimentRow:
    from .sdp import assemble_constrained, assemble_from_cliques, assemble_unconstrained

    kind, arg = _method_kind(method)
    t0 = time.monotonic()
    t_ip = 0.0
    if pop is None or pop.m == 0:
        if kind == "dense":
            basis = default_basis(f)
            blocks = BlockPartition.from_blocks([range(len(basis))])
            mb = len(basis)
            sdp = assemble_unconstrained(f, blocks, basis)
        elif kind == "tssos":
            basis = default_basis(f)
            run = run_tssos(f, arg, basis=basis)
            blocks = run[-1].blocks
            mb = blocks.width
            sdp = assemble_unconstrained(f, blocks, basis)
        elif kind == "chordal":
            basis = default_basis(f)
            cl = chordal_cliques(f, arg, basis)
            mb = max(len(c) for c in cl)
            sdp = assemble_from_cliques(f, cl, basis)
        elif kind == "refine":
            basis = default_basis(f)
            res = refine(f, RefineConfig.from_tau(arg[0], tie_break=tie_break), basis)
            t_ip = res.time_ip
            mb = res.width
            sdp = assemble_unconstrained(f, res.blocks, basis)
        else:
            basis = default_basis(f)
            res = refine(f, RefineConfig.from_tau(arg[0], tie_break=tie_break), basis)
            t_ip = res.time_ip
            g = support_graph(res.basis, res.support, within=res.blocks)
            _, cl = chordal_extension(g)
            mb = max(len(c) for c in cl)
            sdp = assemble_from_cliques(f, cl, basis)
    else:
        if kind == "dense":
            st = constrained_state_at(pop, d_hat, 0)
            parts = [BlockPartition.from_blocks([range(len(b))]) for b in st.bases]
            mb = tuple(p.width for p in parts)
            sdp = assemble_constrained(pop, d_hat, parts, st.bases)
        elif kind == "tssos":
            st = constrained_state_at(pop, d_hat, arg)
            mb = tuple(b.width for b in st.blocks)
            sdp = assemble_constrained(pop, d_hat, st.blocks, st.bases)
        elif kind in ("refine", "refined-chordal"):
            taus = arg if len(arg) == pop.m + 1 else [arg[0]] * (pop.m + 1)
            cfgs = [RefineConfig.from_tau(t, tie_break=tie_break) for t in taus]
            res = refine_constrained(pop, d_hat, cfgs)
            t_ip = sum(r.time_ip for r in res)
            bases = [r.basis for r in res]
            if kind == "refine":
                mb = tuple(r.width for r in res)
                sdp = assemble_constrained(pop, d_hat, [r.blocks for r in res], bases)
            else:
                cl = constrained_chordal_cliques(pop, d_hat, cfgs[0].k, res)
                mb = tuple(max(len(c) for c in cj) for cj in cl)
                sdp = assemble_from_cliques(f, cl[0], bases[0], pop, bases, cl)
        else:
            cl = constrained_chordal_cliques(pop, d_hat, arg)
            st = constrained_state_at(pop, d_hat, 0)
            mb = tuple(max(len(c) for c in cj) for cj in cl)
            sdp = assemble_from_cliques(f, cl[0], st.bases[0], pop, st.bases, cl)
    bound, status = _solve_bound(sdp, solver)
    return ExperimentRow(None, method, mb, bound, time.monotonic() - t0, t_ip, status)


def instances(config: dict) -> Iterable[tuple]:
    """Yield ``(seed_or_name, polynomial)`` pairs from a config."""
    if "polynomials" in config:
        n = int(config["n"])
        for name, text in config["polynomials"].items() if isinstance(config["polynomials"], dict) \
                else enumerate(config["polynomials"]):
            yield name, parse_polynomial(text, n)
        return
    gen = config["generator"]
    seeds = config.get("seeds", 0)
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    for seed in seed_list:
        spec = GenSpec(gen["family"], int(gen["n"]), int(gen["two_d"]), int(gen.get("s", 0)),
                       tuple(gen.get("k", ())), gen.get("min_nonzero"), gen.get("max_nonzero"), int(seed))
        yield seed, generate(spec)


def run_experiment(config: dict, out=None) -> list[ExperimentRow]:
    """Run every (instance, method) pair; failures are recorded per row."""
    methods = list(config.get("methods", []))
    solver = config.get("solver")
    d_hat = config.get("d_hat")
    cons = config.get("constraint")
    tie = config.get("tie_break", "balanced")
    rows = []
    if methods:
        for seed, f in instances(config):
            pop = None
            if cons:
                gs = []
                if isinstance(cons, str) and cons.startswith("ball"):
                    gs.append(ball(f.n, cons.split()[1]))
                elif cons:
                    gs.append(parse_polynomial(cons, f.n))
                pop = Pop(f, gs)
                if d_hat is None:
                    d_hat = pop.d
            for m in methods:
                try:
                    row = run_method(f, m, pop, d_hat, solver, tie)
                except Exception as exc:  # recorded, the run continues
                    row = ExperimentRow(None, m, "", None, 0.0, 0.0, f"error: {type(exc).__name__}: {exc}")
                row.seed = seed
                rows.append(row)
    rows.sort(key=lambda r: (str(r.seed), r.method))
    if out is not None:
        write_csv(rows, out)
    return rows


def write_csv(rows: Sequence[ExperimentRow], out) -> None:
    w = csv.writer(out)
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_list())


def rows_to_csv(rows: Sequence[ExperimentRow]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def accuracy_table(rows: Sequence[ExperimentRow], baseline: str, tols=(1e-1, 1e-2, 1e-3, 1e-4)) -> dict:
    """Fraction of instances with ``|theta_M - theta_B| / |theta_B| <= tol`` per method."""
    base = {r.seed: r.bound for r in rows if r.method == baseline and r.bound is not None}
    out = {}
    for m in sorted({r.method for r in rows}):
        hits = {t: 0 for t in tols}
        total = 0
        for r in rows:
            if r.method != m or r.seed not in base:
                continue
            total += 1
            if r.bound is None:
                continue
            rel = abs(r.bound - base[r.seed]) / max(abs(base[r.seed]), 1e-12)
            for t in tols:
                hits[t] += rel <= t
        out[m] = {t: (hits[t] / total if total else 0.0) for t in tols}
    return out


def load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
