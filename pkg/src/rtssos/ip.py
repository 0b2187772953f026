"""Width-minimizing 0/1 programs over groups of parity classes.

Groups ``0..r_p-1`` carry weights ``|I_i|``.  Variables ``y_ij`` (i < j) exist
only inside connected components of the closed compressed matrix; a value of
one puts the two groups in the same block.  Constraint families:

* transitivity ``y_ik + y_kj - y_ij <= 1`` (handled structurally by searching
  over set partitions),
* width ``sum_k |I_k| Y_ik <= w`` for every group,
* coverage ``sum_ij K_ij Y_ij >= eps * sum_ij K_ij`` for every exponent.
"""

from __future__ import annotations

import itertools
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil
from typing import Sequence

from .graphs import UnionFind


class IPError(RuntimeError):
    pass


class IPInfeasible(IPError):
    pass


@dataclass(frozen=True)
class LinearConstraint:
    coeffs: tuple  # ((var, Fraction), ...) without zeros
    sense: str  # "<=", ">=", "="
    rhs: Fraction
    name: str = ""

    @classmethod
    def build(cls, coeffs: dict, sense: str, rhs, name: str = "") -> "LinearConstraint":
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"bad sense {sense!r}")
        items = tuple((v, Fraction(c)) for v, c in coeffs.items() if c != 0)
        return cls(items, sense, Fraction(rhs), name)

    def holds(self, values: dict) -> bool:
        lhs = sum((c * values[v] for v, c in self.coeffs), Fraction(0))
        if self.sense == "<=":
            return lhs <= self.rhs
        if self.sense == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs


@dataclass(frozen=True)
class CoverRow:
    """One coverage constraint: ``sum c_ij y_ij + const >= eps * total``.

    ``coeffs`` holds ``K_ij + K_ji`` per unordered group pair and ``const``
    the diagonal part ``sum_i K_ii``; both count ordered basis pairs.
    """

    coeffs: tuple  # (((i, j), int), ...)
    const: int
    total: int
    label: object = None

    def need(self, eps: Fraction) -> Fraction:
        return eps * self.total - self.const


@dataclass
class IPProblem:
    sizes: tuple
    components: tuple
    rows: tuple
    eps: Fraction
    labels: tuple | None = None

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.components = tuple(tuple(sorted(c)) for c in self.components)
        self.eps = Fraction(self.eps)
        seen = sorted(g for c in self.components for g in c)
        if seen != list(range(len(self.sizes))):
            raise ValueError("components must partition the groups")
        comp_of = self.comp_of()
        rows = []
        for row in self.rows:
            for (i, j), _ in row.coeffs:
                if i >= j or comp_of[i] != comp_of[j]:
                    raise ValueError(f"coverage pair ({i}, {j}) is not a variable")
            rows.append(row)
        self.rows = tuple(rows)

    @property
    def r_p(self) -> int:
        return len(self.sizes)

    def comp_of(self) -> dict:
        return {g: c for c, comp in enumerate(self.components) for g in comp}

    @property
    def var_pairs(self) -> list:
        return [(a, b) for comp in self.components for a, b in itertools.combinations(comp, 2)]

    def constraints(self) -> list[LinearConstraint]:
        """Explicit C1/C2/C3 rows over variables ``("y", i, j)`` and ``"w"``."""
        out = []

        def y(a, b):
            return ("y", min(a, b), max(a, b))

        for comp in self.components:
            for a, b, c in itertools.combinations(comp, 3):
                out.append(LinearConstraint.build({y(a, b): 1, y(b, c): 1, y(a, c): -1}, "<=", 1, f"t_{a}_{b}_{c}_a"))
                out.append(LinearConstraint.build({y(a, b): 1, y(a, c): 1, y(b, c): -1}, "<=", 1, f"t_{a}_{b}_{c}_b"))
                out.append(LinearConstraint.build({y(a, c): 1, y(b, c): 1, y(a, b): -1}, "<=", 1, f"t_{a}_{b}_{c}_c"))
        for comp in self.components:
            if len(comp) < 2:
                continue
            for i in comp:
                co = {y(i, k): self.sizes[k] for k in comp if k != i}
                co["w"] = -1
                out.append(LinearConstraint.build(co, "<=", -self.sizes[i], f"w_{i}"))
        for t, row in enumerate(self.rows):
            co = {y(i, j): c for (i, j), c in row.coeffs}
            out.append(LinearConstraint.build(co, ">=", row.need(self.eps), f"c_{t}"))
        return out

    def n_constraints(self) -> int:
        return len(self.constraints())


@dataclass
class SolveStats:
    nodes: int = 0
    time: float = 0.0
    status: str = "optimal"  # optimal | timeout | infeasible
    tie_break_complete: bool = True


@dataclass
class IPSolution:
    omega: int
    y: dict
    blocks: list  # lists of group indices
    stats: SolveStats = field(default_factory=SolveStats)

    def merged(self):
        from .graphs import BlockPartition
        return BlockPartition.from_blocks(self.blocks)


TIE_BREAKS = ("balanced", "fewest")


def _blocks_from_y(n: int, y: dict) -> list:
    uf = UnionFind(n)
    for (i, j), v in y.items():
        if v:
            uf.union(i, j)
    return uf.groups()


def _y_from_blocks(p: IPProblem, blocks) -> dict:
    owner = {g: b for b, blk in enumerate(blocks) for g in blk}
    return {(i, j): int(owner[i] == owner[j]) for i, j in p.var_pairs}


def solution_width(p: IPProblem, blocks) -> int:
    return max((sum(p.sizes[g] for g in b) for b in blocks), default=0)


def check_solution(p: IPProblem, y: dict, omega: int) -> bool:
    """Exact check of all C1/C2/C3 rows."""
    vals = {("y", i, j): v for (i, j), v in y.items()}
    vals["w"] = omega
    return all(c.holds(vals) for c in p.constraints())


def _tie_key(mode: str, p: IPProblem, blocks, omega: int, pairs) -> tuple:
    owner = {g: b for b, blk in enumerate(blocks) for g in blk}
    yv = tuple(int(owner[i] == owner[j]) for i, j in pairs)
    if mode == "fewest":
        return (sum(yv), yv)
    # smallest sum of squared block weights, where each merge earns a credit
    # of 2 (so joining two weight-1 groups is free), then earliest pairs merged
    sq = sum(sum(p.sizes[g] for g in b) ** 2 for b in blocks)
    unions = sum(len(b) - 1 for b in blocks)
    return (sq - 2 * unions, tuple(-v for v in yv))


class _Search:
    """Depth-first set-partition search for one independent subproblem."""

    def __init__(self, p: IPProblem, groups: list, rows: list, deadline: float, node_cap: int):
        self.p = p
        self.groups = groups
        self.pos = {g: t for t, g in enumerate(groups)}
        self.comp_of = p.comp_of()
        self.rows = rows
        # coverage counts are integers, so compare against the ceiling
        self.need = [ceil(row.need(p.eps)) for row in rows]
        # for every group, the row entries that become decided once it is placed
        self.touch = {g: [] for g in groups}
        for r, row in enumerate(rows):
            for (i, j), c in row.coeffs:
                last = i if self.pos[i] > self.pos[j] else j
                other = j if last == i else i
                self.touch[last].append((r, other, c))
        self.remaining = [[0] * len(rows) for _ in range(len(groups) + 1)]
        for t in range(len(groups) - 1, -1, -1):
            self.remaining[t] = list(self.remaining[t + 1])
            for r, _, c in self.touch[groups[t]]:
                self.remaining[t][r] += c
        self.max_rest = [0] * (len(groups) + 1)
        for t in range(len(groups) - 1, -1, -1):
            self.max_rest[t] = max(self.max_rest[t + 1], p.sizes[groups[t]])
        self.rest_sq = [0] * (len(groups) + 1)
        for t in range(len(groups) - 1, -1, -1):
            self.rest_sq[t] = self.rest_sq[t + 1] + p.sizes[groups[t]] ** 2
        self.deadline = deadline
        self.node_cap = node_cap
        self.nodes = 0
        self.timed_out = False
        # phase-2 pruning: partial tie key is monotone along a search path
        self.key_mode = None
        self.key_best = None

    def _expired(self) -> bool:
        self.nodes += 1
        if self.nodes % 256 == 0 and time.monotonic() > self.deadline:
            self.timed_out = True
        if self.nodes > self.node_cap:
            self.timed_out = True
        return self.timed_out

    def run(self, cap: int, visit, new_first: bool = False) -> None:
        """Enumerate partitions with block weights <= cap satisfying coverage.

        ``visit(blocks, width)`` is called on each complete assignment; it may
        return a new (tighter) cap.  ``new_first`` tries opening a block before
        joining existing ones, which finds narrow partitions early.
        """
        groups = self.groups
        p = self.p
        assign = {}
        blocks: list = []
        weights: list = []
        bcomp: list = []
        covered = [0] * len(self.rows)
        need = self.need
        nrows = len(self.rows)
        self.cap = cap

        def rec(t: int, cur_max: int, key: int):
            if self.timed_out or self._expired():
                return
            if t == len(groups):
                new = visit([list(b) for b in blocks], cur_max)
                if new is not None:
                    self.cap = new
                return
            g = groups[t]
            s = p.sizes[g]
            comp = self.comp_of[g]
            options = [b for b in range(len(blocks)) if bcomp[b] == comp]
            options = [len(blocks)] + options if new_first else options + [len(blocks)]
            rem = self.remaining[t + 1]
            for b in options:
                new_block = b == len(blocks)
                w = s if new_block else weights[b] + s
                if w > self.cap:
                    continue
                if self.key_mode == "balanced":
                    nk = key + (s * s if new_block else 2 * weights[b] * s + s * s - 2)
                    if self.key_best is not None and nk + self.rest_sq[t + 1] > self.key_best:
                        continue
                elif self.key_mode == "fewest":
                    nk = key + (0 if new_block else len(blocks[b]))
                    if self.key_best is not None and nk > self.key_best:
                        continue
                else:
                    nk = key
                if new_block:
                    blocks.append([g])
                    weights.append(s)
                    bcomp.append(comp)
                else:
                    blocks[b].append(g)
                    weights[b] = w
                assign[g] = b
                gained = []
                for r, other, c in self.touch[g]:
                    if assign[other] == b:
                        covered[r] += c
                        gained.append((r, c))
                if all(covered[r] + rem[r] >= need[r] for r in range(nrows)):
                    rec(t + 1, max(cur_max, w), nk)
                for r, c in gained:
                    covered[r] -= c
                del assign[g]
                if new_block:
                    blocks.pop()
                    weights.pop()
                    bcomp.pop()
                else:
                    blocks[b].pop()
                    weights[b] -= s
                if self.timed_out:
                    return

        rec(0, 0, 0)


def _rowless_blocks(p: IPProblem, groups: list, omega: int, tie_break: str) -> list:
    """Tie-break optimum for a cluster without coverage rows.

    Merging two groups of weights a, b changes the balanced key by 2ab - 2,
    which is zero only for two weight-1 groups; the lexicographic rule then
    pairs consecutive weight-1 groups of each component.
    """
    if tie_break == "fewest" or omega < 2:
        return [[g] for g in groups]
    comp_of = p.comp_of()
    out, pending = [], {}
    for g in groups:
        if p.sizes[g] != 1:
            out.append([g])
            continue
        c = comp_of[g]
        if c in pending:
            out.append([pending.pop(c), g])
        else:
            pending[c] = g
    out.extend([g] for g in pending.values())
    return out


def _subproblems(p: IPProblem) -> list:
    """Split components into independent clusters (no shared coverage row)."""
    nc = len(p.components)
    uf = UnionFind(nc)
    comp_of = p.comp_of()
    row_groups = []
    for row in p.rows:
        comps = sorted({comp_of[i] for (i, j), _ in row.coeffs})
        for a in comps[1:]:
            uf.union(comps[0], a)
        row_groups.append(comps[0] if comps else None)
    out = []
    for cl in uf.groups():
        groups = [g for c in cl for g in p.components[c]]
        rep = uf.find(cl[0])
        rows = [row for row, c in zip(p.rows, row_groups) if c is not None and uf.find(c) == rep]
        out.append((sorted(groups), rows))
    return out


def solve_ip(p: IPProblem, budget: float = 60.0, tie_break: str = "balanced",
             node_cap: int = 5_000_000, tie_node_cap: int = 2_000_000) -> IPSolution:
    """Exact minimum width, then the tie-break among width-optimal partitions."""
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"unknown tie-break {tie_break!r}")
    t0 = time.monotonic()
    deadline = t0 + budget
    stats = SolveStats()
    for row in p.rows:
        if sum(c for _, c in row.coeffs) < row.need(p.eps):
            stats.status = "infeasible"
            raise IPInfeasible("coverage row cannot be met even by a full merge")
    parts = _subproblems(p)
    lone = max(p.sizes, default=0)

    # phase 1: minimum width per cluster; overall width is their maximum
    chosen = []
    omega = lone
    for groups, rows in parts:
        if len(groups) == 1 or not rows:
            # without coverage rows all singletons is feasible
            chosen.append((groups, rows, [[g] for g in groups]))
            continue
        best = {"blocks": None, "w": None}
        srch = _Search(p, groups, rows, deadline, node_cap)

        def visit(blocks, w, best=best):
            if best["w"] is None or w < best["w"]:
                best["w"], best["blocks"] = w, blocks
                # a cluster narrower than the current overall width gains nothing
                return 0 if w <= omega else w - 1
            return None

        full = sum(p.sizes[g] for g in groups)
        srch.run(full, visit, new_first=True)
        stats.nodes += srch.nodes
        if best["blocks"] is None:
            if srch.timed_out:
                stats.status = "timeout"
                best["blocks"] = [[g for g in groups]]
                best["w"] = full
            else:
                raise IPInfeasible("no feasible partition found")
        if srch.timed_out:
            stats.status = "timeout"
        omega = max(omega, best["w"])
        chosen.append((groups, rows, best["blocks"]))

    # phase 2: tie-break at the global optimum width
    final_blocks = []
    for groups, rows, blocks in chosen:
        if len(groups) == 1 or stats.status == "timeout":
            final_blocks.extend(blocks)
            continue
        if not rows:
            final_blocks.extend(_rowless_blocks(p, groups, omega, tie_break))
            continue
        gset = set(groups)
        pairs = [(i, j) for i, j in p.var_pairs if i in gset]
        best = {"key": _tie_key(tie_break, p, blocks, omega, pairs), "blocks": blocks}
        srch = _Search(p, groups, rows, deadline, tie_node_cap)
        srch.key_mode = tie_break
        srch.key_best = best["key"][0]

        def visit(bl, w, best=best, pairs=pairs, srch=srch):
            k = _tie_key(tie_break, p, bl, omega, pairs)
            if k < best["key"]:
                best["key"], best["blocks"] = k, bl
                srch.key_best = k[0]
            return None

        srch.run(omega, visit)
        stats.nodes += srch.nodes
        if srch.timed_out:
            stats.tie_break_complete = False
        final_blocks.extend(best["blocks"])

    final_blocks = sorted((sorted(b) for b in final_blocks), key=lambda b: b[0])
    y = _y_from_blocks(p, final_blocks)
    stats.time = time.monotonic() - t0
    sol = IPSolution(solution_width(p, final_blocks), y, final_blocks, stats)
    if stats.status == "optimal" and not check_solution(p, y, sol.omega):
        raise IPError("internal error: solution violates a constraint")
    return sol


# -- oracle ---------------------------------------------------------------------

def _set_partitions(items: Sequence):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def brute_force_width(p: IPProblem, cap: int = 12) -> int:
    """Exhaustive minimum over all partitions of every component."""
    if p.r_p > cap:
        raise ValueError(f"{p.r_p} groups exceeds oracle cap {cap}")
    best = None
    per_comp = [list(_set_partitions(list(c))) for c in p.components]
    for combo in itertools.product(*per_comp):
        blocks = [b for part in combo for b in part]
        owner = {g: k for k, b in enumerate(blocks) for g in b}
        ok = True
        for row in p.rows:
            got = sum(c for (i, j), c in row.coeffs if owner[i] == owner[j])
            if got < row.need(p.eps):
                ok = False
                break
        if ok:
            w = max(sum(p.sizes[g] for g in b) for b in blocks)
            if best is None or w < best:
                best = w
    if best is None:
        raise IPInfeasible("no feasible partition")
    return best


# -- LP file export and external solver fallback ------------------------------

def _var_name(v) -> str:
    return "w" if v == "w" else f"y_{v[1]}_{v[2]}"


def _fmt_num(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return repr(float(c))


def export_lp(p: IPProblem, path) -> None:
    """Write the program in CPLEX LP format."""
    lines = ["\\ width-minimizing partition program", "Minimize", " obj: w", "Subject To"]
    for c in p.constraints():
        terms = []
        for v, a in c.coeffs:
            sign = "-" if a < 0 else "+"
            mag = abs(a)
            coef = "" if mag == 1 else _fmt_num(mag) + " "
            terms.append(f"{sign} {coef}{_var_name(v)}")
        lhs = " ".join(terms).lstrip("+ ").strip() if terms else "0 w"
        lines.append(f" {c.name}: {lhs} {c.sense} {_fmt_num(c.rhs)}")
    lines.append("Bounds")
    lines.append(f" {max(p.sizes, default=0)} <= w <= {sum(p.sizes)}")
    pairs = p.var_pairs
    if pairs:
        lines.append("Binary")
        for i, j in pairs:
            lines.append(f" y_{i}_{j}")
    lines.append("General")
    lines.append(" w")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


MILP_ENV = "RTSSOS_MILP"


def solve_external(p: IPProblem, command: str | None = None, timeout: float = 600.0) -> IPSolution:
    """Solve through an external MILP binary.

    ``command`` (or ``$RTSSOS_MILP``) is a template with ``{lp}`` and ``{sol}``
    placeholders; the solution file is read as ``name value`` lines.
    """
    command = command or os.environ.get(MILP_ENV)
    if not command:
        raise IPError(f"no external MILP command configured (set {MILP_ENV})")
    with tempfile.TemporaryDirectory() as tmp:
        lp = os.path.join(tmp, "ip.lp")
        sol = os.path.join(tmp, "ip.sol")
        export_lp(p, lp)
        t0 = time.monotonic()
        cmd = [part.format(lp=lp, sol=sol) for part in shlex.split(command)]
        subprocess.run(cmd, check=True, timeout=timeout, capture_output=True)
        values = {}
        with open(sol) as fh:
            for line in fh:
                bits = line.split()
                if len(bits) >= 2 and bits[0].startswith("y_"):
                    try:
                        values[bits[0]] = round(float(bits[1]))
                    except ValueError:
                        continue
    y = {(i, j): int(values.get(f"y_{i}_{j}", 0)) for i, j in p.var_pairs}
    blocks = _blocks_from_y(p.r_p, y)
    y = _y_from_blocks(p, blocks)
    return IPSolution(solution_width(p, blocks), y, blocks,
                      SolveStats(0, time.monotonic() - t0, "optimal"))
