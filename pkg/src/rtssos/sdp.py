"""Block moment SDPs: assembly, SDPA sparse export, and a subprocess solver contract.

Variables are the pseudo-moments ``y_alpha`` for ``alpha != 0``; ``y_0 = 1`` is
substituted into the constant matrices.  Written in SDPA form

    minimize  c^T y   subject to  sum_i F_i y_i - F_0  PSD,

so the bound of the relaxation is the reported objective plus ``f_0``.
"""

from __future__ import annotations

import json
import os
import re
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .graphs import BlockPartition
from .polycore import MonomialBasis, Polynomial, grlex_key
from .tssos import Pop


class SdpError(RuntimeError):
    pass


class StructureError(SdpError):
    """An objective exponent does not appear in any block."""


class SolverError(SdpError):
    pass


class SolverTimeout(SolverError):
    pass


@dataclass
class SdpBlock:
    kind: str  # "moment" | "localizing"
    j: int
    rows: list  # basis exponents labelling rows/columns
    entries: dict  # (r, c) with r <= c -> {alpha: coefficient}

    @property
    def size(self) -> int:
        return len(self.rows)


@dataclass
class MomentSdp:
    n: int
    y_index: dict  # alpha -> 1-based variable id (alpha != 0)
    blocks: list
    objective: dict  # alpha -> coefficient, alpha != 0
    constant: Fraction = Fraction(0)

    @property
    def n_vars(self) -> int:
        return len(self.y_index)

    def block_sizes(self) -> list:
        return [b.size for b in self.blocks]

    @property
    def mb(self) -> int:
        return max((b.size for b in self.blocks), default=0)


def _zero(n: int) -> tuple:
    return tuple([0] * n)


def _finish(n: int, blocks: list, f: Polynomial) -> MomentSdp:
    zero = _zero(n)
    used = set()
    for b in blocks:
        for form in b.entries.values():
            used.update(form)
    used.discard(zero)
    missing = [a for a in f.terms if a != zero and a not in used]
    if missing:
        raise StructureError(f"objective exponent {missing[0]} is not covered by any block")
    ids = {a: i + 1 for i, a in enumerate(sorted(used, key=grlex_key))}
    obj = {a: c for a, c in f.terms.items() if a != zero}
    return MomentSdp(n, ids, blocks, obj, f.terms.get(zero, Fraction(0)))


def _block(kind: str, j: int, rows: Sequence, g: Polynomial | None) -> SdpBlock:
    entries = {}
    for r in range(len(rows)):
        for c in range(r, len(rows)):
            s = tuple(a + b for a, b in zip(rows[r], rows[c]))
            if g is None:
                form = {s: Fraction(1)}
            else:
                form = {}
                for gam, coef in g.terms.items():
                    key = tuple(a + b for a, b in zip(s, gam))
                    form[key] = form.get(key, Fraction(0)) + coef
            entries[(r, c)] = form
    return SdpBlock(kind, j, list(rows), entries)


def assemble_unconstrained(f: Polynomial, blocks: BlockPartition, basis: MonomialBasis) -> MomentSdp:
    """One PSD block per partition block with entries ``y_{beta+gamma}``."""
    if f.is_zero():
        from .polycore import ZeroPolynomialError
        raise ZeroPolynomialError("zero objective")
    out = [_block("moment", 0, [basis[i] for i in blk], None) for blk in _ordered(blocks)]
    return _finish(f.n, out, f)


def assemble_from_cliques(f: Polynomial, cliques: Sequence[Sequence[int]], basis: MonomialBasis,
                          pop: Pop | None = None, bases: Sequence[MonomialBasis] | None = None,
                          cliques_j: Sequence | None = None) -> MomentSdp:
    """Possibly overlapping blocks; shared moments tie them together.

    For a constrained problem pass ``pop`` plus per-j ``bases`` and ``cliques_j``
    (``cliques`` then refers to j = 0).
    """
    out = [_block("moment", 0, [basis[i] for i in c], None) for c in _ordered_lists(cliques)]
    if pop is not None:
        for j in range(1, pop.m + 1):
            for c in _ordered_lists(cliques_j[j]):
                out.append(_block("localizing", j, [bases[j][i] for i in c], pop.g(j)))
    return _finish(f.n, out, f)


def assemble_constrained(pop: Pop, d_hat: int, partitions: Sequence[BlockPartition],
                         bases: Sequence[MonomialBasis]) -> MomentSdp:
    """Moment blocks (j = 0) and localizing blocks ``g_j * y`` (j >= 1)."""
    if len(partitions) != pop.m + 1:
        raise ValueError("need one partition per j = 0..m")
    out = []
    for j, part in enumerate(partitions):
        g = None if j == 0 else pop.g(j)
        kind = "moment" if j == 0 else "localizing"
        for blk in _ordered(part):
            out.append(_block(kind, j, [bases[j][i] for i in blk], g))
    return _finish(pop.n, out, pop.objective)


def _ordered(part: BlockPartition) -> list:
    return sorted(part.blocks, key=lambda b: (-len(b), b[0]))


def _ordered_lists(cl) -> list:
    return sorted((tuple(c) for c in cl), key=lambda b: (-len(b), b))


# -- SDPA sparse format -----------------------------------------------------------

def _num(x) -> str:
    return format(float(x), ".17g")


def write_sdpa(sdp: MomentSdp, path) -> None:
    zero = _zero(sdp.n)
    lines = [f'"moment relaxation: {sdp.n_vars} moments, {len(sdp.blocks)} blocks, constant {_num(sdp.constant)}"']
    lines.append(str(sdp.n_vars))
    lines.append(str(len(sdp.blocks)))
    lines.append(" ".join(str(-1 if b.size == 1 else b.size) for b in sdp.blocks))
    c = [Fraction(0)] * sdp.n_vars
    for a, coef in sdp.objective.items():
        c[sdp.y_index[a] - 1] = coef
    lines.append(" ".join(_num(v) for v in c) if c else "")
    rec = []
    for bno, b in enumerate(sdp.blocks, start=1):
        for (r, col), form in b.entries.items():
            for a, coef in form.items():
                if coef == 0:
                    continue
                if a == zero:
                    # sum F_i y_i - F_0 with y_0 = 1 moves the constant to -F_0
                    rec.append((0, bno, r + 1, col + 1, -coef))
                else:
                    rec.append((sdp.y_index[a], bno, r + 1, col + 1, coef))
    rec.sort(key=lambda t: (t[0], t[1], t[2], t[3]))
    for m, bno, r, col, v in rec:
        lines.append(f"{m} {bno} {r} {col} {_num(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path) -> dict:
    """Parse an SDPA sparse file into ``{m, sizes, c, entries}``."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh]
    data = [ln for ln in raw if ln and ln[0] not in '"*']
    toks = lambda s: [t for t in re.split(r"[\s,{}()]+", s) if t]
    m = int(toks(data[0])[0])
    nb = int(toks(data[1])[0])
    sizes = [int(t) for t in toks(data[2])[:nb]]
    rest = 3
    c = []
    while len(c) < m:
        c.extend(float(t) for t in toks(data[rest]))
        rest += 1
    entries = []
    for ln in data[rest:]:
        t = toks(ln)
        entries.append((int(t[0]), int(t[1]), int(t[2]), int(t[3]), float(t[4])))
    return {"m": m, "sizes": sizes, "c": c[:m], "entries": entries}


# -- solver contract -----------------------------------------------------------------

SOLVER_ENV = "RTSSOS_SDP_SOLVER"
DEFAULT_TIMEOUT = 5000.0


@dataclass
class SolverResult:
    status: str  # optimal | infeasible | timeout | failed | no-solver
    primal: float | None = None
    dual: float | None = None
    time: float = 0.0
    raw: str = ""

    @property
    def objective(self) -> float | None:
        vals = [v for v in (self.primal, self.dual) if v is not None]
        if not vals:
            return None
        return vals[0] if len(vals) == 1 else 0.5 * (vals[0] + vals[1])


def default_command() -> str:
    return f"{shlex.quote(sys.executable)} -m rtssos.sdpa_solve {{input}} {{output}}"


def solver_command(cfg_command: str | None = None) -> str:
    return cfg_command or os.environ.get(SOLVER_ENV) or default_command()


_FLOAT = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"


def parse_solver_output(text: str) -> SolverResult:
    """Understands SDPA (``objValPrimal``/``phase.value``) and CSDP style reports."""
    m_phase = re.search(r"phase\.value\s*=\s*(\w+)", text)
    m_p = re.search(r"objValPrimal\s*=\s*" + _FLOAT, text)
    m_d = re.search(r"objValDual\s*=\s*" + _FLOAT, text)
    if m_phase or m_p:
        phase = m_phase.group(1) if m_phase else ""
        if phase == "pdOPT":
            status = "optimal"
        elif phase == "pdFEAS":
            status = "inaccurate"
        elif phase in ("pINF_dFEAS", "pdINF", "pINF", "pFEAS_dINF", "dINF"):
            status = "infeasible"
        elif phase.lower() in ("timeout", "noinfo") and "timeout" in text.lower():
            status = "timeout"
        else:
            status = "failed" if phase else "optimal"
        return SolverResult(status, float(m_p.group(1)) if m_p else None,
                            float(m_d.group(1)) if m_d else None, raw=text)
    # CSDP reads the same file; its "dual" is the SDPA minimization side.
    c_p = re.search(r"Primal objective value:\s*" + _FLOAT, text)
    c_d = re.search(r"Dual objective value:\s*" + _FLOAT, text)
    if c_p or c_d:
        if re.search(r"Success", text):
            status = "optimal"
        elif re.search(r"infeasib", text, re.I):
            status = "infeasible"
        else:
            status = "failed"
        return SolverResult(status, float(c_d.group(1)) if c_d else None,
                            float(c_p.group(1)) if c_p else None, raw=text)
    return SolverResult("failed", raw=text)


def run_solver(path, command: str | None = None, timeout: float = DEFAULT_TIMEOUT) -> SolverResult:
    """Run ``command`` (template with ``{input}`` / ``{output}``) on an SDPA file."""
    cmd_t = solver_command(command)
    with tempfile.TemporaryDirectory() as tmp:
        out_path = os.path.join(tmp, "result.out")
        cmd = [part.format(input=str(path), output=out_path) for part in shlex.split(cmd_t)]
        t0 = time.monotonic()
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout, cwd=tmp)
        except FileNotFoundError as exc:
            raise SolverError(f"solver binary not found: {cmd[0]}") from exc
        except subprocess.TimeoutExpired:
            return SolverResult("timeout", time=time.monotonic() - t0)
        elapsed = time.monotonic() - t0
        text = proc.stdout
        if os.path.exists(out_path):
            with open(out_path) as fh:
                text = fh.read() + "\n" + text
    res = parse_solver_output(text)
    res.time = elapsed
    if res.status == "failed" and proc.returncode != 0 and not res.raw.strip():
        raise SolverError(proc.stderr.strip() or f"solver exited with code {proc.returncode}")
    return res


@dataclass
class BoundReport:
    bound: float | None
    status: str
    time: float
    mb: int

    def to_json(self) -> dict:
        return {"bound": self.bound, "status": self.status, "time": self.time, "mb": self.mb}


def solve_sdp(sdp: MomentSdp, command: str | None = None, timeout: float = DEFAULT_TIMEOUT,
              keep: str | None = None) -> BoundReport:
    """Write, solve, and translate the objective back to a bound on ``f``."""
    with tempfile.TemporaryDirectory() as tmp:
        path = keep or os.path.join(tmp, "relax.dat-s")
        write_sdpa(sdp, path)
        res = run_solver(path, command, timeout)
    bound = None
    if res.status in ("optimal", "inaccurate") and res.objective is not None:
        bound = res.objective + float(sdp.constant)
    return BoundReport(bound, res.status, res.time, sdp.mb)


def dump_partition(basis: MonomialBasis, blocks: BlockPartition) -> str:
    """JSON list of blocks of exponents, sorted by size (desc) then smallest element."""
    out = []
    for blk in blocks.blocks:
        exps = sorted((list(basis[i]) for i in blk), key=grlex_key)
        out.append(exps)
    out.sort(key=lambda b: (-len(b), grlex_key(b[0])))
    return json.dumps(out)
