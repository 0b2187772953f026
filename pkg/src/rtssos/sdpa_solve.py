"""Solve an SDPA sparse file with Clarabel and report in SDPA's output style.

Usage: ``python -m rtssos.sdpa_solve INPUT.dat-s [OUTPUT] [--backend auto|clarabel|scs]``

Clarabel (interior point) is used when every PSD block is small enough for
its dense per-cone scaling; larger blocks go to SCS (first order, lower
accuracy, modest memory).

This is the default solver behind the subprocess contract; any SDPA-format
solver (sdpa, csdp) can be swapped in through ``RTSSOS_SDP_SOLVER``.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

SQRT2 = math.sqrt(2.0)


CLARABEL_MAX_BLOCK = 120


def _tri_upper(i: int, j: int, s: int) -> int:
    """Position of (i, j), i <= j, in the column-wise packed upper triangle."""
    return j * (j + 1) // 2 + i


def _tri_lower(i: int, j: int, s: int) -> int:
    """Position of (j, i), i <= j, in the column-wise packed lower triangle."""
    return i * s - i * (i - 1) // 2 + (j - i)


def build_problem(data: dict, packing=_tri_upper):
    """Return ``(q, A, b, cone_dims)`` for ``min c.y  s.t.  A y + s = b, s in K``.

    Each block ``sum_k F_k y_k - F_0`` becomes ``s = b - A y`` with
    ``A = -svec(F_k)`` and ``b = -svec(F_0)``. ``cone_dims`` lists
    ``("l", dim)`` or ``("s", size)`` in block order.
    """
    import scipy.sparse as sp

    m = data["m"]
    per_block: dict = {}
    for mat, blk, i, j, v in data["entries"]:
        per_block.setdefault(blk, []).append((mat, i - 1, j - 1, v))
    rows, cols, vals = [], [], []
    b_parts = []
    cones = []
    offset = 0
    for bno, size in enumerate(data["sizes"], start=1):
        s = abs(size)
        diag = size < 0 or s == 1
        dim = s if diag else s * (s + 1) // 2
        b = np.zeros(dim)
        for mat, i, j, v in per_block.get(bno, []):
            if i > j:
                i, j = j, i
            if diag:
                if i != j:
                    continue
                pos, scale = i, 1.0
            else:
                pos, scale = packing(i, j, s), (1.0 if i == j else SQRT2)
            if mat == 0:
                b[pos] -= scale * v
            else:
                rows.append(offset + pos)
                cols.append(mat - 1)
                vals.append(-scale * v)
        b_parts.append(b)
        cones.append(("l", dim) if diag else ("s", s))
        offset += dim
    A = sp.csc_matrix((vals, (rows, cols)), shape=(offset, m))
    q = np.asarray(data["c"], dtype=float)
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    return q, A, b, cones


_PHASE = {
    "Solved": "pdOPT",
    "AlmostSolved": "pdFEAS",
    "PrimalInfeasible": "pINF_dFEAS",
    "AlmostPrimalInfeasible": "pINF_dFEAS",
    "DualInfeasible": "pFEAS_dINF",
    "AlmostDualInfeasible": "pFEAS_dINF",
}


def _solve_clarabel(data: dict, time_limit):
    import clarabel
    import scipy.sparse as sp

    q, A, b, dims = build_problem(data, _tri_upper)
    cones = [clarabel.NonnegativeConeT(d) if kind == "l" else clarabel.PSDTriangleConeT(d) for kind, d in dims]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = 400
    if time_limit:
        settings.time_limit = float(time_limit)
    sol = clarabel.DefaultSolver(sp.csc_matrix((len(q), len(q))), q, A, b, cones, settings).solve()
    status = str(sol.status).split(".")[-1]
    phase = _PHASE.get(status, "noINFO")
    return phase, status, sol.obj_val, sol.obj_val_dual


_SCS_PHASE = {
    "solved": "pdOPT",
    "solved_inaccurate": "pdFEAS",
    "infeasible": "pINF_dFEAS",
    "infeasible_inaccurate": "pINF_dFEAS",
    "unbounded": "pFEAS_dINF",
    "unbounded_inaccurate": "pFEAS_dINF",
}


def _solve_scs(data: dict, time_limit):
    import scs

    q, A, b, dims = build_problem(data, _tri_lower)
    # scs expects all nonnegative rows before the PSD rows
    order, l_dim, s_sizes, offset = [], 0, [], 0
    spans = []
    for kind, d in dims:
        width = d if kind == "l" else d * (d + 1) // 2
        spans.append((kind, offset, width, d))
        offset += width
    for kind, off, width, _ in spans:
        if kind == "l":
            order.extend(range(off, off + width))
            l_dim += width
    for kind, off, width, d in spans:
        if kind == "s":
            order.extend(range(off, off + width))
            s_sizes.append(d)
    A = A[order, :].tocsc()
    b = b[order]
    cone = {"l": l_dim, "s": s_sizes}
    kw = {"verbose": False, "eps_abs": 1e-7, "eps_rel": 1e-7, "max_iters": 200000}
    if time_limit:
        kw["time_limit_secs"] = float(time_limit)
    sol = scs.SCS({"A": A, "b": b, "c": q}, cone, **kw).solve()
    status = sol["info"]["status"]
    phase = _SCS_PHASE.get(status, "noINFO")
    return phase, status, sol["info"]["pobj"], sol["info"]["dobj"]


def choose_backend(data: dict) -> str:
    big = max((abs(s) for s in data["sizes"] if s > 0), default=0)
    return "clarabel" if big <= CLARABEL_MAX_BLOCK else "scs"


def solve_file(path: str, time_limit: float | None = None, backend: str = "auto") -> str:
    from .sdp import read_sdpa

    data = read_sdpa(path)
    if backend == "auto":
        backend = choose_backend(data)
    t0 = time.monotonic()
    if backend == "clarabel":
        phase, status, pobj, dobj = _solve_clarabel(data, time_limit)
    elif backend == "scs":
        phase, status, pobj, dobj = _solve_scs(data, time_limit)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    elapsed = time.monotonic() - t0
    lines = [f"phase.value = {phase}", f"* {backend} status = {status}"]
    if "time" in status.lower() or "MaxTime" in status:
        lines.append("* timeout reached")
    if phase in ("pdOPT", "pdFEAS") and np.isfinite(pobj):
        lines.append(f"objValPrimal = {pobj:.17g}")
        lines.append(f"objValDual = {dobj:.17g}")
    lines.append(f"* total time = {elapsed:.3f}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="rtssos.sdpa_solve")
    ap.add_argument("input")
    ap.add_argument("output", nargs="?")
    ap.add_argument("--time-limit", type=float, default=None)
    ap.add_argument("--backend", choices=("auto", "clarabel", "scs"), default="auto")
    args = ap.parse_args(argv)
    text = solve_file(args.input, args.time_limit, args.backend)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
