"""Command-line entry point: ``rtssos relax | bench | trace``."""

from __future__ import annotations

import argparse
import importlib.util
import json
import os
import re
import sys

from .graphs import BlockPartition
from .polycore import ParseError, PolyError, Polynomial, parse_polynomial
from .refine import (
    RefineConfig,
    as_fraction,
    chordal_cliques,
    constrained_chordal_cliques,
    refine,
    refine_constrained,
    refined_chordal,
)
from .sdp import (
    SOLVER_ENV,
    SdpError,
    SolverError,
    SolverTimeout,
    StructureError,
    assemble_constrained,
    assemble_from_cliques,
    assemble_unconstrained,
    dump_partition,
    solve_sdp,
    write_sdpa,
)
from .tssos import Pop, constrained_state_at, default_basis, run_tssos

EXIT_OK, EXIT_PARSE, EXIT_STRUCTURE, EXIT_SOLVER, EXIT_TIMEOUT = 0, 2, 3, 4, 5
MODES = ("tssos", "refine", "chordal", "refined-chordal", "dense")


class UsageError(ValueError):
    pass


def _read_poly_text(arg: str) -> tuple[str, int | None]:
    """Inline text, or a file holding the polynomial with optional ``n = <int>`` and ``#`` comments."""
    if os.path.isfile(arg):
        n = None
        parts = []
        with open(arg) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                m = re.fullmatch(r"n\s*=\s*(\d+)", line)
                if m:
                    n = int(m.group(1))
                else:
                    parts.append(line)
        return " ".join(parts), n
    return arg, None


def _infer_n(*texts: str) -> int:
    idx = [int(i) for t in texts for i in re.findall(r"x(\d+)", t)]
    return max(idx) if idx else 1


def _constraint_text(spec: str) -> str:
    m = re.fullmatch(r"\s*(.*?)\s*>=\s*0\s*", spec)
    if not m:
        raise ParseError(f"constraint must read '<poly> >= 0': {spec!r}")
    return m.group(1)


def _ball(n: int, radius: str) -> Polynomial:
    from .bench import ball

    return ball(n, radius)


def _refine_configs(args, count: int) -> list[RefineConfig]:
    kw = {"tie_break": args.tie_break, "nu_order": args.nu_order}
    if args.tau:
        taus = [t for t in args.tau.split(",")]
        if len(taus) == 1:
            taus = taus * count
        if len(taus) != count:
            raise UsageError(f"need 1 or {count} tau values, got {len(taus)}")
        return [RefineConfig.from_tau(t, **kw) for t in taus]
    if args.eps is None:
        raise UsageError("refine modes need --eps or --tau")
    eps = args.eps.split(",")
    if len(eps) == 1:
        eps = eps * count
    if len(eps) != count:
        raise UsageError(f"need 1 or {count} eps values, got {len(eps)}")
    return [RefineConfig(k=args.k, eps=as_fraction(e), **kw) for e in eps]


def build_problem(args) -> tuple[Polynomial, Pop | None, int | None]:
    text, n_file = _read_poly_text(args.poly)
    cons = [_constraint_text(c) for c in args.constraint or []]
    n = args.n or n_file or _infer_n(text, *cons)
    f = parse_polynomial(text, n)
    gs = [parse_polynomial(c, n) for c in cons]
    if args.ball is not None:
        gs.append(_ball(n, args.ball))
    if not gs:
        return f, None, None
    pop = Pop(f, gs)
    d_hat = args.d_hat or pop.d
    return f, pop, d_hat


def relax_sdp(args, f: Polynomial, pop: Pop | None, d_hat: int | None):
    """Return ``(sdp, summary dict, partition JSON text)`` for the chosen mode."""
    mode = args.mode or ("refine" if args.eps or args.tau else "tssos")
    if pop is None:
        basis = default_basis(f)
        if mode == "dense":
            blocks = BlockPartition.from_blocks([range(len(basis))])
        elif mode == "tssos":
            blocks = run_tssos(f, args.k, basis=basis)[-1].blocks
        elif mode == "refine":
            blocks = refine(f, _refine_configs(args, 1)[0], basis).blocks
        if mode in ("dense", "tssos", "refine"):
            sizes = blocks.sizes()
            return (assemble_unconstrained(f, blocks, basis),
                    {"mb": blocks.width, "blocks": len(sizes), "sizes": sizes},
                    dump_partition(basis, blocks))
        if mode == "chordal":
            cl = chordal_cliques(f, args.k, basis)
        else:
            cl, _ = refined_chordal(f, _refine_configs(args, 1)[0], basis)
        sizes = sorted((len(c) for c in cl), reverse=True)
        parts = json.dumps(sorted(([list(basis[i]) for i in c] for c in cl), key=lambda b: -len(b)))
        return assemble_from_cliques(f, cl, basis), {"mb": sizes[0], "blocks": len(sizes), "sizes": sizes}, parts
    m1 = pop.m + 1
    if mode in ("dense", "tssos"):
        st = constrained_state_at(pop, d_hat, 0 if mode == "dense" else args.k)
        bases = st.bases
        parts = st.blocks if mode == "tssos" else [BlockPartition.from_blocks([range(len(b))]) for b in bases]
        sdp = assemble_constrained(pop, d_hat, parts, bases)
    elif mode == "refine":
        res = refine_constrained(pop, d_hat, _refine_configs(args, m1))
        bases = [r.basis for r in res]
        parts = [r.blocks for r in res]
        sdp = assemble_constrained(pop, d_hat, parts, bases)
    else:
        refined = refine_constrained(pop, d_hat, _refine_configs(args, m1)) if mode == "refined-chordal" else None
        k = _refine_configs(args, m1)[0].k if refined else args.k
        cl = constrained_chordal_cliques(pop, d_hat, k, refined)
        bases = constrained_state_at(pop, d_hat, 0).bases
        sdp = assemble_from_cliques(f, cl[0], bases[0], pop, bases, cl)
        widths = [max(len(c) for c in cj) for cj in cl]
        summary = {"mb": widths, "blocks": [len(cj) for cj in cl]}
        parts = json.dumps([[[list(bases[j][i]) for i in c] for c in cj] for j, cj in enumerate(cl)])
        return sdp, summary, parts
    summary = {"mb": [p.width for p in parts], "blocks": [len(p.blocks) for p in parts]}
    text = "[" + ", ".join(dump_partition(b, p) for b, p in zip(bases, parts)) + "]"
    return sdp, summary, text


def _solver_available(command: str | None) -> bool:
    if command or os.environ.get(SOLVER_ENV):
        return True
    return any(importlib.util.find_spec(m) is not None for m in ("clarabel", "scs"))


def _fmt(v) -> str:
    return ",".join(map(str, v)) if isinstance(v, list) else str(v)


def cmd_relax(args) -> int:
    f, pop, d_hat = build_problem(args)
    sdp, summary, parts = relax_sdp(args, f, pop, d_hat)
    print(f"mb={_fmt(summary['mb'])}, blocks={_fmt(summary['blocks'])}")
    if args.partition_out:
        with open(args.partition_out, "w") as fh:
            fh.write(parts + "\n")
    if args.sdpa_out:
        write_sdpa(sdp, args.sdpa_out)
    if args.no_solve:
        return EXIT_OK
    if not _solver_available(args.solver):
        print("theta: not computed (no solver configured)")
        return EXIT_OK
    rep = solve_sdp(sdp, args.solver, args.timeout)
    if args.report_out:
        with open(args.report_out, "w") as fh:
            json.dump(rep.to_json(), fh, indent=1)
    if rep.status == "timeout":
        print("theta: timeout", file=sys.stderr)
        return EXIT_TIMEOUT
    if rep.status == "infeasible":
        print("theta: relaxation infeasible", file=sys.stderr)
        return EXIT_STRUCTURE
    if rep.bound is None:
        print(f"theta: solver failed ({rep.status})", file=sys.stderr)
        return EXIT_SOLVER
    print(f"theta={rep.bound:.8g} ({rep.status})")
    return EXIT_OK


def cmd_trace(args) -> int:
    f, pop, d_hat = build_problem(args)
    if pop is None:
        res = [refine(f, _refine_configs(args, 1)[0], trace=True)]
    else:
        res = refine_constrained(pop, d_hat, _refine_configs(args, pop.m + 1), trace=True)
    doc = [r.trace_json() for r in res]
    text = json.dumps(doc[0] if pop is None else doc, indent=1, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"mb={_fmt([r.width for r in res] if pop else res[0].width)}, "
          f"ips={sum(len(r.ip_sizes()) for r in res)}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import accuracy_table, load_config, run_experiment, write_csv

    cfg = load_config(args.config)
    if args.no_solve:
        cfg["solver"] = None
    elif args.solver or "solver" not in cfg:
        cfg["solver"] = {"command": args.solver, "timeout": args.timeout} if _solver_available(args.solver) else None
    rows = run_experiment(cfg)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
        report = sys.stdout
    else:
        write_csv(rows, sys.stdout)
        report = sys.stderr
    methods = sorted({r.method for r in rows})
    for m in methods:
        mine = [r for r in rows if r.method == m]
        ok = sum(r.status in ("optimal", "inaccurate") for r in mine)
        t = sum(r.time_total for r in mine) / len(mine)
        print(f"{m:>10}  rows={len(mine)}  solved={ok}  mean_time={t:.2f}s", file=report)
    baseline = args.baseline or cfg.get("baseline")
    if baseline and any(r.bound is not None for r in rows if r.method == baseline):
        for m, fr in accuracy_table(rows, baseline).items():
            cells = "  ".join(f"tol={t:g}:{v:.2f}" for t, v in fr.items())
            print(f"{m:>10}  {cells}", file=report)
    return EXIT_OK


def _poly_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--poly", required=True, help="polynomial text or a file holding it")
    p.add_argument("--n", type=int, default=None, help="number of variables")
    p.add_argument("--k", type=int, default=1, help="TSSOS step / refinement base step")
    p.add_argument("--eps", default=None, help="refinement fraction, one value or a comma list per j")
    p.add_argument("--tau", default=None, help="k - 1 + eps, one value or a comma list per j")
    p.add_argument("--d-hat", dest="d_hat", type=int, default=None, help="relaxation order")
    p.add_argument("--ball", default=None, help="add g = R^2 - sum x_i^2 >= 0")
    p.add_argument("--constraint", action="append", help="'<poly> >= 0' (repeatable)")
    p.add_argument("--tie-break", dest="tie_break", default="balanced", choices=("balanced", "fewest"))
    p.add_argument("--nu-order", dest="nu_order", default="grlex", choices=("grlex", "support"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rtssos", description="Sparse SOS relaxations with refined TSSOS.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("relax", help="build (and optionally solve) one relaxation")
    _poly_args(r)
    r.add_argument("--mode", choices=MODES, default=None,
                   help="default: refine when --eps/--tau is given, else tssos")
    r.add_argument("--solver", default=None, help="command template with {input} and {output}")
    r.add_argument("--timeout", type=float, default=5000.0)
    r.add_argument("--no-solve", dest="no_solve", action="store_true")
    r.add_argument("--partition-out", dest="partition_out")
    r.add_argument("--sdpa-out", dest="sdpa_out")
    r.add_argument("--report-out", dest="report_out")
    r.set_defaults(func=cmd_relax)

    t = sub.add_parser("trace", help="dump the refinement walk as JSON")
    _poly_args(t)
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_trace)

    b = sub.add_parser("bench", help="run an experiment config and write CSV")
    b.add_argument("--config", required=True)
    b.add_argument("--out", default=None)
    b.add_argument("--solver", default=None)
    b.add_argument("--timeout", type=float, default=5000.0)
    b.add_argument("--no-solve", dest="no_solve", action="store_true")
    b.add_argument("--baseline", default=None, help="method used as reference in the accuracy table")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SolverTimeout as exc:
        print(f"solver timeout: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (StructureError, SdpError, PolyError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
