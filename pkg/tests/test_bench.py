import csv
import io
import time
from fractions import Fraction

import pytest
from conftest import DATA

from rtssos.bench import (
    CSV_COLUMNS,
    ExperimentRow,
    GeneratorError,
    GenSpec,
    accuracy_table,
    ball,
    gen_randpoly1,
    gen_randpoly3,
    generate,
    instances,
    load_config,
    randpoly2_parts,
    rows_to_csv,
    run_experiment,
    run_method,
)
from rtssos.polycore import newton_basis, parse_polynomial, standard_basis
from rtssos.tssos import Pop, default_basis


def _nonzeros(e):
    return sum(1 for x in e if x)


def _is_diag(e, two_d):
    return _nonzeros(e) == 1 and sum(e) == two_d


def check_randpoly1(f, spec):
    n, two_d = spec.n, spec.two_d
    zero = tuple([0] * n)
    assert len(f.terms) == spec.s
    assert 0 < f.terms[zero] <= 1
    for i in range(n):
        e = tuple(two_d if j == i else 0 for j in range(n))
        assert 0 < f.terms[e] <= 1
    others = [e for e in f.terms if e != zero and not _is_diag(e, two_d)]
    assert len(others) == spec.s - n - 1
    for e in others:
        assert 1 <= sum(e) <= two_d - 1
        assert -1 <= f.terms[e] <= 1 and f.terms[e] != 0
        if spec.min_nonzero:
            assert _nonzeros(e) >= spec.min_nonzero
        if spec.max_nonzero is not None:
            assert _nonzeros(e) <= spec.max_nonzero


def check_randpoly2(f, g, betas, spec):
    n, two_d = spec.n, spec.two_d
    d = two_d // 2
    k1, k2, k3, k4 = spec.k
    assert g.degree in ({2 * d + 2, 2 * d + 4} if k1 else {2 * d, 2 * d + 2, 2 * d + 4})
    if k1 == 0 and k2 == 0:
        assert g.degree == 2 * d
    # even part: n diagonal terms plus k2 fillers gamma in 2N_{d+2} \\ 2N_d
    assert len(g.terms) == n + k2
    fillers = [e for e in g.terms if _nonzeros(e) != 1 or sum(e) not in (two_d, two_d + 2, two_d + 4)]
    for e in g.terms:
        assert all(x % 2 == 0 for x in e) and 0 < g.terms[e] <= 1
        if e in fillers:
            assert two_d < sum(e) <= two_d + 4
    assert len(f.terms) == n + k2 + k3 + k4
    Bg = newton_basis(g)
    doubled = {tuple(2 * x for x in b) for b in Bg}
    sums = {tuple(x + y for x, y in zip(a, b)) for a in Bg for b in Bg}
    d_g = g.degree // 2
    assert len(betas) == k4
    for b in betas:
        assert b in sums and b not in doubled and sum(b) > two_d
        c = f.terms[b]
        if sum(b) == 2 * d_g:
            assert c > 0
        assert -1 <= c <= 1 and c != 0
    rest = [e for e in f.terms if e not in g.terms and e not in betas]
    assert len(rest) == k3
    assert all(sum(e) <= two_d for e in rest)


def check_randpoly3(f, spec):
    assert len(f.terms) == spec.s
    assert f.degree == spec.two_d
    assert all(-1 <= c <= 1 and c != 0 for c in f.terms.values())


SET_I = [GenSpec("I", 8, 8, 17), GenSpec("I", 4, 6, 12), GenSpec("I", 8, 8, 17, min_nonzero=5),
         GenSpec("I", 8, 8, 17, max_nonzero=3)]


@pytest.mark.parametrize("base", SET_I, ids=["plain", "small", "setII", "setIII"])
def test_randpoly1_thousand_draws(base):
    for seed in range(250):
        spec = GenSpec(base.family, base.n, base.two_d, base.s, (), base.min_nonzero, base.max_nonzero, seed)
        check_randpoly1(generate(spec), spec)


def test_randpoly1_newton_basis_is_full():
    for seed in range(5):
        f = gen_randpoly1(GenSpec("I", 4, 6, 10, seed=seed))
        assert newton_basis(f).elements == standard_basis(4, 3).elements


@pytest.mark.parametrize("k", [(2, 4, 8, 4), (4, 6, 8, 4)])
def test_randpoly2_thousand_draws(k):
    t0 = time.monotonic()
    for seed in range(500):
        spec = GenSpec("II", 8, 8, k=k, seed=seed)
        f, g, betas = randpoly2_parts(spec)
        check_randpoly2(f, g, betas, spec)
        assert generate(spec).terms == f.terms
    assert time.monotonic() - t0 < 120


def test_randpoly2_without_raised_degrees():
    spec = GenSpec("II", 4, 4, k=(0, 0, 3, 0), seed=3)
    f, g, betas = randpoly2_parts(spec)
    assert g.degree == 4 and betas == []
    # g has no constant term, so New(g)/2 holds only the top-degree monomials;
    # the relaxation basis adds 0 and is the full standard basis
    assert set(newton_basis(g).elements) == {e for e in standard_basis(4, 2).elements if sum(e) == 2}
    assert default_basis(g).elements == standard_basis(4, 2).elements
    check_randpoly2(f, g, betas, spec)


def test_randpoly3_thousand_draws():
    for seed in range(1000):
        spec = GenSpec("III", 8, 8, 30, seed=seed)
        check_randpoly3(generate(spec), spec)


def test_randpoly3_single_term():
    f = gen_randpoly3(GenSpec("III", 3, 4, 1, seed=5))
    (e,) = f.terms
    assert sum(e) == 4


@pytest.mark.parametrize("spec", [GenSpec("I", 8, 8, 17, seed=7), GenSpec("II", 8, 8, k=(2, 4, 8, 4), seed=7),
                                  GenSpec("III", 8, 8, 30, seed=7)])
def test_generators_deterministic(spec):
    assert generate(spec).terms == generate(spec).terms
    other = GenSpec(spec.family, spec.n, spec.two_d, spec.s, spec.k, spec.min_nonzero, spec.max_nonzero, 8)
    assert generate(other).terms != generate(spec).terms


@pytest.mark.parametrize("spec", [GenSpec("I", 4, 8, 10, min_nonzero=5), GenSpec("I", 3, 4, 4),
                                  GenSpec("II", 3, 4, k=(4, 0, 0, 0)), GenSpec("III", 2, 2, 7),
                                  GenSpec("X", 2, 2, 3)])
def test_generator_preconditions(spec):
    with pytest.raises(GeneratorError):
        generate(spec)


def test_ball():
    assert ball(2, 3).terms == {(0, 0): 9, (2, 0): -1, (0, 2): -1}


def _read(text):
    return list(csv.reader(io.StringIO(text)))


def test_empty_method_list_gives_header_only():
    buf = io.StringIO()
    rows = run_experiment({"generator": {"family": "I", "n": 3, "two_d": 4, "s": 6}, "seeds": 2, "methods": []}, buf)
    assert rows == []
    assert _read(buf.getvalue()) == [CSV_COLUMNS]


def test_runner_without_solver():
    cfg = {"generator": {"family": "I", "n": 3, "two_d": 4, "s": 7}, "seeds": [2, 0, 1],
           "methods": ["t1", "0.5", "c1", "rc0.5", "dense"]}
    rows = run_experiment(cfg)
    assert [(r.seed, r.method) for r in rows] == sorted((s, m) for s in (0, 1, 2) for m in cfg["methods"])
    assert all(r.status == "no-solver" and r.bound is None for r in rows)
    by = {(r.seed, r.method): r for r in rows}
    for s in (0, 1, 2):
        assert by[(s, "0.5")].mb <= by[(s, "t1")].mb <= by[(s, "dense")].mb
    text = rows_to_csv(rows)
    assert _read(text)[0] == CSV_COLUMNS and len(_read(text)) == 16


def test_runner_records_failures_and_continues():
    cfg = {"polynomials": {"a": "x1^4 + x2^4 + x1*x2 + 1", "b": "x1^3 + x2"}, "n": 2, "methods": ["t1"]}
    rows = run_experiment(cfg)
    assert [r.seed for r in rows] == ["a", "b"]
    assert rows[0].status == "no-solver"
    assert rows[1].status.startswith("error:")


def test_constrained_rows_report_per_j_widths():
    f = parse_polynomial("x1^4 + x2^4 - x1*x2^2 + x1 + 1", 2)
    pop = Pop(f, [ball(2, 1)])
    row = run_method(f, "(0.5,0.5)", pop, 2)
    assert isinstance(row.mb, tuple) and len(row.mb) == 2
    assert ExperimentRow(0, "(0.5,0.5)", row.mb, None, 0.0, 0.0, "no-solver").as_list()[2].startswith("(")
    t1 = run_method(f, "t1", pop, 2)
    assert all(a <= b for a, b in zip(row.mb, t1.mb))


def test_octics_config_loads():
    cfg = load_config(DATA / "octics.json")
    names = [name for name, _ in instances(cfg)]
    assert names == ["f1", "f2", "f3"]
    assert cfg["methods"][0] == "t1"


def test_accuracy_table():
    rows = [ExperimentRow(s, "t1", 5, -1.0, 0, 0, "optimal") for s in range(4)]
    rows += [ExperimentRow(0, "0.5", 3, -1.0005, 0, 0, "optimal"),
             ExperimentRow(1, "0.5", 3, -1.05, 0, 0, "optimal"),
             ExperimentRow(2, "0.5", 3, None, 0, 0, "timeout"),
             ExperimentRow(3, "0.5", 3, -1.0, 0, 0, "optimal")]
    acc = accuracy_table(rows, "t1")
    assert acc["t1"][1e-4] == 1.0
    assert acc["0.5"] == {1e-1: 0.75, 1e-2: 0.5, 1e-3: 0.5, 1e-4: 0.25}


@pytest.mark.solver
def test_runner_with_solver(need_solver):
    cfg = {"polynomials": [open(DATA / "ex33.txt").read().splitlines()[2]], "n": 3,
           "methods": ["t1", "dense"], "solver": {"timeout": 300}}
    rows = run_experiment(cfg)
    assert all(r.status == "optimal" for r in rows)
    for r in rows:
        assert r.bound == pytest.approx(-43.8281, rel=1e-3)


@pytest.mark.solver
def test_constrained_ball_bound(need_solver):
    # min x1 + x2 on the disc of radius 1 is -sqrt(2)
    cfg = {"polynomials": ["x1 + x2"], "n": 2, "methods": ["t1", "dense"], "constraint": "ball 1",
           "d_hat": 1, "solver": {}}
    cfg["solver"] = {"timeout": 60}
    rows = run_experiment(cfg)
    for r in rows:
        assert r.bound == pytest.approx(-2 ** 0.5, abs=1e-5)
