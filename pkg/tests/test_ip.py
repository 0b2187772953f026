import random
import time
from fractions import Fraction

import pytest

from rtssos.ip import (
    CoverRow,
    IPProblem,
    brute_force_width,
    check_solution,
    export_lp,
    solve_external,
    solve_ip,
)


def example_45_ip(eps=Fraction(1, 5)) -> IPProblem:
    """The nu = (1,0,1) program: groups of sizes 4,4,4,7,1; component {0,1,3}."""
    row = CoverRow((((0, 3), 2), ((1, 3), 4)), 0, 6, (1, 0, 3))
    return IPProblem((4, 4, 4, 7, 1), ((0, 1, 3), (2,), (4,)), (row,), eps)


def random_ip(rng: random.Random, max_groups: int = 12) -> IPProblem:
    r = rng.randint(1, max_groups)
    sizes = [rng.randint(1, 9) for _ in range(r)]
    perm = list(range(r))
    rng.shuffle(perm)
    comps, i = [], 0
    while i < r:
        k = rng.randint(1, min(6, r - i))
        comps.append(sorted(perm[i:i + k]))
        i += k
    rows = []
    for comp in comps:
        if len(comp) < 2:
            continue
        for _ in range(rng.randint(0, 3)):
            coeffs = {}
            for _ in range(rng.randint(1, 4)):
                a, b = sorted(rng.sample(comp, 2))
                coeffs[(a, b)] = coeffs.get((a, b), 0) + 2 * rng.randint(1, 3)
            const = rng.choice([0, 0, 1, 2])
            total = sum(coeffs.values()) + const
            rows.append(CoverRow(tuple(sorted(coeffs.items())), const, total))
    eps = Fraction(rng.randint(1, 19), 20)
    return IPProblem(tuple(sizes), tuple(tuple(c) for c in comps), tuple(rows), eps)


def test_example_45_ip():
    sol = solve_ip(example_45_ip())
    assert sol.omega == 11
    assert sol.y == {(0, 1): 0, (0, 3): 1, (1, 3): 0}
    assert sol.stats.status == "optimal"
    assert brute_force_width(example_45_ip()) == 11


def test_example_45_ip_near_one_forces_full_merge():
    p = example_45_ip(Fraction(99, 100))
    sol = solve_ip(p)
    assert sol.omega == 15
    assert sol.y[(0, 3)] == 1 and sol.y[(1, 3)] == 1
    assert brute_force_width(p) == 15


def test_example_45_constraint_count():
    p = example_45_ip()
    assert len(p.var_pairs) == 3
    assert p.n_constraints() == 7


def test_no_variables():
    p = IPProblem((3, 5, 2), ((0,), (1,), (2,)), (), Fraction(1, 2))
    sol = solve_ip(p)
    assert sol.omega == 5
    assert sol.y == {}


def test_vacuous_rows_keep_groups_apart():
    row = CoverRow((((0, 1), 2),), 4, 6)
    p = IPProblem((3, 4), ((0, 1),), (row,), Fraction(1, 2))
    sol = solve_ip(p)
    assert sol.omega == 4
    assert sol.y == {(0, 1): 0}


def test_forced_merge_two_groups():
    row = CoverRow((((0, 1), 2),), 0, 2)
    p = IPProblem((3, 4), ((0, 1),), (row,), Fraction(1, 2))
    assert solve_ip(p).omega == 7
    assert brute_force_width(p) == 7


def test_pairs_outside_components_rejected():
    row = CoverRow((((0, 1), 2),), 0, 2)
    with pytest.raises(ValueError):
        IPProblem((1, 1), ((0,), (1,)), (row,), Fraction(1, 2))


def test_random_ips_match_brute_force():
    rng = random.Random(11)
    t0 = time.monotonic()
    for _ in range(100):
        p = random_ip(rng)
        sol = solve_ip(p)
        assert sol.omega == brute_force_width(p)
        assert check_solution(p, sol.y, sol.omega)
        # y is transitively closed: merged blocks reproduce every y value
        owner = {g: b for b, blk in enumerate(sol.blocks) for g in blk}
        assert all(v == int(owner[i] == owner[j]) for (i, j), v in sol.y.items())
    assert time.monotonic() - t0 < 60


@pytest.mark.parametrize("tie", ["balanced", "fewest"])
def test_deterministic(tie):
    rng = random.Random(3)
    for _ in range(10):
        p = random_ip(rng, 9)
        a, b = solve_ip(p, tie_break=tie), solve_ip(p, tie_break=tie)
        assert (a.omega, a.y) == (b.omega, b.y)


def test_fewest_tie_break_minimizes_merges():
    rng = random.Random(8)
    for _ in range(20):
        p = random_ip(rng, 7)
        sol = solve_ip(p, tie_break="fewest")
        # nothing with the same width uses fewer merges
        import itertools

        from rtssos.ip import _set_partitions

        best = None
        for combo in itertools.product(*[list(_set_partitions(list(c))) for c in p.components]):
            parts = [b for part in combo for b in part]
            w = max(sum(p.sizes[g] for g in b) for b in parts)
            if w != sol.omega:
                continue
            owner = {g: k for k, b in enumerate(parts) for g in b}
            y = {(i, j): int(owner[i] == owner[j]) for i, j in p.var_pairs}
            if check_solution(p, y, w):
                s = sum(y.values())
                best = s if best is None else min(best, s)
        assert sum(sol.y.values()) == best


def test_epsilon_monotone():
    rng = random.Random(21)
    for _ in range(40):
        p = random_ip(rng, 8)
        lo = IPProblem(p.sizes, p.components, p.rows, Fraction(1, 10))
        hi = IPProblem(p.sizes, p.components, p.rows, Fraction(9, 10))
        assert solve_ip(lo).omega <= solve_ip(hi).omega


def test_brute_force_cap():
    p = IPProblem(tuple([1] * 13), (tuple(range(13)),), (), Fraction(1, 2))
    with pytest.raises(ValueError):
        brute_force_width(p)


def test_export_lp_example(tmp_path):
    path = tmp_path / "ex.lp"
    export_lp(example_45_ip(), path)
    text = path.read_text()
    assert text.startswith("\\") or text.lstrip().startswith("Minimize")
    assert "Minimize" in text and "Subject To" in text and "End" in text
    binaries = text.split("Binary")[1].split("General")[0].split()
    assert len(binaries) == 3
    body = text.split("Subject To")[1].split("Bounds")[0]
    assert len([ln for ln in body.splitlines() if ":" in ln]) == 7


def test_export_lp_empty(tmp_path):
    path = tmp_path / "empty.lp"
    export_lp(IPProblem((2,), ((0,),), (), Fraction(1, 2)), path)
    text = path.read_text()
    assert "obj: w" in text
    assert "Binary" not in text or not text.split("Binary")[1].split("General")[0].split()


def _highs_objective(path) -> float:
    highspy = pytest.importorskip("highspy")
    h = highspy.Highs()
    h.silent()
    h.readModel(str(path))
    h.run()
    assert h.getModelStatus() == highspy.HighsModelStatus.kOptimal
    return h.getInfo().objective_function_value


def test_export_lp_read_by_milp_solver(tmp_path):
    path = tmp_path / "ex.lp"
    export_lp(example_45_ip(), path)
    assert round(_highs_objective(path)) == 11


def test_export_lp_round_trip_large(tmp_path):
    """A 105-variable instance parses and solves to the same width."""
    rng = random.Random(1)
    comp = tuple(range(15))
    rows = []
    for _ in range(5):
        a, b = sorted(rng.sample(comp, 2))
        c, d = sorted(rng.sample(comp, 2))
        co = {(a, b): 2}
        co[(c, d)] = co.get((c, d), 0) + 4
        rows.append(CoverRow(tuple(sorted(co.items())), 0, sum(co.values())))
    p = IPProblem(tuple(rng.randint(1, 5) for _ in comp), (comp,), tuple(rows), Fraction(3, 5))
    path = tmp_path / "big.lp"
    export_lp(p, path)
    assert len(path.read_text().split("Binary")[1].split("General")[0].split()) == 105
    assert round(_highs_objective(path)) == solve_ip(p).omega


def test_solve_external_parses_solution(tmp_path):
    """The fallback drives any command that writes ``name value`` lines."""
    script = tmp_path / "fake_milp.py"
    script.write_text(
        "import sys\n"
        "lp, sol = sys.argv[1], sys.argv[2]\n"
        "open(sol, 'w').write('w 11\\ny_0_1 0\\ny_0_3 1\\ny_1_3 0\\n')\n"
    )
    import sys

    sol = solve_external(example_45_ip(), f"{sys.executable} {script} {{lp}} {{sol}}")
    assert sol.omega == 11
    assert sol.y[(0, 3)] == 1
