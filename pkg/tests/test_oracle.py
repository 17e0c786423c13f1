import numpy as np
import pytest
from hypothesis import given

from unifl import (build_instance, compute_radii, eval_solution, exact_opt, greedy_upper_bound,
                   probs_simple, radii_sum_lower_bound, run_recursion, sample_simple)
from unifl.errors import TooLarge
from unifl.oracle import bisect_radii, bisect_radius, export_ilp, ilp_text, solution_from_facilities

from conftest import geo, instances


def test_single_vertex():
    res = exact_opt(build_instance(1, []))
    assert res.opt_value == 1.0 and res.opt_facilities == frozenset({0})


def test_pair(pair, frozen):
    res = exact_opt(pair)
    value, facilities = frozen["pair_exact"]
    assert res.opt_value == value and res.opt_facilities == frozenset(facilities)


def test_epsilon_clique():
    eps, k = 1e-6, 6
    inst = build_instance(k, [(u, v, eps) for u in range(k) for v in range(u + 1, k)])
    assert exact_opt(inst).opt_value == pytest.approx(1 + (k - 1) * eps, abs=1e-12)


def test_random_cases_match_enumeration(frozen):
    for case in frozen["random_cases"]:
        inst = build_instance(case["n"], case["edges"])
        res = exact_opt(inst)
        assert res.opt_value == pytest.approx(case["exact_opt"], abs=1e-9)
        # enumeration oracle's set, completed with its uncovered vertices
        completed = solution_from_facilities(inst, case["exact_facilities"]).facilities
        assert res.opt_facilities == completed


def test_limit():
    with pytest.raises(TooLarge):
        exact_opt(build_instance(19, []))
    assert exact_opt(build_instance(3, []), limit=3).opt_value == 3


def test_result_is_feasible_and_minimal():
    inst = geo(16, 2)
    res = exact_opt(inst)
    sol = solution_from_facilities(inst, res.opt_facilities)
    assert eval_solution(inst, sol)[2] == pytest.approx(res.opt_value, abs=1e-12)
    r = compute_radii(inst)
    for s in range(20):
        assert sample_simple(inst, probs_simple(inst, r, 1.0), 0, s).total >= res.opt_value - 1e-12
        assert run_recursion(inst, r, 6.0, seed=0, sample_index=s).total >= res.opt_value - 1e-12


def test_bisection_radius():
    assert abs(bisect_radius(build_instance(1, []), 0, 1e-10) - 1.0) <= 1e-10
    inst = geo(100, 4)
    assert np.max(np.abs(bisect_radii(inst, 1e-10) - compute_radii(inst).r)) <= 1e-9


def test_bisection_pair(pair):
    assert abs(bisect_radius(pair, 1, 1e-10) - 0.75) <= 1e-10


def test_greedy_small_cases(pair):
    assert greedy_upper_bound(build_instance(1, [])).total == 1
    sol = greedy_upper_bound(pair)
    assert sol.total == 1.5 and len(sol.facilities) == 1


def test_ilp_single_vertex():
    text = ilp_text(build_instance(1, []))
    assert "y_0" in text and "e_0_0" in text
    assert " open_0_0: e_0_0 - y_0 <= 0" in text and " assign_0: e_0_0 = 1" in text
    assert text.strip().endswith("End")


def test_ilp_structure(pair, tmp_path):
    path = tmp_path / "pair.lp"
    export_ilp(pair, path)
    text = path.read_text()
    assert text.count("open_") == 4 and text.count("assign_") == 2
    assert "0.5 e_0_1" in text and "0.5 e_1_0" in text


def test_ilp_solved_externally(pair, tmp_path):
    highspy = pytest.importorskip("highspy")
    for inst in (pair, geo(14, 3)):
        path = tmp_path / "m.lp"
        export_ilp(inst, path)
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.readModel(str(path))
        h.run()
        assert h.getInfo().objective_function_value == pytest.approx(exact_opt(inst).opt_value, abs=1e-9)


def test_radii_sum_within_window_of_opt():
    for seed in range(20):
        inst = geo(14, seed)
        ratio = radii_sum_lower_bound(compute_radii(inst)) / exact_opt(inst).opt_value
        assert 1 / 6 <= ratio <= 6


@given(instances(max_n=9))
def test_greedy_is_feasible_upper_bound(inst):
    sol = greedy_upper_bound(inst)
    assert eval_solution(inst, sol) == (sol.open_cost, sol.connection_cost, sol.total)
    assert sol.total >= exact_opt(inst).opt_value - 1e-12


@given(instances(max_n=9))
def test_exact_never_above_any_feasible_set(inst):
    best = exact_opt(inst).opt_value
    rng = np.random.default_rng(inst.n)
    for _ in range(5):
        chosen = np.nonzero(rng.random(inst.n) < 0.5)[0]
        assert solution_from_facilities(inst, chosen).total >= best - 1e-12
