import numpy as np
import pytest
from hypothesis import given

from unifl import build_instance, expected_cost, expected_cost_grad, expected_cost_of_constant_p
from unifl.errors import ProbOutOfRange
from unifl.sampling import monte_carlo_expected_cost

from conftest import geo, instance_and_probs, random_graph


def central_diff(inst, p, metric="linear", h=1e-6):
    out = np.zeros(inst.n)
    for v in range(inst.n):
        hi, lo = p.copy(), p.copy()
        hi[v] = min(1.0, p[v] + h)
        lo[v] = max(0.0, p[v] - h)
        out[v] = (expected_cost(inst, hi, metric).total - expected_cost(inst, lo, metric).total) / (hi[v] - lo[v])
    return out


def test_all_open():
    inst = geo(40, 0)
    b = expected_cost(inst, np.ones(40))
    assert (b.open_direct, b.open_forced, b.connection, b.total) == (40.0, 0.0, 0.0, 40.0)


def test_none_open():
    inst = geo(40, 0)
    b = expected_cost(inst, np.zeros(40))
    assert (b.open_direct, b.open_forced, b.connection, b.total) == (0.0, 40.0, 0.0, 40.0)


def test_pair_hand_value(pair, frozen):
    b = expected_cost(pair, [1.0, 0.0])
    assert (b.open_direct, b.open_forced, b.connection) == (1.0, 0.0, 0.5)
    assert b.total == frozen["pair_expected_p10"]


@pytest.mark.parametrize("metric", ["linear", "squared"])
def test_matches_exhaustive_enumeration(frozen, metric):
    for case in frozen["random_cases"]:
        inst = build_instance(case["n"], case["edges"])
        got = expected_cost(inst, case["p"], metric).total
        assert got == pytest.approx(case[f"expected_{metric}"], rel=1e-12, abs=1e-12)


def test_constant_p_clique(frozen):
    assert expected_cost_of_constant_p(10, 0.2) == pytest.approx(frozen["constant_p_clique_n10_q02"], rel=1e-12)
    assert expected_cost_of_constant_p(7, 1.0) == 7 and expected_cost_of_constant_p(7, 0.0) == 7
    eps = 1e-9
    clique = build_instance(10, [(u, v, eps) for u in range(10) for v in range(u + 1, 10)])
    assert expected_cost(clique, np.full(10, 0.2)).total == pytest.approx(frozen["constant_p_clique_n10_q02"], abs=1e-7)


def test_single_vertex_gradient_is_zero():
    inst = build_instance(1, [])
    for q in (0.0, 0.3, 1.0):
        assert expected_cost(inst, [q]).total == pytest.approx(1.0)
        assert expected_cost_grad(inst, [q]).tolist() == [0.0]


def test_rejects_bad_probabilities(pair):
    with pytest.raises(ProbOutOfRange):
        expected_cost(pair, [0.5, 1.2])
    with pytest.raises(ProbOutOfRange):
        expected_cost_grad(pair, [0.5])


@pytest.mark.parametrize("metric", ["linear", "squared"])
def test_gradient_against_finite_differences(metric):
    rng = np.random.default_rng(5)
    inst = geo(30, 2)
    p = rng.uniform(0.05, 0.95, inst.n)
    g = expected_cost_grad(inst, p, metric)
    fd = central_diff(inst, p, metric)
    np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-7)


def test_gradient_at_boundary_one():
    rng = np.random.default_rng(8)
    inst = random_graph(rng, 12, 0.6)
    p = rng.uniform(0.1, 0.9, 12)
    p[[2, 7]] = 1.0
    p[4] = 0.0
    g = expected_cost_grad(inst, p)
    assert np.all(np.isfinite(g))
    np.testing.assert_allclose(g, central_diff(inst, p), rtol=1e-4, atol=1e-7)


def test_symmetric_instance_has_equal_gradients():
    # cycle of 8 vertices, all edges 0.3: vertex transitive
    inst = build_instance(8, [(i, (i + 1) % 8, 0.3) for i in range(8)])
    g = expected_cost_grad(inst, np.full(8, 0.37))
    assert np.ptp(g) <= 1e-12


def test_monte_carlo_agreement_small():
    rng = np.random.default_rng(2)
    inst = random_graph(rng, 20, 0.3)
    p = rng.uniform(0, 1, 20)
    mean, se = monte_carlo_expected_cost(inst, p, 20000, seed=1)
    assert abs(mean - expected_cost(inst, p).total) <= 4 * se


@given(instance_and_probs())
def test_breakdown_bounds(case):
    inst, p = case
    b = expected_cost(inst, p)
    assert min(b.open_direct, b.open_forced, b.connection) >= 0
    assert b.total == b.open_direct + b.open_forced + b.connection
    assert 0 < b.total <= b.open_direct + b.open_forced + inst.n


@given(instance_and_probs(max_n=7))
def test_gradient_is_exact_polynomial_slope(case):
    # E is affine in each coordinate, so the secant over [0, 1] equals the partial derivative
    inst, p = case
    g = expected_cost_grad(inst, p)
    for v in range(inst.n):
        hi, lo = p.copy(), p.copy()
        hi[v], lo[v] = 1.0, 0.0
        secant = expected_cost(inst, hi).total - expected_cost(inst, lo).total
        assert g[v] == pytest.approx(secant, abs=1e-9)
