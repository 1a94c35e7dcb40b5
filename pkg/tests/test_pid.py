import math

import numpy as np
import pytest

from fairsel.errors import ArgumentError, ConvergenceError, SizeError
from fairsel.pid import (
    PidInput,
    SolverConfig,
    brute_force_ui,
    iter_random_inputs,
    pid_decompose,
    unique_information,
)
from fairsel.prob import JointDistribution, Variable, cond_mutual_info, marginalize, mutual_info

from conftest import AND, XOR, copy_triple

# h(1/4) - 1/2: I(T;R1) for the AND gate
AND_SHARED = 0.31127812445913283


def test_solver_config_validation():
    with pytest.raises(ArgumentError):
        SolverConfig(objective_tol=0)
    with pytest.raises(ArgumentError):
        SolverConfig(max_iterations=-1)
    assert SolverConfig().to_json()["objective_tol"] == 1e-10


def test_input_needs_three_variables():
    d = JointDistribution([Variable("T", 2), Variable("R", 2)], np.full((2, 2), 0.25))
    with pytest.raises(ArgumentError):
        PidInput(d)


def test_copy_has_no_unique_information():
    value, q, _, _ = unique_information(copy_triple())
    assert value == pytest.approx(0.0, abs=1e-12)


def test_independent_target_has_no_unique_information(rng):
    pt = np.array([0.3, 0.7])
    pr = rng.dirichlet(np.ones(4)).reshape(2, 2)
    value, _, _, _ = unique_information(pt[:, None, None] * pr[None])
    assert value == pytest.approx(0.0, abs=1e-10)


def test_and_gate_unique_information_near_zero():
    value, _, _, _ = unique_information(AND)
    assert value == pytest.approx(0.0, abs=1e-3)
    assert brute_force_ui(AND, 1e-3) == pytest.approx(0.0, abs=1e-3)


@pytest.mark.parametrize("probs,expected", [
    (XOR, (0.0, 0.0, 0.0, 1.0)),
    (copy_triple(), (0.0, 0.0, 1.0, 0.0)),
])
def test_canonical_decompositions(probs, expected):
    r = pid_decompose(probs)
    assert (r.ui_1, r.ui_2, r.si, r.ci) == pytest.approx(expected, abs=1e-6)


def test_and_decomposition():
    r = pid_decompose(AND)
    assert r.ui_1 == pytest.approx(0.0, abs=1e-3)
    assert r.ui_2 == pytest.approx(0.0, abs=1e-3)
    assert r.si == pytest.approx(AND_SHARED, abs=1e-3)
    assert r.ci == pytest.approx(0.5, abs=1e-3)


def test_q_star_is_feasible(rng):
    for inp in iter_random_inputs(rng, (3, 2, 3), count=10):
        r = pid_decompose(inp)
        q, p = r.q_star.probs, inp.tensor
        assert np.allclose(q.sum(axis=2), p.sum(axis=2), atol=1e-9)
        assert np.allclose(q.sum(axis=1), p.sum(axis=1), atol=1e-9)
        assert r.objective_gap < 1e-9


def test_never_worse_than_p(rng):
    for inp in iter_random_inputs(rng, (2, 3, 2), count=20):
        value, _, _, _ = unique_information(inp)
        assert value <= cond_mutual_info(inp.dist, ["T"], ["R1"], ["R2"]) + 1e-12


def test_constant_second_source_gives_plain_mutual_information(rng):
    ptr = rng.dirichlet(np.ones(4)).reshape(2, 2)
    p = ptr[:, :, None]  # R2 has a single value
    inp = PidInput.from_array(p)
    assert brute_force_ui(inp, 1e-2) == pytest.approx(mutual_info(inp.dist, ["T"], ["R1"]), abs=1e-12)
    assert unique_information(inp)[0] == pytest.approx(mutual_info(inp.dist, ["T"], ["R1"]), abs=1e-10)


def test_brute_force_copy_is_zero_at_any_step():
    for step in (0.5, 0.1, 1e-2):
        assert brute_force_ui(copy_triple(), step) == pytest.approx(0.0, abs=1e-12)


def test_brute_force_size_guard():
    with pytest.raises(SizeError):
        brute_force_ui(np.full((4, 4, 5), 1 / 80), 0.1)


def test_zero_probability_target_value_is_skipped(rng):
    p = np.zeros((3, 2, 2))
    p[[0, 2]] = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
    r = pid_decompose(p)
    d = PidInput.from_array(p).dist
    assert r.total == pytest.approx(mutual_info(d, ["T"], ["R1", "R2"]), abs=1e-8)


def test_iteration_cap_raises_with_best_iterate(rng):
    inp = next(iter_random_inputs(rng, (3, 3, 3), count=1))
    with pytest.raises(ConvergenceError) as info:
        pid_decompose(inp, SolverConfig(max_iterations=2))
    assert info.value.best is not None
    assert math.isfinite(info.value.objective_gap)


def test_determinism(rng):
    inp = next(iter_random_inputs(rng, (3, 3, 2), count=1))
    a, b = pid_decompose(inp), pid_decompose(inp)
    assert (a.ui_1, a.ui_2, a.si, a.ci) == (b.ui_1, b.ui_2, b.si, b.ci)
    assert np.array_equal(a.q_star.probs, b.q_star.probs)


def test_from_names_reorders(rng):
    d = JointDistribution([Variable("A", 2), Variable("B", 2), Variable("C", 2)], rng.dirichlet(np.ones(8)))
    inp = PidInput.from_names(d, "C", "A", "B")
    assert inp.names == ("C", "A", "B")
    assert np.allclose(marginalize(inp.dist, ["C"]).probs, d.probs.sum(axis=(0, 1)))
