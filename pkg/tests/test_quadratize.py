import itertools

import numpy as np
import pytest

from polyrisk.pubo import PuboError, PuboTensor, qubit_bounds
from polyrisk.quadratize import QuboProblem, ancilla_values, lift_solution, qubo_eval, reduce_to_qubo


def all_states(N):
    return np.array(list(itertools.product([0, 1], repeat=N)), dtype=np.uint8)


def random_pubo(rng, N, degree, terms):
    p = PuboTensor(N)
    p.add_term((), float(rng.normal()))
    for _ in range(terms):
        k = int(rng.integers(1, min(N, degree) + 1))
        p.add_term(rng.choice(N, size=k, replace=False), float(rng.normal()))
    return p


def min_over_ancillae(q):
    L, A = q.num_logical, q.num_ancillae
    E = qubo_eval(q, all_states(q.num_vars)).reshape(2**L, 2**A)
    return E.min(axis=1), E.argmin(axis=1)


def test_quadratic_input_is_unchanged():
    p = PuboTensor(3, {(): 0.5, (0,): 1.0, (1, 2): -2.0})
    q = reduce_to_qubo(p)
    assert q.num_ancillae == 0
    assert q.to_pubo() == p


def test_single_cubic_term():
    for c in (2.5, -1.5):
        q = reduce_to_qubo(PuboTensor(3, {(0, 1, 2): c}))
        assert q.num_ancillae == 1
        best, _ = min_over_ancillae(q)
        logical = all_states(3)
        assert np.allclose(best, c * logical.all(axis=1))


@pytest.mark.parametrize("seed", range(12))
def test_minimum_over_ancillae_reproduces_the_polynomial(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(3, 7))
    p = random_pubo(rng, N, degree=int(rng.integers(3, 5)), terms=10)
    q = reduce_to_qubo(p)
    best, arg = min_over_ancillae(q)
    logical = all_states(N)
    assert np.max(np.abs(best - p.energy(logical))) <= 1e-9
    # the minimizing ancillae are exactly the products they replace
    for row in range(0, 2**N, 3):
        full = ancilla_values(q, logical[row])
        assert qubo_eval(q, full) == pytest.approx(best[row], abs=1e-9)


def test_degree_six_reduces_by_composition():
    rng = np.random.default_rng(5)
    p = random_pubo(rng, 7, degree=6, terms=6)
    p.add_term(range(6), 1.7)
    q = reduce_to_qubo(p)
    best, _ = min_over_ancillae(q)
    assert np.allclose(best, p.energy(all_states(7)), atol=1e-9)


def test_reduction_is_deterministic():
    p = random_pubo(np.random.default_rng(3), 6, 4, 15)
    assert reduce_to_qubo(p).dumps() == reduce_to_qubo(p).dumps()


def test_fully_connected_cubic_ancilla_counts():
    for N in (4, 6, 8):
        p = PuboTensor(N, {t: 1.0 for t in itertools.combinations(range(N), 3)})
        q = reduce_to_qubo(p)
        bound = qubit_bounds(N, 1)["ancilla_bound"]
        assert q.num_ancillae <= bound + N // 2


def test_qubo_eval_basics():
    q = QuboProblem(3, 3, linear={0: 2.0}, quadratic={(1, 2): -1.0}, constant=0.25)
    assert qubo_eval(q, [0, 0, 0]) == 0.25
    assert qubo_eval(q, [1, 0, 0]) == 2.25
    assert qubo_eval(q, [0, 1, 1]) == -0.75
    with pytest.raises(PuboError):
        qubo_eval(q, [0, 1])


def test_lift_consistent_and_violated_states():
    p = PuboTensor(3, {(0, 1, 2): 2.0, (0,): -1.0})
    q = reduce_to_qubo(p)
    z = q.substitutions[0].ancilla
    good = ancilla_values(q, [1, 1, 0])
    lift = lift_solution(q, good)
    assert lift.consistent and lift.penalty == 0.0
    assert lift.logical.tolist() == [1, 1, 0]
    bad = good.copy()
    bad[z] = 0
    lift = lift_solution(q, bad)
    assert lift.violated == [z] and lift.penalty >= q.substitutions[0].penalty
    # the projected logical energy never exceeds the energy of the broken state
    assert p.energy(lift.logical) <= qubo_eval(q, bad) + 1e-12


def test_lift_bound_over_all_states():
    rng = np.random.default_rng(11)
    p = random_pubo(rng, 5, 4, 12)
    q = reduce_to_qubo(p)
    X = all_states(q.num_vars)
    E = qubo_eval(q, X)
    for x, e in zip(X, E):
        lift = lift_solution(q, x)
        assert p.energy(lift.logical) <= e + 1e-9
        assert lift.consistent == (lift.penalty == 0.0)


def test_lift_without_ancillae_is_identity():
    q = reduce_to_qubo(PuboTensor(2, {(0, 1): 1.0}))
    lift = lift_solution(q, [1, 0])
    assert lift.logical.tolist() == [1, 0] and lift.consistent


def test_text_round_trip_keeps_substitutions():
    p = random_pubo(np.random.default_rng(8), 6, 4, 12)
    q = reduce_to_qubo(p)
    back = QuboProblem.loads(q.dumps())
    assert back.dumps() == q.dumps()
    assert back.substitutions == q.substitutions
    assert back.num_logical == 6
    with pytest.raises(PuboError):
        QuboProblem.loads("1.0 0\n")
    with pytest.raises(PuboError):
        QuboProblem.loads("p qubo 2 2\n1.0 0 1 1\n")
