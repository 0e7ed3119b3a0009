import itertools
import json

import numpy as np
import pytest

from conftest import random_dataset
from polyrisk.dataset import gen_random_classifier_set
from polyrisk.fit import fit_cubic_risk, sixth_betas
from polyrisk.losses import CUBIC, LOSS_KINDS, SIXTH, PolyLossCoeffs
from polyrisk.pubo import FixedPointEncoding, PuboTensor, compile_objective
from polyrisk.quadratize import reduce_to_qubo
from polyrisk.solve import (
    AnnealSchedule,
    MarginObjective,
    SolveError,
    SolveResult,
    anneal,
    bits_to_hex,
    delta_energy,
    enumerate_margin_objectives,
    evaluate,
    exhaustive_energies,
    exhaustive_topk,
    hex_to_bits,
    index_to_bits,
    rank_of,
)


def all_states(N):
    return index_to_bits(np.arange(2**N), N)


def random_cubic_pubo(rng, N, terms=40):
    p = PuboTensor(N)
    for _ in range(terms):
        k = int(rng.integers(1, 4))
        p.add_term(rng.choice(N, size=k, replace=False), float(rng.normal()))
    return p


def test_gray_code_energies_cover_every_state(rng):
    p = random_cubic_pubo(rng, 10)
    E = exhaustive_energies(p)
    assert E.shape == (1024,)
    assert np.allclose(E, p.energy(all_states(10)), atol=1e-12)
    assert len({tuple(r) for r in all_states(10)}) == 1024


def test_single_variable_ground_state():
    res = exhaustive_topk(PuboTensor(1, {(): 0.5, (0,): 2.0}), K=5)
    assert res.best_state.tolist() == [0] and res.best_energy == 0.5
    assert len(res) == 2


def test_topk_matches_naive_sort(rng):
    p = random_cubic_pubo(rng, 9)
    E = p.energy(all_states(9))
    res = exhaustive_topk(p, K=20)
    assert np.allclose(res.energies, np.sort(E)[:20], atol=1e-12)
    assert len({bits_to_hex(s) for s in res.states}) == 20
    assert np.all(np.diff(res.energies) >= 0)


def test_enumeration_cap():
    with pytest.raises(SolveError):
        exhaustive_topk(PuboTensor(30, {(0,): 1.0}), K=1)


def test_fig2_size_enumerates_all_states(rng):
    d, _ = gen_random_classifier_set(50, 9, 0)
    e = FixedPointEncoding(9, 2, 1.0)
    p = compile_objective(d, PolyLossCoeffs(3, (-0.5, 0.1)), 0.0, e)
    assert len(exhaustive_energies(p)) == 262144


@pytest.mark.parametrize("kind", LOSS_KINDS)
def test_margin_enumeration_matches_fresh_evaluation(rng, kind):
    d = random_dataset(rng, 30, 3, density=0.7)
    e = FixedPointEncoding(3, 2, 0.8)
    c = {CUBIC: PolyLossCoeffs(3, (-0.5, 0.1)), SIXTH: sixth_betas(0.5)}.get(kind)
    obj = MarginObjective(d, kind, c, 0.05, e)
    E = exhaustive_energies(obj)
    assert np.allclose(E, obj.energy(all_states(6)), rtol=0, atol=1e-12)


def test_shared_margin_pass_requires_shared_setup(rng):
    d = random_dataset(rng, 10, 2)
    e = FixedPointEncoding(2, 2, 1.0)
    a = MarginObjective(d, "logistic", None, 0.1, e)
    b = MarginObjective(d, "square", None, 0.2, e)
    with pytest.raises(SolveError):
        enumerate_margin_objectives([a, b])


def test_compiled_and_margin_objectives_agree(rng):
    d = random_dataset(rng, 25, 3)
    c = PolyLossCoeffs(3, (-0.4, 0.05))
    e = FixedPointEncoding(3, 2, 1.2)
    a = exhaustive_energies(compile_objective(d, c, 0.3, e))
    b = exhaustive_energies(MarginObjective(d, CUBIC, c, 0.3, e))
    assert np.allclose(a, b, atol=1e-12)


def test_rank_is_one_plus_strictly_lower_states():
    E = np.array([0.0, 1.0, 1.0, 2.0, 0.0])
    assert rank_of(E, [0]) == 1
    assert rank_of(E, [4]) == 1
    assert rank_of(E, [1]) == 3
    assert rank_of(E, [3, 2]) == 3


def test_delta_energy_against_reevaluation(rng):
    p = random_cubic_pubo(rng, 8)
    x = rng.integers(0, 2, 8).astype(np.uint8)
    for v in range(8):
        y = x.copy()
        y[v] ^= 1
        assert delta_energy(p, x, v) == pytest.approx(p.energy(y) - p.energy(x), abs=1e-12)
        assert delta_energy(p, x, v) + delta_energy(p, y, v) == pytest.approx(0.0, abs=1e-12)
    lin = PuboTensor(3, {(1,): 0.7})
    assert delta_energy(lin, np.zeros(3, np.uint8), 1) == 0.7
    d = random_dataset(rng, 20, 2)
    obj = MarginObjective(d, "logistic", None, 0.1, FixedPointEncoding(2, 2, 1.0))
    y = x[:4].copy()
    y[2] ^= 1
    assert delta_energy(obj, x[:4], 2) == pytest.approx(obj.energy(y) - obj.energy(x[:4]), abs=1e-12)
    with pytest.raises(SolveError):
        delta_energy(p, x, 8)


def test_anneal_finds_ground_state_of_twelve_variable_cubic():
    rng = np.random.default_rng(7)
    p = random_cubic_pubo(rng, 12, terms=60)
    ground = exhaustive_topk(p, K=1).best_energy
    res = anneal(p, AnnealSchedule(sweeps=300, restarts=100, seed=1))
    hits = np.isclose(res.metadata["restart_best"], ground, atol=1e-9)
    assert hits.mean() >= 0.95
    assert res.best_energy == pytest.approx(ground, abs=1e-12)


def test_anneal_on_qubo_and_margin_objectives(rng):
    p = random_cubic_pubo(rng, 6, terms=15)
    q = reduce_to_qubo(p)
    res = anneal(q, AnnealSchedule(sweeps=500, restarts=20, seed=3), K=5)
    assert res.states.shape[1] == q.num_vars
    d = random_dataset(rng, 30, 3)
    obj = MarginObjective(d, SIXTH, sixth_betas(1.0), 0.01, FixedPointEncoding(3, 2, 1.0))
    got = anneal(obj, AnnealSchedule(sweeps=200, restarts=10, seed=0), K=5)
    assert got.best_energy == pytest.approx(exhaustive_topk(obj, K=1).best_energy, abs=1e-12)


def test_anneal_is_deterministic_and_energies_are_fresh(rng):
    p = random_cubic_pubo(rng, 14, terms=80)
    s = AnnealSchedule(sweeps=100, restarts=10, seed=42)
    a, b = anneal(p, s, K=30), anneal(p, s, K=30)
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)
    assert np.allclose(a.energies, evaluate(p, a.states), rtol=0, atol=1e-9)
    assert len({bits_to_hex(x) for x in a.states}) == len(a)


def test_long_runs_do_not_drift():
    # 20 restarts x 5000 sweeps x 10 variables = 10^6 proposals
    rng = np.random.default_rng(2)
    p = random_cubic_pubo(rng, 10, terms=50)
    res = anneal(p, AnnealSchedule(beta_initial=0.01, beta_final=0.5, sweeps=5000, restarts=20, seed=0), K=50)
    assert np.max(np.abs(res.energies - p.energy(res.states))) <= 1e-9


def test_more_sweeps_do_not_hurt_on_average():
    rng = np.random.default_rng(9)
    p = random_cubic_pubo(rng, 16, terms=120)
    short = [anneal(p, AnnealSchedule(sweeps=5, restarts=1, seed=s), K=1).best_energy for s in range(20)]
    long = [anneal(p, AnnealSchedule(sweeps=200, restarts=1, seed=s), K=1).best_energy for s in range(20)]
    assert np.mean(long) <= np.mean(short)


def test_schedule_validation():
    with pytest.raises(SolveError):
        AnnealSchedule(beta_initial=2, beta_final=1)
    with pytest.raises(SolveError):
        AnnealSchedule(sweeps=0)
    assert AnnealSchedule(sweeps=1).betas().tolist() == [10.0]


def test_result_json_round_trip(tmp_path, rng):
    p = random_cubic_pubo(rng, 7)
    res = exhaustive_topk(p, K=10)
    res.dump(tmp_path / "s.json")
    back = SolveResult.load(tmp_path / "s.json")
    assert np.array_equal(back.states, res.states)
    assert np.array_equal(back.energies, res.energies)
    assert "wall_time" not in back.metadata
    assert "wall_time" in res.to_json(include_timing=True)["metadata"]


def test_hex_encoding():
    bits = np.array([1, 0, 0, 0, 1], dtype=np.uint8)
    assert bits_to_hex(bits) == "11"
    assert hex_to_bits("11", 5).tolist() == bits.tolist()
    with pytest.raises(SolveError):
        hex_to_bits("ff", 5)
    for N in (1, 4, 9):
        for x in itertools.islice(all_states(N), 0, 2**N, 7):
            assert np.array_equal(hex_to_bits(bits_to_hex(x), N), x)


def test_sa_reaches_ground_state_of_compiled_fig2_instance():
    d, _ = gen_random_classifier_set(300, 9, 1)
    c = fit_cubic_risk(d, 0.01)
    p = compile_objective(d, c, 0.01, FixedPointEncoding(9, 2, 2 / np.sqrt(0.01 * 300)))
    ground = exhaustive_topk(p, K=1).best_energy
    res = anneal(p, AnnealSchedule(restarts=20, seed=5))
    assert np.mean(np.isclose(res.metadata["restart_best"], ground, rtol=0, atol=1e-12)) >= 0.95
