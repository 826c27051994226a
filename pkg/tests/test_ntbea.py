import json
import math
import random
from importlib import resources

import pytest
from hypothesis import given, strategies as st

from r2.ntbea import (
    NTBEAConfig,
    NTupleModel,
    SearchSpace,
    SpaceError,
    combine_spaces,
    mutate_neighbor,
    mutation_probability,
    ntbea_optimize,
    tuple_indices,
    ucb_estimate,
    weights_space,
    write_history,
)
from r2.valuefn import WEIGHT_GRID, Mixer, required_weights

from benchmarks import (
    MAX_VALUE_SPACE,
    ONEMAX_SPACE,
    brute_force_optimum,
    expected_onemax,
    max_value,
    noisy_onemax,
)


def bmrh_space():
    text = resources.files("r2.data").joinpath("bmrh_space.json").read_text()
    return SearchSpace.from_json(json.loads(text))


# -- spaces -----------------------------------------------------------------------------


def test_space_validation():
    with pytest.raises(SpaceError):
        SearchSpace.of([("a", [1])])
    with pytest.raises(SpaceError):
        SearchSpace.of([("a", [1, 2]), ("a", [3, 4])])


def test_space_size_and_decode():
    space = SearchSpace.of([("a", [1, 2]), ("b", "xyz")])
    assert space.size == 6
    assert space.decode((1, 2)) == {"a": 2, "b": "z"}


def test_shipped_bmrh_space_has_ten_dims():
    assert len(bmrh_space()) == 10


def test_combined_space_sizes():
    bmrh = bmrh_space()
    hc = combine_spaces(bmrh, weights_space(required_weights(Mixer("linear", 5))))
    assert len(hc) == 15
    assert hc.size == bmrh.size * 11**5
    poly = combine_spaces(bmrh, weights_space(required_weights(Mixer("polynomial", 18, 2))))
    assert len(poly) == 181
    assert combine_spaces(bmrh, SearchSpace()) == bmrh


def test_combine_rejects_clash():
    with pytest.raises(SpaceError):
        combine_spaces(weights_space(2), weights_space(3))


def test_space_json_round_trip(tmp_path):
    path = tmp_path / "space.json"
    path.write_text(json.dumps(bmrh_space().to_json()))
    assert SearchSpace.load(path) == bmrh_space()


@given(st.integers(1, 30), st.integers(0, 2**32))
def test_weight_dims_stay_on_grid(n, seed):
    space = weights_space(n)
    rng = random.Random(seed)
    c = space.random(rng)
    for _ in range(5):
        c = mutate_neighbor(c, space, 0.7, rng)
        assert all(v in WEIGHT_GRID for v in space.decode(c).values())


# -- model and UCB -------------------------------------------------------------------------


def test_tuple_schemes():
    assert tuple_indices(3, "1+2+N") == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
    assert tuple_indices(3, "1+N") == [(0,), (1,), (2,), (0, 1, 2)]
    assert len(tuple_indices(4, "all")) == 15
    with pytest.raises(ValueError):
        tuple_indices(3, "2")


def test_ucb_single_observation_example():
    model = NTupleModel(1, "1+N")
    assert model.tuples == [(0,)]
    model.add((0,), 1.0)
    assert ucb_estimate(model, (0,), 1.0) == pytest.approx(1.0 + math.sqrt(math.log(2) / 1), abs=1e-5)
    assert ucb_estimate(model, (0,), 1.0) == pytest.approx(1.832, abs=1e-3)


def test_ucb_without_exploration_is_the_mean():
    model = NTupleModel(2)
    for c, f in [((0, 0), 1.0), ((0, 0), 0.0), ((0, 0), 0.5)]:
        model.add(c, f)
    assert ucb_estimate(model, (0, 0), 0.0) == pytest.approx(0.5)


def test_unvisited_outranks_visited():
    model = NTupleModel(2)
    for _ in range(20):
        model.add((0, 0), 1.0)
    assert ucb_estimate(model, (1, 1), 1.0) > ucb_estimate(model, (0, 0), 1.0)


@given(st.lists(st.tuples(st.tuples(st.integers(0, 2), st.integers(0, 2), st.integers(0, 2)),
                          st.floats(-5, 5, allow_nan=False)), min_size=1, max_size=40))
def test_model_faithfulness(evals):
    model = NTupleModel(3)
    for c, f in evals:
        model.add(c, f)
    assert model.evaluations == len(evals)
    for pos, idx in enumerate(model.tuples):
        for pattern in {tuple(c[i] for i in idx) for c, _ in evals}:
            matching = [f for c, f in evals if tuple(c[i] for i in idx) == pattern]
            n, mean = model.stats(pos, pattern)
            assert n == len(matching)
            assert mean == pytest.approx(sum(matching) / len(matching), abs=1e-9)


# -- neighbourhood ----------------------------------------------------------------------------


def changed(a, b):
    return sum(x != y for x, y in zip(a, b))


def test_epsilon_one_changes_one_dim():
    space = bmrh_space()
    rng = random.Random(0)
    c = space.random(rng)
    for _ in range(1000):
        assert changed(c, mutate_neighbor(c, space, 1.0, rng)) == 1


def test_epsilon_zero_changes_everything():
    space = SearchSpace.of([("a", range(4)), ("b", range(4))])
    rng = random.Random(0)
    for _ in range(1000):
        c = space.random(rng)
        assert changed(c, mutate_neighbor(c, space, 0.0, rng)) == 2


def test_single_dim_fraction_matches_epsilon():
    space = bmrh_space()
    rng = random.Random(1)
    c = space.random(rng)
    singles = sum(changed(c, mutate_neighbor(c, space, 0.7, rng)) == 1 for _ in range(10_000))
    assert abs(singles / 10_000 - 0.7) <= 0.02


def test_mutation_probability_formula():
    q = mutation_probability(10, 0.7)
    assert (1 - q) ** 9 == pytest.approx(0.7)
    assert mutation_probability(1, 0.7) == 0.0


# -- optimiser -----------------------------------------------------------------------------------


def test_config_validation():
    for bad in ({"k": -1}, {"epsilon": 1.5}, {"budget": 0}, {"neighborhood_size": 0}):
        with pytest.raises(ValueError):
            NTBEAConfig(**bad)


def test_budget_one_returns_initial_candidate():
    res = ntbea_optimize(MAX_VALUE_SPACE, max_value, NTBEAConfig(budget=1), seed=4)
    assert res.best == MAX_VALUE_SPACE.random(random.Random(4))


@pytest.mark.parametrize("budget", [1, 7, 60])
def test_exact_evaluation_count(budget):
    calls = []

    def fitness(c, s):
        calls.append(c)
        return max_value(c)

    res = ntbea_optimize(MAX_VALUE_SPACE, fitness, NTBEAConfig(budget=budget), seed=0)
    assert len(calls) == budget == res.evaluations == res.model.evaluations
    assert [c for _, c, _ in res.history] == calls


def test_deterministic_under_seeded_noise():
    cfg = NTBEAConfig(budget=80)
    a = ntbea_optimize(ONEMAX_SPACE, noisy_onemax, cfg, seed=12)
    b = ntbea_optimize(ONEMAX_SPACE, noisy_onemax, cfg, seed=12)
    assert a.best == b.best and a.history == b.history


def test_returns_best_model_mean_not_luckiest_sample():
    res = ntbea_optimize(ONEMAX_SPACE, noisy_onemax, NTBEAConfig(budget=100), seed=3)
    evaluated = {c for _, c, _ in res.history}
    assert res.best in evaluated
    assert res.model.mean_estimate(res.best) == max(res.model.mean_estimate(c) for c in evaluated)


def test_oracles_agree_on_optima():
    assert brute_force_optimum(MAX_VALUE_SPACE, max_value) == (10,) * 5
    assert brute_force_optimum(ONEMAX_SPACE, expected_onemax) == (1,) * 10


def test_small_recovery_smoke():
    hits = sum(
        ntbea_optimize(MAX_VALUE_SPACE, max_value, NTBEAConfig(budget=300), seed=s).best == (10,) * 5
        for s in range(10)
    )
    assert hits >= 8


def test_history_csv(tmp_path):
    res = ntbea_optimize(MAX_VALUE_SPACE, max_value, NTBEAConfig(budget=5), seed=0)
    path = tmp_path / "h.csv"
    write_history(res.history, MAX_VALUE_SPACE, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,d0,d1,d2,d3,d4,fitness"
    assert len(lines) == 6
