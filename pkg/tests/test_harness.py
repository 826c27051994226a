import csv
import json
import logging
import math
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from r2 import cli, harness
from r2.agents import AgentSpec, bmrh_spec
from r2.engine import GameParams
from r2.harness import (
    AgentFault,
    TuningTarget,
    ci_bounds,
    delta_vs_baseline,
    derive_seed,
    multi_opponent,
    resolve_agent,
    resolve_params,
    rotation_tasks,
    round_robin,
    run_game,
    run_tasks,
    tune,
    validate,
)
from r2.ntbea import NTBEAConfig

RND = AgentSpec("RND", name="RND")
OSLA = AgentSpec("OSLA", name="OSLA")
P2 = GameParams.standard(2)


# -- statistics -------------------------------------------------------------------------


@pytest.mark.parametrize(
    "wins,ties,n,p,hw",
    [(5000, 0, 10000, 0.5, 0.0098), (0, 0, 10, 0.0, 0.0), (30, 40, 100, 0.5, 0.098)],
)
def test_ci_bounds_examples(wins, ties, n, p, hw):
    got_p, got_hw = ci_bounds(wins, ties, n)
    assert got_p == pytest.approx(p)
    assert got_hw == pytest.approx(hw, abs=1e-4)


@given(st.integers(1, 500), st.data())
def test_ci_bounds_formula(n, data):
    wins = data.draw(st.integers(0, n))
    ties = data.draw(st.integers(0, n - wins))
    p, hw = ci_bounds(wins, ties, n)
    assert 0 <= p <= 1
    assert hw == pytest.approx(1.96 * math.sqrt(p * (1 - p) / n))


def test_ci_bounds_needs_games():
    with pytest.raises(ValueError):
        ci_bounds(0, 0, 0)


def test_delta():
    assert delta_vs_baseline(55.0, 60.0) == pytest.approx(-5.0)


def test_derive_seed_is_stable():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert 0 <= derive_seed("x") < 2**63


# -- games ------------------------------------------------------------------------------------


def test_run_game_is_deterministic():
    a = run_game([RND, RND], P2, seed=5)
    b = run_game([RND, RND], P2, seed=5)
    a.wall_clock = b.wall_clock = 0.0
    assert a == b
    assert a.points[a.winner] >= 15


def test_wrong_agent_count():
    with pytest.raises(ValueError):
        run_game([RND] * 4, P2, seed=0)


def test_strict_mode_accepts_compliant_agents():
    r = run_game([bmrh_spec(), OSLA], P2, seed=2, budget=50, strict=True)
    assert r.max_budget_used <= 50
    assert r.illegal_actions == 0


def test_strict_mode_faults_on_illegal_action(monkeypatch):
    from r2 import agents
    from r2.engine import Action, Kind

    monkeypatch.setattr(agents, "act_rnd", lambda s, seed: Action(Kind.TAKE_SAME, (9,)))
    with pytest.raises(AgentFault):
        run_game([RND, RND], P2, seed=0, strict=True)
    r = run_game([RND, RND], P2, seed=0)
    assert r.illegal_actions > 0


def test_random_play_seat_balance():
    results = run_tasks(rotation_tasks(RND, [AgentSpec("RND", seed=1, name="RND1")], 1000, P2, 3, 1000))
    first = sum(r.credit(0) for r in results) / len(results)
    assert 0.40 <= first <= 0.60
    assert not any(r.capped for r in results)


@pytest.mark.parametrize("players,n", [(2, 10), (4, 12), (3, 9)])
def test_seat_fairness(players, n):
    params = GameParams.standard(players)
    tasks = rotation_tasks(OSLA, [RND] * (players - 1), n, params, 0, 10)
    seats = [[a["name"] for a in t.agents].index("OSLA") for t in tasks]
    assert all(seats.count(k) == n // players for k in range(players))
    # each block of games shares one deal
    assert len({t.seed for t in tasks}) == n // players


# -- validation and tournaments --------------------------------------------------------------


def test_self_play_is_even():
    v, _ = validate(RND, RND, 40, P2, seed=1)
    assert v.win_rate == pytest.approx(0.5)


def test_single_game_rate():
    v, _ = validate(OSLA, RND, 1, P2, seed=1, budget=20)
    assert v.win_rate in (0.0, 0.5, 1.0)


def test_round_robin_arithmetic():
    agents = [RND, AgentSpec("RND", seed=7, name="RND7"), AgentSpec("OSLA", name="OSLA")]
    table, results = round_robin(agents, 6, P2, seed=0, budget=10)
    assert len(results) == 18
    for i in range(3):
        for j in range(3):
            if i != j:
                assert table.games[i][j] == 6
                assert table.rate(i, j) + table.rate(j, i) == pytest.approx(100.0)
    assert table.average(2) == pytest.approx((table.rate(2, 0) + table.rate(2, 1)) / 2)


def test_round_robin_rejects_duplicate_names():
    with pytest.raises(ValueError):
        round_robin([RND, RND], 2, P2)


def test_multi_opponent_shape():
    m, results = multi_opponent(RND, RND, 3, 8, baseline=50.0, seed=0)
    assert m.num_players == 4 and m.target == 25.0
    assert len(results) == 8
    assert m.delta == pytest.approx(m.win_pct - 50.0)
    with pytest.raises(ValueError):
        multi_opponent(RND, RND, 3, 4, params=P2)


# -- resolution ---------------------------------------------------------------------------------


def test_resolve_agents_and_params(tmp_path):
    assert resolve_agent("OSLA").kind == "OSLA"
    spec = bmrh_spec(seed=4, name="mine")
    path = tmp_path / "a.json"
    path.write_text(json.dumps([RND.to_json(), spec.to_json()]))
    assert resolve_agent({"file": "a.json", "index": 1}, tmp_path) == spec
    assert resolve_params("standard-4p").num_players == 4
    assert resolve_params(3) == GameParams.standard(3)


# -- tuning --------------------------------------------------------------------------------------


def test_tuning_targets():
    assert len(TuningTarget().search_space()) == 10
    hc = TuningTarget("hc", "linear")
    assert len(hc.search_space()) == 15
    assert len(TuningTarget("id", "polynomial", 2).search_space()) == 181
    spec = hc.to_spec((0,) * 15)
    assert spec.value_function["weights"] == [-1.0] * 5
    assert spec.hyperparameters["sequence_length"] == 1


def test_tune_protocol_arithmetic():
    runs = tune(TuningTarget(), RND, NTBEAConfig(budget=50), repetitions=10, params=P2, seed=0, budget=5)
    assert len(runs) == 10
    assert sum(len(r.history) for r in runs) == 500
    assert all(f in (0.0, 0.5, 1.0) for r in runs for _, _, f in r.history)
    assert len({json.dumps(r.spec.to_json()) for r in runs}) > 1


# -- CLI --------------------------------------------------------------------------------------------


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def _read(path):
    return path.read_bytes()


def test_cli_play_and_results_columns(tmp_path):
    spec = _write(tmp_path, "play.json", {"kind": "play", "agents": ["RND", "OSLA"], "games": 3, "turn_budget": 10})
    assert cli.main(["play", "--spec", str(spec), "--out", str(tmp_path / "o"), "--seed", "1"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "o" / "results.csv")))
    assert len(rows) == 3
    assert rows[0]["agent1"] == "OSLA"


def test_cli_rejects_mismatched_kind(tmp_path):
    spec = _write(tmp_path, "s.json", {"kind": "tune"})
    assert cli.main(["play", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2


def test_cli_tune_reports_space(tmp_path, caplog):
    spec = _write(tmp_path, "tune.json", {
        "kind": "tune", "opponent": "RND", "turn_budget": 5, "repetitions": 2,
        "target": {"value_function": {"mapping": "hc", "mixer": {"kind": "linear"}}},
        "ntbea": {"budget": 4}, "validation_games": 2,
    })
    out = tmp_path / "o"
    with caplog.at_level(logging.INFO, logger="r2"):
        cli.main(["tune", "--spec", str(spec), "--out", str(out), "--seed", "3", "-v"])
    assert "15-dim space" in caplog.text
    header = (out / "tuning.csv").read_text().splitlines()[0].split(",")
    assert header[:2] == ["repetition", "iteration"] and header[-1] == "fitness"
    assert len(header) == 2 + 15 + 1
    tuned = json.loads((out / "agent.json").read_text())
    assert len(tuned) == 2 and len(tuned[0]["value_function"]["weights"]) == 5
    assert len((out / "validation.csv").read_text().splitlines()) == 3


CLI_SPECS = {
    "play": {"agents": ["RND", "OSLA"], "games": 4, "turn_budget": 10},
    "validate": {"candidate": "OSLA", "opponent": "RND", "games": 4, "turn_budget": 10},
    "roundrobin": {"agents": ["RND", "OSLA", "BMRH"], "games_per_pair": 2, "turn_budget": 10},
    "multi": {"candidate": "OSLA", "opponent": "RND", "num_opponents": 3, "games": 4, "turn_budget": 10,
              "baseline": 60},
    "tune": {"opponent": "RND", "turn_budget": 5, "repetitions": 2, "ntbea": {"budget": 3}},
}


@pytest.mark.parametrize("command", sorted(CLI_SPECS))
def test_cli_reruns_are_byte_identical(tmp_path, command):
    spec = _write(tmp_path, "spec.json", {"kind": command, **CLI_SPECS[command]})
    outs = []
    for run, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"out{run}"
        cli.main([command, "--spec", str(spec), "--out", str(out), "--seed", "11", "--jobs", jobs])
        outs.append({p.name: _read(p) for p in sorted(out.iterdir())})
    assert outs[0] == outs[1] == outs[2]
    assert outs[0]


def test_cli_four_decimal_floats(tmp_path):
    spec = _write(tmp_path, "v.json", {"kind": "validate", **CLI_SPECS["validate"]})
    cli.main(["validate", "--spec", str(spec), "--out", str(tmp_path / "o"), "--seed", "0"])
    row = list(csv.DictReader(open(tmp_path / "o" / "validation.csv")))[0]
    assert len(row["win_pct"].split(".")[1]) == 4


EXPERIMENTS = sorted((Path(__file__).parent.parent / "experiments").glob("*.json"))


@pytest.mark.parametrize("path", EXPERIMENTS, ids=lambda p: p.stem)
def test_shipped_experiment_specs_resolve(path):
    spec = json.loads(path.read_text())
    assert spec["kind"] in cli.COMMANDS
    refs = list(spec.get("agents", [])) + [spec[k] for k in ("candidate", "opponent") if k in spec]
    assert all(isinstance(resolve_agent(r, path.parent), AgentSpec) for r in refs)
    if spec["kind"] == "tune":
        assert len(TuningTarget.from_json(spec["target"]).search_space()) in (10, 15, 181)


def test_shipped_bmrh_star():
    star = resolve_agent("bmrh_star")
    assert star.name == "BMRH*" and star.kind == "BMRH"
    assert set(star.hyperparameters) == set(harness.bmrh_space().names)
