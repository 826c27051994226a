"""Experiment harness: games, validation, tournaments and NTBEA tuning campaigns.

Every game gets its own seed derived from the master seed and the game's
index, so results do not depend on the order in which a worker pool
finishes them.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Callable, Sequence

from r2 import engine
from r2.agents import AgentSpec, BMRHConfig, make_agent
from r2.engine import GameParams
from r2.ntbea import NTBEAConfig, SearchSpace, combine_spaces, ntbea_optimize, weights_space
from r2.valuefn import BudgetExhausted, BudgetMeter, EventValueFunction, Mixer, required_weights
from r2.events import load_mapping

log = logging.getLogger(__name__)

DEFAULT_TURN_BUDGET = 1000
BUDGET_SCHEDULE = (50, 100, 200, 500, 1000, 10000)


class AgentFault(RuntimeError):
    pass


def derive_seed(*keys: Any) -> int:
    """Stable 63-bit seed from any sequence of keys (process independent)."""
    digest = hashlib.blake2b(repr(keys).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


# -- agents and parameters -------------------------------------------------------

BUILTIN_AGENTS = {
    "RND": lambda: AgentSpec("RND", name="RND"),
    "OSLA": lambda: AgentSpec("OSLA", name="OSLA"),
    "BMRH": lambda: AgentSpec("BMRH", "score", asdict(BMRHConfig()), name="BMRH"),
    "SRH": lambda: AgentSpec("SRH", name="SRH"),
    "MCTS": lambda: AgentSpec("MCTS", name="MCTS"),
}


def resolve_agent(ref: Any, base: Path | None = None) -> AgentSpec:
    """AgentSpec from a spec dict, a built-in name, a shipped agent or a JSON file.

    ``{"file": path, "index": i}`` selects one entry of a list file.
    """
    if isinstance(ref, AgentSpec):
        return ref
    if isinstance(ref, dict):
        if "file" in ref:
            return AgentSpec.load(_path(ref["file"], base), int(ref.get("index", 0)))
        return AgentSpec.from_json(ref)
    if ref in BUILTIN_AGENTS:
        return BUILTIN_AGENTS[ref]()
    shipped = resources.files("r2.data").joinpath(f"{ref}.json")
    if shipped.is_file():
        return AgentSpec.from_json(json.loads(shipped.read_text(encoding="utf-8")))
    return AgentSpec.load(_path(ref, base))


def resolve_params(ref: Any, base: Path | None = None) -> GameParams:
    if ref is None:
        return GameParams.standard(2)
    if isinstance(ref, GameParams):
        return ref
    if isinstance(ref, int):
        return GameParams.standard(ref)
    if isinstance(ref, dict):
        return GameParams.from_json(ref)
    if ref in ("standard-2p", "standard-3p", "standard-4p"):
        return GameParams.standard(int(ref[-2]))
    return GameParams.load(_path(ref, base))


def _path(p, base):
    p = Path(p)
    return p if p.is_absolute() or base is None else base / p


# -- single games -------------------------------------------------------------------


@dataclass
class MatchResult:
    game: int
    seed: int
    agents: list[str]
    points: list[int]
    winner: int | None
    turns: int
    capped: bool
    stalled: bool
    max_budget_used: int = 0
    illegal_actions: int = 0
    wall_clock: float = 0.0

    @property
    def tie(self) -> bool:
        return self.winner is None

    def credit(self, seat: int) -> float:
        """1 for a win, 1/players for a tie, 0 otherwise."""
        if self.winner is None:
            return 1.0 / len(self.points)
        return 1.0 if self.winner == seat else 0.0


def run_game(
    agents: Sequence[AgentSpec | dict],
    params: GameParams,
    seed: int,
    budget: int = DEFAULT_TURN_BUDGET,
    determinize: bool = True,
    strict: bool = False,
    game: int = 0,
) -> MatchResult:
    """Play one full game; seat ``i`` is ``agents[i]``.

    Each turn the acting agent gets a fresh meter of ``budget`` forward-model
    actions and, when ``determinize`` is set, a copy of the state with unseen
    cards reshuffled.  ``strict`` turns budget overruns and illegal moves
    into :class:`AgentFault`; otherwise illegal moves are replaced by a random
    legal one and counted.
    """
    if len(agents) != params.num_players:
        raise ValueError(f"{len(agents)} agents for a {params.num_players}-player game")
    players = [make_agent(a) for a in agents]
    start = time.perf_counter()
    s = engine.new_game(params, seed=seed)
    max_used = 0
    illegal = 0
    while not s.finished:
        p = s.current
        obs = engine.determinize(s, p, derive_seed(seed, "obs", s.tick)) if determinize else s.copy()
        meter = BudgetMeter(budget, strict=strict)
        try:
            a = players[p].act(obs, meter, derive_seed(seed, players[p].spec.seed, "act", s.tick))
        except BudgetExhausted as exc:
            raise AgentFault(f"{players[p].name} exceeded its budget: {exc}") from exc
        max_used = max(max_used, meter.used)
        if meter.used > budget and strict:
            raise AgentFault(f"{players[p].name} used {meter.used} > {budget}")
        if not engine.is_legal(s, a):
            if strict:
                raise AgentFault(f"{players[p].name} returned illegal action {a}")
            illegal += 1
            a = engine.sample_action(s, derive_seed(seed, "repair", s.tick))
        engine.apply_action(s, a)
    return MatchResult(
        game=game,
        seed=seed,
        agents=[pl.name for pl in players],
        points=[pl.points for pl in s.players],
        winner=engine.winner(s),
        turns=s.tick,
        capped=s.capped,
        stalled=s.stalled,
        max_budget_used=max_used,
        illegal_actions=illegal,
        wall_clock=time.perf_counter() - start,
    )


@dataclass
class GameTask:
    game: int
    agents: list[dict]
    params: dict
    seed: int
    budget: int
    determinize: bool = True
    strict: bool = False


def _run_task(task: GameTask) -> MatchResult:
    return run_game(
        [AgentSpec.from_json(a) for a in task.agents],
        GameParams.from_json(task.params),
        task.seed,
        task.budget,
        task.determinize,
        task.strict,
        task.game,
    )


def run_tasks(tasks: Sequence[GameTask], jobs: int = 1) -> list[MatchResult]:
    """Run games, in a worker pool when ``jobs > 1``; output keeps task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with Pool(jobs) as pool:
        return pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))


def rotation_tasks(
    candidate: AgentSpec,
    opponents: Sequence[AgentSpec],
    n: int,
    params: GameParams,
    seed: int,
    budget: int,
    tag: str = "",
    determinize: bool = True,
    strict: bool = False,
) -> list[GameTask]:
    """``n`` games with the candidate rotating through every seat.

    Consecutive blocks of ``num_players`` games share a deal, so each deal is
    played once from every seat.
    """
    k = params.num_players
    if len(opponents) != k - 1:
        raise ValueError(f"need {k - 1} opponents for {k} players")
    tasks = []
    for g in range(n):
        seat = g % k
        lineup = list(opponents)
        lineup.insert(seat, candidate)
        tasks.append(
            GameTask(
                g,
                [a.to_json() for a in lineup],
                params.to_json(),
                derive_seed(seed, tag, g // k),
                budget,
                determinize,
                strict,
            )
        )
    return tasks


def candidate_seat(result: MatchResult, num_players: int) -> int:
    return result.game % num_players


# -- statistics ---------------------------------------------------------------------


def ci_bounds(wins: float, ties: float, n: int) -> tuple[float, float]:
    """Win rate with ties counted half, and the 95% normal half-width."""
    if n < 1:
        raise ValueError("need at least one game")
    p = (wins + 0.5 * ties) / n
    return p, 1.96 * math.sqrt(p * (1 - p) / n)


@dataclass
class Validation:
    candidate: str
    opponent: str
    games: int
    wins: int
    ties: int
    losses: int

    @property
    def win_rate(self) -> float:
        return ci_bounds(self.wins, self.ties, self.games)[0]

    @property
    def half_width(self) -> float:
        return ci_bounds(self.wins, self.ties, self.games)[1]


def summarize(results: Sequence[MatchResult], candidate: str, opponent: str, num_players: int) -> Validation:
    wins = ties = losses = 0
    for r in results:
        if r.winner is None:
            ties += 1
        elif r.winner == candidate_seat(r, num_players):
            wins += 1
        else:
            losses += 1
    return Validation(candidate, opponent, len(results), wins, ties, losses)


def validate(
    candidate: AgentSpec,
    opponent: AgentSpec,
    n: int,
    params: GameParams | None = None,
    seed: int = 0,
    budget: int = DEFAULT_TURN_BUDGET,
    jobs: int = 1,
    tag: str = "validate",
) -> tuple[Validation, list[MatchResult]]:
    """Two-player validation with seat alternation (ties count half)."""
    if n < 1:
        raise ValueError("need n >= 1")
    params = params or GameParams.standard(2)
    tasks = rotation_tasks(candidate, [opponent], n, params, seed, budget, tag)
    results = run_tasks(tasks, jobs)
    return summarize(results, candidate.name, opponent.name, 2), results


@dataclass
class WinRateTable:
    names: list[str]
    # credits[i][j]: points scored by i against j; games[i][j]: games played
    credits: list[list[float]] = field(default_factory=list)
    games: list[list[int]] = field(default_factory=list)

    def rate(self, i: int, j: int) -> float:
        """Win percentage of row ``i`` against column ``j``."""
        return 100.0 * self.credits[i][j] / self.games[i][j] if self.games[i][j] else float("nan")

    def half_width(self, i: int, j: int) -> float:
        n = self.games[i][j]
        if not n:
            return float("nan")
        return 100.0 * ci_bounds(self.credits[i][j], 0, n)[1]

    def average(self, i: int) -> float:
        rates = [self.rate(i, j) for j in range(len(self.names)) if j != i and self.games[i][j]]
        return sum(rates) / len(rates) if rates else float("nan")


def round_robin(
    agents: Sequence[AgentSpec],
    games_per_pair: int,
    params: GameParams | None = None,
    seed: int = 0,
    budget: int = DEFAULT_TURN_BUDGET,
    jobs: int = 1,
) -> tuple[WinRateTable, list[MatchResult]]:
    if len(agents) < 2:
        raise ValueError("round robin needs at least two agents")
    params = params or GameParams.standard(2)
    names = [a.name for a in agents]
    if len(set(names)) != len(names):
        raise ValueError("agent names must be unique in a tournament")
    pairs = [(i, j) for i in range(len(agents)) for j in range(i + 1, len(agents))]
    tasks, owners = [], []
    for i, j in pairs:
        for t in rotation_tasks(agents[i], [agents[j]], games_per_pair, params, seed, budget, f"rr{i}-{j}"):
            t.game = len(tasks)
            tasks.append(t)
            owners.append((i, j, t.seed))
    results = run_tasks(tasks, jobs)
    k = len(agents)
    table = WinRateTable(names, [[0.0] * k for _ in range(k)], [[0] * k for _ in range(k)])
    pair_counter: dict[tuple[int, int], int] = {}
    for r, (i, j, _) in zip(results, owners):
        g = pair_counter.get((i, j), 0)
        pair_counter[(i, j)] = g + 1
        seat_i = g % 2
        ci = r.credit(seat_i)
        table.credits[i][j] += ci
        table.credits[j][i] += 1.0 - ci
        table.games[i][j] += 1
        table.games[j][i] += 1
    return table, results


@dataclass
class MultiOpponent:
    validation: Validation
    num_players: int
    baseline: float | None

    @property
    def win_pct(self) -> float:
        return 100.0 * self.validation.win_rate

    @property
    def target(self) -> float:
        return 100.0 / self.num_players

    @property
    def delta(self) -> float | None:
        return None if self.baseline is None else self.win_pct - self.baseline


def multi_opponent(
    candidate: AgentSpec,
    opponent: AgentSpec,
    num_opponents: int,
    n: int,
    baseline: float | None = None,
    params: GameParams | None = None,
    seed: int = 0,
    budget: int = DEFAULT_TURN_BUDGET,
    jobs: int = 1,
) -> tuple[MultiOpponent, list[MatchResult]]:
    """Candidate against ``num_opponents`` copies of ``opponent``, rotating seats.

    ``baseline`` is the candidate's two-player win percentage; the reported
    delta is observed minus baseline.
    """
    params = params or GameParams.standard(num_opponents + 1)
    if params.num_players != num_opponents + 1:
        raise ValueError("params player count must equal num_opponents + 1")
    tasks = rotation_tasks(candidate, [opponent] * num_opponents, n, params, seed, budget, "multi")
    results = run_tasks(tasks, jobs)
    v = summarize(results, candidate.name, opponent.name, params.num_players)
    return MultiOpponent(v, params.num_players, baseline), results


def delta_vs_baseline(observed_pct: float, baseline_pct: float) -> float:
    return observed_pct - baseline_pct


# -- tuning ---------------------------------------------------------------------------


def bmrh_space() -> SearchSpace:
    text = resources.files("r2.data").joinpath("bmrh_space.json").read_text(encoding="utf-8")
    return SearchSpace.from_json(json.loads(text))


@dataclass
class TuningTarget:
    """What is tuned: BMRH alone (``mapping=None``) or BMRH plus EF weights."""

    mapping: str | None = None
    mixer: str = "linear"
    degree: int = 1
    space: SearchSpace | None = None

    def mixer_obj(self) -> Mixer | None:
        if self.mapping is None:
            return None
        groups = load_mapping(self.mapping).group_count
        return Mixer(self.mixer, groups, self.degree if self.mixer == "polynomial" else 1)

    def search_space(self) -> SearchSpace:
        base = self.space or bmrh_space()
        mixer = self.mixer_obj()
        if mixer is None:
            return base
        return combine_spaces(base, weights_space(required_weights(mixer)))

    def label(self) -> str:
        if self.mapping is None:
            return "BMRH(score)"
        if self.mixer == "linear":
            return f"BMRH+lin_{self.mapping}"
        return f"BMRH+poly{self.degree}_{self.mapping}"

    def to_spec(self, candidate, seed: int = 0, name: str = "") -> AgentSpec:
        space = self.search_space()
        values = space.decode(candidate)
        base_names = (self.space or bmrh_space()).names
        hyper = {k: values[k] for k in base_names}
        vf: Any = "score"
        mixer = self.mixer_obj()
        if mixer is not None:
            weights = [values[f"w{i}"] for i in range(required_weights(mixer))]
            vf = EventValueFunction(load_mapping(self.mapping), mixer, tuple(weights)).to_json()
        return AgentSpec("BMRH", vf, hyper, seed, name or self.label())

    @classmethod
    def from_json(cls, data: dict[str, Any] | str | None) -> TuningTarget:
        if data is None or data == "score":
            return cls()
        vf = data.get("value_function", data)
        if vf == "score":
            return cls()
        mixer = vf.get("mixer", {"kind": "linear"})
        return cls(vf["mapping"], mixer.get("kind", "linear"), int(mixer.get("degree", 1)))


def game_fitness(
    target: TuningTarget,
    opponent: AgentSpec,
    params: GameParams,
    budget: int,
) -> Callable:
    """One game against ``opponent``: 1 win, 0.5 tie, 0 loss.  Seat follows seed parity."""

    def fitness(candidate, eval_seed: int) -> float:
        spec = target.to_spec(candidate)
        seat = eval_seed & 1
        lineup = [opponent]
        lineup.insert(seat, spec)
        r = run_game(lineup, params, eval_seed, budget)
        if r.winner is None:
            return 0.5
        return 1.0 if r.winner == seat else 0.0

    return fitness


@dataclass
class TuningRun:
    repetition: int
    spec: AgentSpec
    history: list[tuple[int, tuple, float]]


def _tune_one(args) -> TuningRun:
    rep, target, opponent, params, ntbea_cfg, budget, seed = args
    space = target.search_space()
    fitness = game_fitness(target, opponent, params, budget)
    res = ntbea_optimize(space, fitness, ntbea_cfg, derive_seed(seed, "tune", rep))
    spec = target.to_spec(res.best, seed=rep, name=f"{target.label()}#{rep}")
    return TuningRun(rep, spec, res.history)


def tune(
    target: TuningTarget,
    opponent: AgentSpec,
    ntbea_cfg: NTBEAConfig,
    repetitions: int = 1,
    params: GameParams | None = None,
    seed: int = 0,
    budget: int = DEFAULT_TURN_BUDGET,
    jobs: int = 1,
) -> list[TuningRun]:
    """Independent NTBEA runs over the target's space; one game per evaluation."""
    params = params or GameParams.standard(2)
    args = [(rep, target, opponent, params, ntbea_cfg, budget, seed) for rep in range(repetitions)]
    if jobs <= 1 or repetitions <= 1:
        return [_tune_one(a) for a in args]
    with Pool(jobs) as pool:
        return pool.map(_tune_one, args, chunksize=1)


@dataclass
class TrendPoint:
    ntbea_budget: int
    win_rates: list[float]

    @property
    def median(self) -> float:
        return statistics.median(self.win_rates)


def tuning_trend(
    budgets: Sequence[int],
    repetitions: int,
    validation_games: int,
    opponent: AgentSpec,
    target: TuningTarget | None = None,
    params: GameParams | None = None,
    seed: int = 0,
    turn_budget: int = DEFAULT_TURN_BUDGET,
    jobs: int = 1,
    ntbea_kwargs: dict | None = None,
    progress: Callable[[str], None] | None = None,
) -> list[TrendPoint]:
    """Tune at each NTBEA budget, validate every tuned spec, collect win rates."""
    target = target or TuningTarget()
    params = params or GameParams.standard(2)
    points = []
    for b in budgets:
        cfg = NTBEAConfig(budget=b, **(ntbea_kwargs or {}))
        runs = tune(target, opponent, cfg, repetitions, params, derive_seed(seed, b), turn_budget, jobs)
        rates = []
        for run in runs:
            v, _ = validate(run.spec, opponent, validation_games, params, derive_seed(seed, b, run.repetition),
                            turn_budget, jobs)
            rates.append(v.win_rate)
            if progress:
                progress(f"budget {b} rep {run.repetition}: {100 * v.win_rate:.1f}%")
        points.append(TrendPoint(b, rates))
    return points
