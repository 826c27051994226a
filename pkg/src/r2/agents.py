"""Statistical forward-planning agents.

Every planner spends a :class:`BudgetMeter` of forward-model action
applications per turn; opponents simulated inside a plan cost budget too.
Agents see whatever state the harness hands them (normally a determinized
copy) and must return an action legal in it.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

from r2 import engine
from r2.engine import PASS, Action, GameState
from r2.events import EventLogger
from r2.valuefn import (
    BudgetMeter,
    Rollout,
    ScoreValueFunction,
    ValueFunction,
    load_value_function,
    rollout,
)

AGENT_KINDS = ("RND", "OSLA", "BMRH", "SRH", "MCTS")
MUTATION_POINTS = ("uniform", "geometric0.5", "geometric0.8")


@dataclass
class BMRHConfig:
    sequence_length: int = 2
    population_size: int = 10
    elite_count: int = 2
    mutation_point: str = "uniform"
    offspring_per_parent: int = 2
    shift_buffer: bool = True
    evaluations_per_sequence: int = 1
    value_discount: float = 1.0
    opponent_model: str = "random"
    tie_break: str = "first"

    def __post_init__(self):
        if self.sequence_length < 1 or self.population_size < 1:
            raise ValueError("sequence_length and population_size must be >= 1")
        if self.mutation_point not in MUTATION_POINTS:
            raise ValueError(f"unknown mutation point distribution {self.mutation_point!r}")
        if self.tie_break not in ("first", "randomized"):
            raise ValueError(f"unknown tie break {self.tie_break!r}")

    @property
    def elites(self) -> int:
        # the tuned space can propose more elites than individuals
        return max(1, min(self.elite_count, self.population_size))


@dataclass
class SRHConfig:
    sequence_length: int = 2
    population_size: int = 10
    elite_count: int = 2
    offspring_per_parent: int = 2
    value_discount: float = 1.0
    opponent_model: str = "random"


@dataclass
class MCTSConfig:
    exploration_constant: float = 1.0
    max_depth: int = 3
    widening_base: float = 2.0
    widening_exponent: float = 0.5
    rollout_length: int = 2
    opponent_model: str = "random"

    def __post_init__(self):
        if self.max_depth < 1 or self.widening_base <= 0 or self.widening_exponent <= 0 or self.rollout_length < 0:
            raise ValueError("MCTS parameters must be positive")


CONFIGS = {"BMRH": BMRHConfig, "SRH": SRHConfig, "MCTS": MCTSConfig}


def _config_from(cls, hyperparameters: dict[str, Any]):
    names = {f.name for f in fields(cls)}
    unknown = set(hyperparameters) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} hyperparameters: {sorted(unknown)}")
    return cls(**hyperparameters)


# -- RND / OSLA -----------------------------------------------------------------


def act_rnd(s: GameState, seed: int | random.Random) -> Action:
    return engine.sample_action(s, seed)


def act_osla(s: GameState, vf: ValueFunction, budget: int | BudgetMeter, seed: int | random.Random) -> Action:
    """Sample up to ``budget`` actions, evaluate each one step ahead, keep the best.

    Duplicate samples are not re-evaluated; ties keep the first action found.
    """
    meter = budget if isinstance(budget, BudgetMeter) else BudgetMeter(budget)
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    player = s.current
    seen: set[Action] = set()
    best, best_value = None, -math.inf
    for _ in range(max(1, meter.remaining)):
        a = engine.sample_action(s, rng)
        if best is None:
            best = a
        if a in seen:
            continue
        seen.add(a)
        if meter.remaining <= 0:
            break
        value = rollout(s, player, (a,), 1, vf, rng, meter).value
        if value > best_value:
            best, best_value = a, value
    return best


# -- BMRH -------------------------------------------------------------------------


def sample_mutation_point(rng: random.Random, length: int, distribution: str) -> int:
    """Mutation point in ``[0, length)``."""
    if distribution == "uniform" or length == 1:
        return rng.randrange(length)
    p = float(distribution[len("geometric"):])
    while True:
        k = 0
        while rng.random() >= p:
            k += 1
        if k < length:
            return k


def branching_mutation(
    s: GameState,
    parent: Sequence[Action],
    rng: random.Random,
    meter: BudgetMeter | None,
    vf: ValueFunction | None = None,
    point: int | None = None,
    distribution: str = "uniform",
    opponent: str = "random",
    discount: float = 1.0,
    player: int | None = None,
) -> Rollout:
    """Copy ``parent`` up to the mutation point, then resample while rolling the state.

    The roll that builds the child also evaluates it, so ``.value`` is the
    child's first evaluation and ``.actions`` the child sequence.
    """
    length = len(parent)
    if point is None:
        point = sample_mutation_point(rng, length, distribution)
    if not 0 <= point < length:
        raise ValueError(f"mutation point {point} outside [0, {length})")
    vf = vf or ScoreValueFunction()
    player = s.current if player is None else player
    return rollout(s, player, parent, length, vf, rng, meter, opponent, discount, keep_prefix=point)


@dataclass
class _Individual:
    actions: list[Action]
    total: float
    evaluations: int
    order: int
    tiebreak: float = 0.0

    @property
    def value(self) -> float:
        return self.total / self.evaluations


def _reevaluate(ind: _Individual, s, player, vf, rng, meter, opponent, discount, times: int) -> None:
    for _ in range(times):
        if meter.remaining <= 0:
            return
        r = rollout(s, player, ind.actions, len(ind.actions), vf, rng, meter, opponent, discount)
        ind.total += r.value
        ind.evaluations += 1


def act_bmrh(
    s: GameState,
    config: BMRHConfig,
    vf: ValueFunction,
    budget: int | BudgetMeter,
    seed: int | random.Random,
    session: dict | None = None,
) -> Action:
    meter = budget if isinstance(budget, BudgetMeter) else BudgetMeter(budget)
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    player = s.current
    length = config.sequence_length
    opp, disc = config.opponent_model, config.value_discount
    counter = 0

    def make(r: Rollout) -> _Individual:
        nonlocal counter
        counter += 1
        ind = _Individual(r.actions, r.value, 1, counter, rng.random() if config.tie_break == "randomized" else 0.0)
        _reevaluate(ind, s, player, vf, rng, meter, opp, disc, config.evaluations_per_sequence - 1)
        return ind

    def rank(ind: _Individual):
        return (-ind.value, ind.tiebreak, ind.order)

    population: list[_Individual] = []
    carried = session.get("buffer") if (session is not None and config.shift_buffer) else None
    if carried:
        shifted = carried[1:]
        population.append(make(rollout(s, player, shifted, length, vf, rng, meter, opp, disc)))
    while len(population) < config.population_size and (meter.remaining > 0 or not population):
        population.append(make(rollout(s, player, (), length, vf, rng, meter, opp, disc)))
    best = min(population, key=rank)

    while meter.remaining > 0:
        population.sort(key=rank)
        children = []
        for parent in population[: config.elites]:
            for _ in range(config.offspring_per_parent):
                if meter.remaining <= 0:
                    break
                child = branching_mutation(
                    s, parent.actions, rng, meter, vf, None, config.mutation_point, opp, disc, player
                )
                children.append(make(child))
        if not children:
            break
        population = sorted(population + children, key=rank)[: config.population_size]
        if rank(population[0]) < rank(best):
            best = population[0]

    if session is not None:
        session["buffer"] = list(best.actions)
    return best.actions[0] if best.actions else PASS


# -- SRH --------------------------------------------------------------------------

GENE_MAX = 2**31 - 1


def decode_genome(
    s: GameState,
    genome: Sequence[int],
    vf: ValueFunction,
    meter: BudgetMeter | None,
    opponent: str = "random",
    discount: float = 1.0,
    player: int | None = None,
) -> Rollout:
    """Roll the state forward with each gene seeding that step's action sampler.

    Opponent moves after step ``i`` are seeded from gene ``i`` too, so a
    genome always decodes to the same actions from the same state.
    """
    player = s.current if player is None else player
    sim = s.copy()
    logger = None
    if vf.uses_events:
        logger = EventLogger(owner=player)
        sim.loggers.append(logger)
    actions = []
    value, last, weight = 0.0, 0.0, 1.0
    exhausted = False
    for i, gene in enumerate(genome):
        if sim.finished:
            break
        rng = random.Random(gene)
        a = engine.sample_action(sim, rng)
        actions.append(a)
        if meter is not None and meter.remaining <= 0:
            exhausted = True
            continue
        engine.step(sim, a)
        if meter is not None:
            meter.spend()
        current = vf.value(s, sim, logger, player)
        value += weight * (current - last)
        last = current
        weight *= discount
        if i == len(genome) - 1:
            break
        while not sim.finished and sim.current != player:
            if opponent == "passing":
                engine.pass_turn(sim)
                continue
            if meter is not None and meter.remaining <= 0:
                exhausted = True
                break
            engine.step(sim, engine.sample_action(sim, rng))
            if meter is not None:
                meter.spend()
    return Rollout(actions, value, exhausted, 0, sim)


def mutate_genome(genome: Sequence[int], rng: random.Random) -> list[int]:
    """Reseed each gene with probability 1/len; at least one gene changes."""
    child = list(genome)
    n = len(child)
    forced = rng.randrange(n)
    for i in range(n):
        if i == forced or rng.random() < 1.0 / n:
            child[i] = rng.randint(0, GENE_MAX)
    return child


def act_srh(
    s: GameState,
    config: SRHConfig,
    vf: ValueFunction,
    budget: int | BudgetMeter,
    seed: int | random.Random,
) -> Action:
    meter = budget if isinstance(budget, BudgetMeter) else BudgetMeter(budget)
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    player = s.current
    opp, disc = config.opponent_model, config.value_discount

    def evaluate(genome):
        r = decode_genome(s, genome, vf, meter, opp, disc, player)
        return (r.value, genome, r.actions)

    def key(p):
        # stable sorts keep the first-found genome on ties
        return -p[0]

    population = []
    while len(population) < config.population_size and (meter.remaining > 0 or not population):
        genome = [rng.randint(0, GENE_MAX) for _ in range(config.sequence_length)]
        population.append(evaluate(genome))
    best = min(population, key=key)
    while meter.remaining > 0:
        population.sort(key=key)
        children = []
        for parent in population[: max(1, min(config.elite_count, config.population_size))]:
            for _ in range(config.offspring_per_parent):
                if meter.remaining <= 0:
                    break
                children.append(evaluate(mutate_genome(parent[1], rng)))
        if not children:
            break
        population = sorted(population + children, key=key)[: config.population_size]
        if population[0][0] > best[0]:
            best = population[0]
    return best[2][0] if best[2] else PASS


# -- MCTS -------------------------------------------------------------------------


class Node:
    __slots__ = ("action", "children", "visits", "total")

    def __init__(self, action: Action | None = None):
        self.action = action
        self.children: list[Node] = []
        self.visits = 0
        self.total = 0.0

    @property
    def mean(self) -> float:
        return self.total / self.visits if self.visits else 0.0


def widening_cap(visits: int, base: float, exponent: float) -> int:
    return math.ceil(base * visits**exponent)


def ucb_select(children: Sequence[Node], parent_visits: int, c: float, lo: float, hi: float) -> Node:
    """UCB1 over min-max normalised means; ties keep the earliest child."""
    span = hi - lo
    log_n = math.log(max(parent_visits, 1))
    best, best_score = None, -math.inf
    for child in children:
        mean = (child.mean - lo) / span if span > 0 else 0.5
        score = mean + c * math.sqrt(log_n / child.visits) if child.visits else math.inf
        if score > best_score:
            best, best_score = child, score
    return best


def act_mcts(
    s: GameState,
    config: MCTSConfig,
    vf: ValueFunction,
    budget: int | BudgetMeter,
    seed: int | random.Random,
    trace: list | None = None,
) -> Action:
    """Open-loop MCTS over own actions with iterative widening.

    Opponent turns between own actions are simulated per the opponent model.
    ``trace``, when given, collects ``(root visits, root children)`` after
    every iteration.
    """
    meter = budget if isinstance(budget, BudgetMeter) else BudgetMeter(budget)
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    player = s.current
    root = Node()
    lo, hi = math.inf, -math.inf
    c = config.exploration_constant

    def opponents(sim) -> bool:
        while not sim.finished and sim.current != player:
            if config.opponent_model == "passing":
                engine.pass_turn(sim)
                continue
            if meter.remaining <= 0:
                return False
            engine.step(sim, engine.sample_action(sim, rng))
            meter.spend()
        return True

    while meter.remaining > 0:
        sim = s.copy()
        logger = None
        if vf.uses_events:
            logger = EventLogger(owner=player)
            sim.loggers.append(logger)
        node, path, depth = root, [root], 0
        expanded = False
        while depth < config.max_depth and not sim.finished and meter.remaining > 0 and not expanded:
            cap = widening_cap(node.visits + 1, config.widening_base, config.widening_exponent)
            if len(node.children) < cap:
                a = engine.sample_action(sim, rng)
                child = next((ch for ch in node.children if ch.action == a), None)
                if child is None:
                    child = Node(a)
                    node.children.append(child)
                    expanded = True
            else:
                legal = [ch for ch in node.children if engine.is_legal(sim, ch.action)]
                if not legal:
                    # every stored action is illegal in this determinization: roll on untracked
                    break
                child = ucb_select(legal, node.visits, c, lo, hi)
            engine.step(sim, child.action)
            meter.spend()
            node = child
            path.append(node)
            depth += 1
            if not opponents(sim):
                break
        for _ in range(config.rollout_length):
            if sim.finished or meter.remaining <= 0:
                break
            engine.step(sim, engine.sample_action(sim, rng))
            meter.spend()
            if not opponents(sim):
                break
        value = vf.value(s, sim, logger, player)
        lo, hi = min(lo, value), max(hi, value)
        for n in path:
            n.visits += 1
            n.total += value
        if trace is not None:
            trace.append((root.visits, len(root.children)))
        if len(path) == 1 and not root.children:
            break
    if not root.children:
        return engine.sample_action(s, rng)
    best = max(root.children, key=lambda ch: (ch.visits, ch.mean))
    return best.action


# -- specs and agent objects --------------------------------------------------------


@dataclass
class AgentSpec:
    kind: str
    value_function: Any = "score"
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if not self.name:
            vf = self.value_function if isinstance(self.value_function, str) else "ef"
            self.name = self.kind if self.kind in ("RND",) else f"{self.kind}({vf})"

    def to_json(self) -> dict[str, Any]:
        vf = self.value_function
        if not isinstance(vf, (str, dict)):
            vf = vf.to_json()
        return {
            "kind": self.kind,
            "name": self.name,
            "value_function": vf,
            "hyperparameters": self.hyperparameters,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> AgentSpec:
        return cls(
            data["kind"],
            data.get("value_function", "score"),
            dict(data.get("hyperparameters", {})),
            int(data.get("seed", 0)),
            data.get("name", ""),
        )

    @classmethod
    def load(cls, path: str | Path, index: int = 0) -> AgentSpec:
        data = json.loads(Path(path).read_text())
        if isinstance(data, list):
            data = data[index]
        return cls.from_json(data)


class Agent:
    """A configured player.  ``reset`` starts a new game (clears carry-over)."""

    def __init__(self, spec: AgentSpec):
        self.spec = spec
        self.vf = load_value_function(spec.value_function)
        cls = CONFIGS.get(spec.kind)
        self.config = _config_from(cls, spec.hyperparameters) if cls else None
        self.session: dict = {}

    @property
    def name(self) -> str:
        return self.spec.name

    def reset(self) -> None:
        self.session = {}

    def act(self, s: GameState, meter: BudgetMeter, seed: int) -> Action:
        kind = self.spec.kind
        if kind == "RND":
            return act_rnd(s, seed)
        if kind == "OSLA":
            return act_osla(s, self.vf, meter, seed)
        if kind == "BMRH":
            return act_bmrh(s, self.config, self.vf, meter, seed, self.session)
        if kind == "SRH":
            return act_srh(s, self.config, self.vf, meter, seed)
        return act_mcts(s, self.config, self.vf, meter, seed)

    def __repr__(self) -> str:
        return f"Agent({self.name})"


def make_agent(spec: AgentSpec | dict) -> Agent:
    if isinstance(spec, dict):
        spec = AgentSpec.from_json(spec)
    return Agent(spec)


def bmrh_spec(value_function: Any = "score", seed: int = 0, name: str = "", **hyper) -> AgentSpec:
    return AgentSpec("BMRH", value_function, asdict(BMRHConfig(**hyper)), seed, name)
