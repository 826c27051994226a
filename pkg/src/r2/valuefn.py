"""Event-value functions, mixers and the score-delta baseline.

An event-value function scores the events a player triggered over a
simulated action sequence: events are counted per mapped type, and the
counts are combined by a linear or polynomial mixer.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from r2 import engine
from r2.engine import Action, GameState
from r2.events import HC_MAPPING, EventLogger, TypeMapping, load_mapping, synthesize

WEIGHT_GRID = (-1.0, -0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


class BudgetExhausted(RuntimeError):
    pass


class BudgetMeter:
    """Counts forward-model action applications against a per-turn allowance."""

    __slots__ = ("budget", "used", "strict")

    def __init__(self, budget: int, strict: bool = False):
        self.budget = budget
        self.used = 0
        self.strict = strict

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    def spend(self, n: int = 1) -> None:
        self.used += n
        if self.strict and self.used > self.budget:
            raise BudgetExhausted(f"used {self.used} of {self.budget}")

    def reset(self) -> None:
        self.used = 0


def multiset_count(n: int, d: int) -> int:
    return math.comb(n + d - 1, d)


def enumerate_monomials(n: int, d: int) -> list[tuple[int, ...]]:
    """All degree-``d`` monomials over ``n`` variables as non-decreasing index tuples.

    The lexicographic order fixes which weight multiplies which monomial.
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    return list(itertools.combinations_with_replacement(range(n), d))


@dataclass(frozen=True)
class Mixer:
    kind: str
    feature_count: int
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial"):
            raise ValueError(f"unknown mixer kind {self.kind!r}")
        if self.feature_count < 1 or self.degree < 1:
            raise ValueError("feature_count and degree must be >= 1")

    @property
    def monomials(self) -> list[tuple[int, ...]]:
        return _monomials(self.feature_count, self.degree)


_MONOMIAL_CACHE: dict[tuple[int, int], list[tuple[int, ...]]] = {}


def _monomials(n: int, d: int) -> list[tuple[int, ...]]:
    key = (n, d)
    if key not in _MONOMIAL_CACHE:
        _MONOMIAL_CACHE[key] = enumerate_monomials(n, d)
    return _MONOMIAL_CACHE[key]


def required_weights(mixer: Mixer) -> int:
    if mixer.kind == "linear":
        return mixer.feature_count
    return multiset_count(mixer.feature_count, mixer.degree)


def eval_mixer(mixer: Mixer, weights: Sequence[float], theta: Sequence[float]) -> float:
    if len(theta) != mixer.feature_count:
        raise ValueError(f"expected {mixer.feature_count} features, got {len(theta)}")
    if len(weights) != required_weights(mixer):
        raise ValueError(f"expected {required_weights(mixer)} weights, got {len(weights)}")
    if mixer.kind == "linear":
        return float(sum(w * t for w, t in zip(weights, theta)))
    nonzero = {i for i, t in enumerate(theta) if t}
    total = 0.0
    for w, mono in zip(weights, _monomials(mixer.feature_count, mixer.degree)):
        if w == 0 or not nonzero.issuperset(mono):
            continue
        term = w
        for j in mono:
            term *= theta[j]
        total += term
    return total


class ScoreValueFunction:
    """Baseline: prestige-point gain of the evaluating player."""

    uses_events = False

    def value(self, start: GameState, current: GameState, logger: EventLogger | None, player: int) -> float:
        return float(current.players[player].points - start.players[player].points)

    def to_json(self) -> str:
        return "score"

    def __repr__(self) -> str:
        return "ScoreValueFunction()"


@dataclass(frozen=True)
class EventValueFunction:
    mapping: TypeMapping
    mixer: Mixer
    weights: tuple[float, ...]
    name: str = ""

    uses_events = True

    def __post_init__(self):
        if self.mixer.feature_count != self.mapping.group_count:
            raise ValueError("mixer feature count must match the mapping's group count")
        if len(self.weights) != required_weights(self.mixer):
            raise ValueError(f"need {required_weights(self.mixer)} weights, got {len(self.weights)}")
        if not all(math.isfinite(w) for w in self.weights):
            raise ValueError("weights must be finite")

    @classmethod
    def build(cls, mapping: str | TypeMapping, kind: str = "linear", degree: int = 1, weights=None, name: str = ""):
        mapping = load_mapping(mapping)
        mixer = Mixer(kind, mapping.group_count, degree if kind == "polynomial" else 1)
        if weights is None:
            weights = [0.0] * required_weights(mixer)
        return cls(mapping, mixer, tuple(float(w) for w in weights), name)

    def features(self, events, player: int) -> list[int]:
        return synthesize(events, player, self.mapping)

    def score_events(self, events, player: int) -> float:
        return eval_mixer(self.mixer, self.weights, self.features(events, player))

    def value(self, start: GameState, current: GameState, logger: EventLogger | None, player: int) -> float:
        return self.score_events(logger.buffer if logger is not None else (), player)

    def to_json(self) -> dict[str, Any]:
        mapping = self.mapping.name if self.mapping.name in ("id", "hc") else list(self.mapping.table)
        mixer = {"kind": self.mixer.kind}
        if self.mixer.kind == "polynomial":
            mixer["degree"] = self.mixer.degree
        return {"mapping": mapping, "mixer": mixer, "weights": list(self.weights)}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> EventValueFunction:
        mixer = data.get("mixer", {"kind": "linear"})
        return cls.build(
            data["mapping"], mixer.get("kind", "linear"), int(mixer.get("degree", 1)), data["weights"],
            data.get("name", ""),
        )


ValueFunction = ScoreValueFunction | EventValueFunction


PRESETS = ("lin_hc_star", "lin_id_star")


def load_value_function(source: Any) -> ValueFunction:
    """``"score"``, a preset name, an EF file path, or an inline EF dict."""
    if isinstance(source, (ScoreValueFunction, EventValueFunction)):
        return source
    if source is None or source == "score":
        return ScoreValueFunction()
    if isinstance(source, dict):
        return EventValueFunction.from_json(source)
    if source in PRESETS:
        text = resources.files("r2.data").joinpath(f"{source}.json").read_text(encoding="utf-8")
        return EventValueFunction.from_json(json.loads(text))
    return EventValueFunction.from_json(json.loads(Path(source).read_text()))


def hc_linear(weights: Sequence[float]) -> EventValueFunction:
    return EventValueFunction.build(HC_MAPPING, "linear", 1, weights)


# -- sequence evaluation -------------------------------------------------------

OPPONENT_MODELS = ("random", "passing")


@dataclass
class Rollout:
    """Outcome of playing an action sequence on a forward-model copy."""

    actions: list[Action]
    value: float
    exhausted: bool = False
    repaired: int = 0
    state: GameState | None = field(default=None, repr=False)


def rollout(
    s: GameState,
    player: int,
    prefix: Sequence[Action],
    length: int,
    vf: ValueFunction,
    rng: random.Random,
    meter: BudgetMeter | None,
    opponent: str = "random",
    discount: float = 1.0,
    keep_prefix: int | None = None,
) -> Rollout:
    """Play ``length`` own actions on a copy of ``s``, interleaving opponents.

    The first ``keep_prefix`` positions replay ``prefix`` (illegal entries are
    resampled); later positions are freshly sampled.  The value is the
    discounted sum of per-step value increments, which equals the plain value
    of the final state when ``discount`` is 1.  Each applied action, own or
    opponent, costs one budget unit; once the budget is gone the remaining
    positions are sampled on the current state without being played.
    """
    keep = len(prefix) if keep_prefix is None else min(keep_prefix, len(prefix))
    sim = s.copy()
    logger = None
    if vf.uses_events:
        logger = EventLogger(owner=player)
        sim.loggers.append(logger)
    actions: list[Action] = []
    value = 0.0
    last = 0.0
    weight = 1.0
    repaired = 0
    exhausted = False
    num_players = len(sim.players)
    for i in range(length):
        if sim.finished:
            break
        if i < keep:
            a = prefix[i]
            if not engine.is_legal(sim, a):
                a = engine.sample_action(sim, rng)
                repaired += 1
        else:
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
        if i == length - 1:
            break
        for _ in range(num_players - 1):
            if sim.finished or sim.current == player:
                break
            if opponent == "passing":
                engine.pass_turn(sim)
                continue
            if meter is not None and meter.remaining <= 0:
                exhausted = True
                break
            engine.step(sim, engine.sample_action(sim, rng))
            if meter is not None:
                meter.spend()
    if logger is not None:
        sim.loggers.remove(logger)
    return Rollout(actions, value, exhausted, repaired, sim)


def evaluate_sequence(
    s: GameState,
    seq: Sequence[Action],
    vf: ValueFunction,
    meter: BudgetMeter | None = None,
    rng: random.Random | int = 0,
    opponent: str = "random",
    player: int | None = None,
    discount: float = 1.0,
) -> tuple[float, list[Action]]:
    """Value of playing ``seq`` from ``s``, plus the repaired sequence actually played.

    ``opponent`` is ``"random"`` (uniform legal moves) or ``"passing"``
    (opponents are frozen).  ``s`` itself is never modified.
    """
    if s.finished:
        raise ValueError("cannot evaluate a sequence from a terminal state")
    if meter is not None and meter.remaining <= 0:
        raise BudgetExhausted("no simulation budget left")
    if opponent not in OPPONENT_MODELS:
        raise ValueError(f"unknown opponent model {opponent!r}")
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    player = s.current if player is None else player
    result = rollout(s, player, seq, len(seq), vf, rng, meter, opponent, discount)
    return result.value, result.actions
