"""Event records, loggers, type mappings and the counting synthesis function."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterable, Sequence

if TYPE_CHECKING:
    from r2.engine import GameState

# Raw event ids. These are part of the external contract: weight files index them.
NOBLE_TAKE = 0
TABLE_TOKEN_INC = 1
TABLE_TOKEN_DEC = 2
TABLE_JOKER_INC = 3
TABLE_JOKER_DEC = 4
CARD_DRAW = 5
CARD_PLACE = 6
NOBLE_PLACE = 7
PLAYER_TOKEN_INC = 8
PLAYER_TOKEN_DEC = 9
PLAYER_JOKER_INC = 10
PLAYER_JOKER_DEC = 11
RESERVE_HIDDEN = 12
RESERVE = 13
NOBLE_RECEIVE = 14
CARD_BUY = 15
POINTS_FROM_CARD = 16
POINTS_FROM_NOBLE = 17

NUM_EVENT_TYPES = 18

EVENT_NAMES = (
    "noble_take",
    "table_token_inc",
    "table_token_dec",
    "table_joker_inc",
    "table_joker_dec",
    "card_draw",
    "card_place",
    "noble_place",
    "player_token_inc",
    "player_token_dec",
    "player_joker_inc",
    "player_joker_dec",
    "reserve_hidden",
    "reserve",
    "noble_receive",
    "card_buy",
    "points_from_card",
    "points_from_noble",
)

# Who-sentinel for events raised by the engine's passive rules.
ENGINE = -1
DISCARD = -1

_TOKEN_SIG = ("suit", "amount")
_JOKER_SIG = ("amount",)
_CARD_SIG = ("deck",)
SIGNATURES: tuple[tuple[str, ...], ...] = (
    ("noble",),
    _TOKEN_SIG,
    _TOKEN_SIG,
    _JOKER_SIG,
    _JOKER_SIG,
    _CARD_SIG,
    _CARD_SIG,
    ("noble",),
    _TOKEN_SIG,
    _TOKEN_SIG,
    _JOKER_SIG,
    _JOKER_SIG,
    _CARD_SIG,
    _CARD_SIG,
    ("noble",),
    _CARD_SIG,
    ("points",),
    ("points",),
)


class DurationType(Enum):
    INSTANT = "instant"
    DELAYED = "delayed"
    DURATIVE = "durative"


class Event:
    """One state change raised by the engine.

    ``trigger`` is ``(player, action)`` for the action that caused the change,
    so engine-raised events can still be attributed to the acting player.
    Every Splendor event is instant.
    """

    __slots__ = ("tick", "who", "type", "attributes", "trigger")

    duration = 0
    duration_type = DurationType.INSTANT

    def __init__(self, tick: int, who: int, type: int, attributes: dict[str, Any], trigger=None):
        self.tick = tick
        self.who = who
        self.type = type
        self.attributes = attributes
        self.trigger = trigger

    @property
    def signature(self) -> tuple[str, ...]:
        return SIGNATURES[self.type]

    @property
    def player(self) -> int:
        """Player this event is credited to."""
        if self.who == ENGINE and self.trigger is not None:
            return self.trigger[0]
        return self.who

    def to_dict(self) -> dict[str, Any]:
        from r2.engine import action_to_dict

        trigger = None
        if self.trigger is not None:
            trigger = {"player": self.trigger[0], "action": action_to_dict(self.trigger[1])}
        return {
            "tick": self.tick,
            "who": self.who,
            "type": self.type,
            "name": EVENT_NAMES[self.type],
            "duration": self.duration,
            "durationType": self.duration_type.value,
            "attributes": self.attributes,
            "signature": list(self.signature),
            "trigger": trigger,
        }

    def __repr__(self) -> str:
        return f"Event(tick={self.tick}, who={self.who}, type={EVENT_NAMES[self.type]}, {self.attributes})"


@dataclass
class EventLogger:
    owner: int = 0
    buffer: list[Event] = field(default_factory=list)

    def receive(self, events: Iterable[Event]) -> None:
        self.buffer.extend(events)

    def clear(self) -> None:
        self.buffer.clear()


class LoggerError(RuntimeError):
    pass


def attach_logger(state: GameState, logger: EventLogger) -> None:
    if any(existing is logger for existing in state.loggers):
        raise LoggerError("logger already attached to this state")
    state.loggers.append(logger)


def detach_logger(state: GameState, logger: EventLogger) -> None:
    for i, existing in enumerate(state.loggers):
        if existing is logger:
            del state.loggers[i]
            return
    raise LoggerError("logger is not attached to this state")


@dataclass(frozen=True)
class TypeMapping:
    """Maps the 18 raw event ids onto feature groups; -1 discards."""

    table: tuple[int, ...]
    name: str = "custom"

    def __post_init__(self):
        if len(self.table) != NUM_EVENT_TYPES:
            raise ValueError(f"type mapping needs {NUM_EVENT_TYPES} entries, got {len(self.table)}")
        groups = [g for g in self.table if g != DISCARD]
        if any(g < 0 for g in groups):
            raise ValueError("group ids must be >= 0 or -1 for discard")
        if groups and sorted(set(groups)) != list(range(max(groups) + 1)):
            raise ValueError("group ids must be contiguous from 0")

    @property
    def group_count(self) -> int:
        groups = [g for g in self.table if g != DISCARD]
        return max(groups) + 1 if groups else 0


ID_MAPPING = TypeMapping(tuple(range(NUM_EVENT_TYPES)), name="id")
HC_MAPPING = TypeMapping(
    (-1, -1, -1, -1, -1, -1, -1, -1, 0, -1, 0, -1, 1, 2, 3, -1, 4, 4),
    name="hc",
)
MAPPINGS = {"id": ID_MAPPING, "hc": HC_MAPPING}


def map_type(mapping: TypeMapping, raw_type: int) -> int:
    if not 0 <= raw_type < NUM_EVENT_TYPES:
        raise ValueError(f"raw event type {raw_type} out of range")
    return mapping.table[raw_type]


def load_mapping(source: str | Sequence[int] | Path) -> TypeMapping:
    """Resolve a mapping from a built-in name, an inline list or a JSON file."""
    if isinstance(source, TypeMapping):
        return source
    if isinstance(source, str) and source in MAPPINGS:
        return MAPPINGS[source]
    if isinstance(source, (str, Path)):
        table = json.loads(Path(source).read_text())
        return TypeMapping(tuple(int(x) for x in table), name=str(source))
    return TypeMapping(tuple(int(x) for x in source))


def synthesize(events: Iterable[Event], player: int, mapping: TypeMapping) -> list[int]:
    """Count the player's events per mapped group."""
    table = mapping.table
    theta = [0] * mapping.group_count
    for e in events:
        who = e.who
        if who == ENGINE and e.trigger is not None:
            who = e.trigger[0]
        if who != player:
            continue
        g = table[e.type]
        if g != DISCARD:
            theta[g] += 1
    return theta


def write_trace(events: Iterable[Event], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")


def read_trace(path: str | Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
