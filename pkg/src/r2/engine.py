"""Parameterised Splendor rules engine with a copyable forward model.

Cards and nobles are immutable tuples shared between clones; only the
containers holding them are copied.  Token vectors are plain int lists of
length ``num_suits``.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import asdict, dataclass, fields
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Any, NamedTuple, Sequence

from r2 import events as ev
from r2.events import Event


class ConfigError(ValueError):
    pass


class IllegalActionError(ValueError):
    pass


@dataclass(frozen=True)
class GameParams:
    num_players: int = 2
    points_to_win: int = 15
    num_decks: int = 3
    face_up_per_deck: int = 4
    tokens_per_suit: int = 4
    num_suits: int = 5
    joker_count: int = 5
    max_tokens_held: int = 10
    max_reserved: int = 3
    min_stack_for_take_two: int = 4
    noble_count: int = 3
    # hard turn cap (total actions) guaranteeing termination; capped games are ties
    max_turns: int = 500

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"{f.name} must be positive")
        if not 2 <= self.num_players <= 4:
            raise ConfigError("num_players must be in 2..4")

    @classmethod
    def standard(cls, num_players: int = 2) -> GameParams:
        tokens = {2: 4, 3: 5, 4: 7}[num_players]
        return cls(num_players=num_players, tokens_per_suit=tokens, noble_count=num_players + 1)

    def to_json(self) -> dict[str, int]:
        return {_camel(k): v for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> GameParams:
        known = {_camel(f.name): f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            name = known.get(key, key)
            if name not in known.values():
                raise ConfigError(f"unknown game parameter {key!r}")
            kwargs[name] = int(value)
        if "num_players" in kwargs:
            base = cls.standard(kwargs["num_players"])
            return cls(**{**asdict(base), **kwargs})
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> GameParams:
        return cls.from_json(json.loads(Path(path).read_text()))


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(w.title() for w in rest)


class Card(NamedTuple):
    tier: int
    points: int
    bonus: int
    cost: tuple[int, ...]
    id: int = -1


class Noble(NamedTuple):
    points: int
    requirement: tuple[int, ...]
    id: int = -1


def load_cards(path: str | Path | None = None) -> list[Card]:
    text = _read_data(path, "cards.csv")
    rows = list(csv.DictReader(text.splitlines()))
    cards = []
    for i, row in enumerate(rows):
        cost_keys = sorted((k for k in row if k.startswith("cost")), key=lambda k: int(k[4:]))
        cards.append(
            Card(int(row["tier"]), int(row["points"]), int(row["bonus"]), tuple(int(row[k]) for k in cost_keys), i)
        )
    return cards


def load_nobles(path: str | Path | None = None) -> list[Noble]:
    text = _read_data(path, "nobles.csv")
    rows = list(csv.DictReader(text.splitlines()))
    nobles = []
    for i, row in enumerate(rows):
        req_keys = sorted((k for k in row if k.startswith("req")), key=lambda k: int(k[3:]))
        nobles.append(Noble(int(row["points"]), tuple(int(row[k]) for k in req_keys), i))
    return nobles


def _read_data(path, default_name: str) -> str:
    if path is None:
        return resources.files("r2.data").joinpath(default_name).read_text(encoding="utf-8")
    return Path(path).read_text(encoding="utf-8")


class Kind(IntEnum):
    TAKE_DIFFERENT = 0
    TAKE_SAME = 1
    BUY_FACE_UP = 2
    BUY_RESERVED = 3
    RESERVE_FACE_UP = 4
    RESERVE_DECK_TOP = 5
    PASS = 6


class Action(NamedTuple):
    """A player move.

    ``suits`` holds the suits taken (TAKE_SAME: one suit).  ``deck``/``slot``
    locate a face-up card; for BUY_RESERVED ``slot`` indexes the player's
    visible-then-hidden reserved cards.  ``payment``/``jokers`` pay for buys;
    ``returns``/``return_jokers`` hand tokens back to respect the holding cap.
    """

    kind: Kind
    suits: tuple[int, ...] = ()
    deck: int = -1
    slot: int = -1
    payment: tuple[int, ...] = ()
    jokers: int = 0
    returns: tuple[int, ...] = ()
    return_jokers: int = 0


PASS = Action(Kind.PASS)


def action_to_dict(a: Action) -> dict[str, Any]:
    d = {"kind": a.kind.name}
    if a.suits:
        d["suits"] = list(a.suits)
    if a.deck >= 0:
        d["deck"] = a.deck
    if a.slot >= 0:
        d["slot"] = a.slot
    if a.payment:
        d["payment"] = list(a.payment)
        d["jokers"] = a.jokers
    if a.returns:
        d["returns"] = list(a.returns)
        d["returnJokers"] = a.return_jokers
    return d


def action_from_dict(d: dict[str, Any]) -> Action:
    return Action(
        Kind[d["kind"]],
        tuple(d.get("suits", ())),
        d.get("deck", -1),
        d.get("slot", -1),
        tuple(d.get("payment", ())),
        d.get("jokers", 0),
        tuple(d.get("returns", ())),
        d.get("returnJokers", 0),
    )


class PlayerState:
    __slots__ = ("points", "tokens", "jokers", "bonuses", "cards", "reserved_visible", "reserved_hidden", "nobles")

    def __init__(self, num_suits: int):
        self.points = 0
        self.tokens = [0] * num_suits
        self.jokers = 0
        self.bonuses = [0] * num_suits
        self.cards: list[Card] = []
        self.reserved_visible: list[Card] = []
        self.reserved_hidden: list[Card] = []
        self.nobles: list[Noble] = []

    def copy(self) -> PlayerState:
        p = PlayerState.__new__(PlayerState)
        p.points = self.points
        p.tokens = self.tokens[:]
        p.jokers = self.jokers
        p.bonuses = self.bonuses[:]
        p.cards = self.cards[:]
        p.reserved_visible = self.reserved_visible[:]
        p.reserved_hidden = self.reserved_hidden[:]
        p.nobles = self.nobles[:]
        return p

    @property
    def reserved(self) -> list[Card]:
        return self.reserved_visible + self.reserved_hidden

    def held(self) -> int:
        return sum(self.tokens) + self.jokers

    def to_dict(self) -> dict[str, Any]:
        return {
            "points": self.points,
            "tokens": self.tokens,
            "jokers": self.jokers,
            "bonuses": self.bonuses,
            "cards": [c.id for c in self.cards],
            "reservedVisible": [c.id for c in self.reserved_visible],
            "reservedHidden": [c.id for c in self.reserved_hidden],
            "nobles": [n.id for n in self.nobles],
        }


class GameState:
    """Full game state.  Decks are stacks with the top card at the end."""

    __slots__ = (
        "params", "decks", "face_up", "nobles", "table_tokens", "table_jokers",
        "players", "tick", "current", "finished", "capped", "stalled", "passes", "loggers",
    )

    def copy(self) -> GameState:
        s = GameState.__new__(GameState)
        s.params = self.params
        s.decks = [d[:] for d in self.decks]
        s.face_up = [f[:] for f in self.face_up]
        s.nobles = self.nobles[:]
        s.table_tokens = self.table_tokens[:]
        s.table_jokers = self.table_jokers
        s.players = [p.copy() for p in self.players]
        s.tick = self.tick
        s.current = self.current
        s.finished = self.finished
        s.capped = self.capped
        s.stalled = self.stalled
        s.passes = self.passes
        s.loggers = []
        return s

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.to_json(),
            "decks": [[c.id for c in d] for d in self.decks],
            "faceUp": [[c.id if c is not None else None for c in f] for f in self.face_up],
            "nobles": [n.id for n in self.nobles],
            "tableTokens": self.table_tokens,
            "tableJokers": self.table_jokers,
            "players": [p.to_dict() for p in self.players],
            "tick": self.tick,
            "currentPlayer": self.current,
            "finished": self.finished,
            "capped": self.capped,
            "stalled": self.stalled,
            "passes": self.passes,
        }

    def __repr__(self) -> str:
        pts = [p.points for p in self.players]
        return f"GameState(tick={self.tick}, current={self.current}, points={pts}, finished={self.finished})"


def serialize(s: GameState) -> str:
    return json.dumps(s.to_dict(), sort_keys=True)


def new_game(
    params: GameParams,
    cards: Sequence[Card] | None = None,
    nobles: Sequence[Noble] | None = None,
    seed: int = 0,
) -> GameState:
    cards = load_cards() if cards is None else list(cards)
    nobles = load_nobles() if nobles is None else list(nobles)
    decks: list[list[Card]] = [[] for _ in range(params.num_decks)]
    for c in cards:
        if not 0 <= c.tier < params.num_decks:
            raise ConfigError(f"card tier {c.tier} outside 0..{params.num_decks - 1}")
        if len(c.cost) != params.num_suits:
            raise ConfigError("card cost length does not match num_suits")
        decks[c.tier].append(c)
    if any(not d for d in decks):
        raise ConfigError("every deck tier needs at least one card")
    if len(nobles) < params.noble_count:
        raise ConfigError(f"need {params.noble_count} nobles, got {len(nobles)}")

    rng = random.Random(seed)
    for d in decks:
        rng.shuffle(d)
    pool = list(nobles)
    rng.shuffle(pool)

    s = GameState.__new__(GameState)
    s.params = params
    s.decks = decks
    s.face_up = []
    for d in decks:
        row = [d.pop() if d else None for _ in range(params.face_up_per_deck)]
        s.face_up.append(row)
    s.nobles = pool[: params.noble_count]
    s.table_tokens = [params.tokens_per_suit] * params.num_suits
    s.table_jokers = params.joker_count
    s.players = [PlayerState(params.num_suits) for _ in range(params.num_players)]
    s.tick = 0
    s.current = 0
    s.finished = False
    s.capped = False
    s.stalled = False
    s.passes = 0
    s.loggers = []
    return s


def clone_state(s: GameState) -> GameState:
    return s.copy()


def determinize(s: GameState, player: int, rng: random.Random | int) -> GameState:
    """Copy of ``s`` as seen by ``player``: unseen cards reshuffled.

    Deck order and opponents' hidden reservations are resampled from the pool
    of cards the player cannot see, tier by tier.
    """
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    c = s.copy()
    for tier, deck in enumerate(c.decks):
        hidden_slots = []
        pool = list(deck)
        for pi, p in enumerate(c.players):
            if pi == player:
                continue
            for j, card in enumerate(p.reserved_hidden):
                if card.tier == tier:
                    hidden_slots.append((pi, j))
                    pool.append(card)
        rng.shuffle(pool)
        for pi, j in hidden_slots:
            c.players[pi].reserved_hidden[j] = pool.pop()
        c.decks[tier] = pool
    return c


# -- legality ---------------------------------------------------------------


def _shortfall(cost: tuple[int, ...], tokens: list[int], bonuses: list[int]) -> int:
    short = 0
    for c, t, b in zip(cost, tokens, bonuses):
        need = c - b
        if need > t:
            short += need - t
    return short


def can_afford(p: PlayerState, card: Card) -> bool:
    return _shortfall(card.cost, p.tokens, p.bonuses) <= p.jokers


def canonical_payment(p: PlayerState, card: Card) -> tuple[tuple[int, ...], int]:
    """Pay with coloured tokens first, jokers for the rest."""
    payment = []
    jokers = 0
    for c, t, b in zip(card.cost, p.tokens, p.bonuses):
        need = c - b if c > b else 0
        paid = need if need <= t else t
        payment.append(paid)
        jokers += need - paid
    return tuple(payment), jokers


def _payment_ok(p: PlayerState, card: Card, payment: tuple[int, ...], jokers: int) -> bool:
    if len(payment) != len(card.cost) or jokers < 0 or jokers > p.jokers:
        return False
    owed = 0
    for c, t, b, x in zip(card.cost, p.tokens, p.bonuses, payment):
        need = c - b if c > b else 0
        if x < 0 or x > t or x > need:
            return False
        owed += need - x
    return owed == jokers


def _returns_ok(tokens_after: list[int], jokers_after: int, cap: int, returns: tuple[int, ...], rj: int) -> bool:
    excess = sum(tokens_after) + jokers_after - cap
    if not returns:
        return excess <= 0 and rj == 0
    if len(returns) != len(tokens_after) or rj < 0 or rj > jokers_after:
        return False
    total = rj
    for r, t in zip(returns, tokens_after):
        if r < 0 or r > t:
            return False
        total += r
    return total == max(excess, 0)


def _find_face_up(s: GameState, deck: int, slot: int) -> Card | None:
    if 0 <= deck < len(s.face_up) and 0 <= slot < len(s.face_up[deck]):
        return s.face_up[deck][slot]
    return None


def is_legal(s: GameState, a: Action) -> bool:
    if s.finished:
        return False
    params = s.params
    p = s.players[s.current]
    kind = a.kind
    n = params.num_suits
    if kind == Kind.TAKE_DIFFERENT:
        suits = a.suits
        if len(set(suits)) != len(suits) or any(not 0 <= x < n for x in suits):
            return False
        available = sum(1 for t in s.table_tokens if t > 0)
        if len(suits) != min(3, available) or not suits:
            return False
        if any(s.table_tokens[x] < 1 for x in suits):
            return False
        after = p.tokens[:]
        for x in suits:
            after[x] += 1
        return _returns_ok(after, p.jokers, params.max_tokens_held, a.returns, a.return_jokers)
    if kind == Kind.TAKE_SAME:
        if len(a.suits) != 1 or not 0 <= a.suits[0] < n:
            return False
        x = a.suits[0]
        if s.table_tokens[x] < params.min_stack_for_take_two:
            return False
        after = p.tokens[:]
        after[x] += 2
        return _returns_ok(after, p.jokers, params.max_tokens_held, a.returns, a.return_jokers)
    if kind == Kind.BUY_FACE_UP:
        card = _find_face_up(s, a.deck, a.slot)
        return card is not None and _payment_ok(p, card, a.payment, a.jokers)
    if kind == Kind.BUY_RESERVED:
        reserved = p.reserved_visible + p.reserved_hidden
        if not 0 <= a.slot < len(reserved):
            return False
        return _payment_ok(p, reserved[a.slot], a.payment, a.jokers)
    if kind == Kind.RESERVE_FACE_UP or kind == Kind.RESERVE_DECK_TOP:
        if len(p.reserved_visible) + len(p.reserved_hidden) >= params.max_reserved:
            return False
        if kind == Kind.RESERVE_FACE_UP:
            if _find_face_up(s, a.deck, a.slot) is None:
                return False
        elif not (0 <= a.deck < len(s.decks) and s.decks[a.deck]):
            return False
        jokers_after = p.jokers + (1 if s.table_jokers > 0 else 0)
        return _returns_ok(p.tokens, jokers_after, params.max_tokens_held, a.returns, a.return_jokers)
    if kind == Kind.PASS:
        return not _any_rule_action(s)
    return False


def _any_rule_action(s: GameState) -> bool:
    if any(t > 0 for t in s.table_tokens):
        return True
    p = s.players[s.current]
    if len(p.reserved_visible) + len(p.reserved_hidden) < s.params.max_reserved:
        if any(d for d in s.decks) or any(c is not None for row in s.face_up for c in row):
            return True
    for row in s.face_up:
        for c in row:
            if c is not None and can_afford(p, c):
                return True
    return any(can_afford(p, c) for c in p.reserved_visible + p.reserved_hidden)


# -- sampling ----------------------------------------------------------------

_RULE_KINDS = (
    Kind.TAKE_DIFFERENT,
    Kind.TAKE_SAME,
    Kind.BUY_FACE_UP,
    Kind.BUY_RESERVED,
    Kind.RESERVE_FACE_UP,
    Kind.RESERVE_DECK_TOP,
)


def _sample_returns(rng: random.Random, tokens: list[int], jokers: int, cap: int) -> tuple[tuple[int, ...], int]:
    held = sum(tokens) + jokers
    excess = held - cap
    if excess <= 0:
        return (), 0
    pool = tokens[:] + [jokers]
    back = [0] * len(pool)
    for _ in range(excess):
        r = rng.randrange(held)
        i = 0
        while r >= pool[i]:
            r -= pool[i]
            i += 1
        pool[i] -= 1
        back[i] += 1
        held -= 1
    rj = back.pop()
    return tuple(back), rj


def sample_action(s: GameState, rng: random.Random | int) -> Action:
    """Uniform over legal action kinds, then uniform within the kind.

    Kinds are drawn without replacement until one has a legal instantiation,
    which gives the same distribution as enumerating available kinds first
    but only pays for the checks actually needed.
    """
    if not isinstance(rng, random.Random):
        rng = random.Random(rng)
    params = s.params
    p = s.players[s.current]
    cap = params.max_tokens_held
    kinds = list(_RULE_KINDS)
    while kinds:
        kind = kinds.pop(rng.randrange(len(kinds)))
        if kind == Kind.TAKE_DIFFERENT:
            open_suits = [i for i, t in enumerate(s.table_tokens) if t > 0]
            if not open_suits:
                continue
            suits = tuple(sorted(rng.sample(open_suits, min(3, len(open_suits)))))
            after = p.tokens[:]
            for x in suits:
                after[x] += 1
            returns, rj = _sample_returns(rng, after, p.jokers, cap)
            return Action(kind, suits, returns=returns, return_jokers=rj)
        if kind == Kind.TAKE_SAME:
            stack = params.min_stack_for_take_two
            open_suits = [i for i, t in enumerate(s.table_tokens) if t >= stack]
            if not open_suits:
                continue
            x = open_suits[rng.randrange(len(open_suits))]
            after = p.tokens[:]
            after[x] += 2
            returns, rj = _sample_returns(rng, after, p.jokers, cap)
            return Action(kind, (x,), returns=returns, return_jokers=rj)
        if kind == Kind.BUY_FACE_UP:
            options = [
                (d, i, c)
                for d, row in enumerate(s.face_up)
                for i, c in enumerate(row)
                if c is not None and _shortfall(c.cost, p.tokens, p.bonuses) <= p.jokers
            ]
            if not options:
                continue
            d, i, c = options[rng.randrange(len(options))]
            payment, jokers = canonical_payment(p, c)
            return Action(kind, deck=d, slot=i, payment=payment, jokers=jokers)
        if kind == Kind.BUY_RESERVED:
            reserved = p.reserved_visible + p.reserved_hidden
            options = [i for i, c in enumerate(reserved) if _shortfall(c.cost, p.tokens, p.bonuses) <= p.jokers]
            if not options:
                continue
            i = options[rng.randrange(len(options))]
            payment, jokers = canonical_payment(p, reserved[i])
            return Action(kind, slot=i, payment=payment, jokers=jokers)
        if len(p.reserved_visible) + len(p.reserved_hidden) >= params.max_reserved:
            continue
        jokers_after = p.jokers + (1 if s.table_jokers > 0 else 0)
        if kind == Kind.RESERVE_FACE_UP:
            options = [(d, i) for d, row in enumerate(s.face_up) for i, c in enumerate(row) if c is not None]
            if not options:
                continue
            d, i = options[rng.randrange(len(options))]
            returns, rj = _sample_returns(rng, p.tokens, jokers_after, cap)
            return Action(kind, deck=d, slot=i, returns=returns, return_jokers=rj)
        # RESERVE_DECK_TOP
        options = [d for d, deck in enumerate(s.decks) if deck]
        if not options:
            continue
        d = options[rng.randrange(len(options))]
        returns, rj = _sample_returns(rng, p.tokens, jokers_after, cap)
        return Action(kind, deck=d, returns=returns, return_jokers=rj)
    return PASS


# -- transition ---------------------------------------------------------------


def apply_action(s: GameState, a: Action) -> list[Event]:
    """Apply a legal action in place; returns the raised events.

    Events are also forwarded to every attached logger.
    """
    if not is_legal(s, a):
        raise IllegalActionError(f"illegal action {a} at tick {s.tick}")
    out: list[Event] = []
    _apply(s, a, out)
    for logger in s.loggers:
        logger.receive(out)
    return out


def step(s: GameState, a: Action) -> None:
    """Apply an action already known to be legal.

    Skips the legality check, and skips event construction when no logger
    is attached.  This is the forward-planning hot path.
    """
    if s.loggers:
        out: list[Event] = []
        _apply(s, a, out)
        for logger in s.loggers:
            logger.receive(out)
    else:
        _apply(s, a, None)


def pass_turn(s: GameState) -> None:
    """Advance to the next player without acting (frozen-opponent planning)."""
    _end_turn(s, s.current, None, None)


def _apply(s: GameState, a: Action, out: list[Event] | None) -> None:
    who = s.current
    p = s.players[who]
    tick = s.tick
    trig = (who, a) if out is not None else None
    kind = a.kind
    table = s.table_tokens

    if kind == Kind.TAKE_DIFFERENT or kind == Kind.TAKE_SAME:
        amount = 1 if kind == Kind.TAKE_DIFFERENT else 2
        for x in a.suits:
            table[x] -= amount
            p.tokens[x] += amount
            if out is not None:
                attrs = {"suit": x, "amount": amount}
                out.append(Event(tick, who, ev.TABLE_TOKEN_DEC, attrs, trig))
                out.append(Event(tick, who, ev.PLAYER_TOKEN_INC, attrs, trig))
        _give_back(s, p, a, out, tick, who, trig)
    elif kind == Kind.BUY_FACE_UP or kind == Kind.BUY_RESERVED:
        if kind == Kind.BUY_FACE_UP:
            card = s.face_up[a.deck][a.slot]
        else:
            nv = len(p.reserved_visible)
            if a.slot < nv:
                card = p.reserved_visible.pop(a.slot)
            else:
                card = p.reserved_hidden.pop(a.slot - nv)
        for x, paid in enumerate(a.payment):
            if paid:
                p.tokens[x] -= paid
                table[x] += paid
                if out is not None:
                    attrs = {"suit": x, "amount": paid}
                    out.append(Event(tick, who, ev.PLAYER_TOKEN_DEC, attrs, trig))
                    out.append(Event(tick, who, ev.TABLE_TOKEN_INC, attrs, trig))
        if a.jokers:
            p.jokers -= a.jokers
            s.table_jokers += a.jokers
            if out is not None:
                attrs = {"amount": a.jokers}
                out.append(Event(tick, who, ev.PLAYER_JOKER_DEC, attrs, trig))
                out.append(Event(tick, who, ev.TABLE_JOKER_INC, attrs, trig))
        p.cards.append(card)
        p.bonuses[card.bonus] += 1
        if out is not None:
            out.append(Event(tick, who, ev.CARD_BUY, {"deck": card.tier}, trig))
        if card.points:
            p.points += card.points
            if out is not None:
                out.append(Event(tick, who, ev.POINTS_FROM_CARD, {"points": card.points}, trig))
        if kind == Kind.BUY_FACE_UP:
            _refill(s, a.deck, a.slot, out, tick, who, trig)
    elif kind == Kind.RESERVE_FACE_UP or kind == Kind.RESERVE_DECK_TOP:
        if kind == Kind.RESERVE_FACE_UP:
            card = s.face_up[a.deck][a.slot]
            p.reserved_visible.append(card)
            if out is not None:
                out.append(Event(tick, who, ev.RESERVE, {"deck": a.deck}, trig))
            _refill(s, a.deck, a.slot, out, tick, who, trig)
        else:
            card = s.decks[a.deck].pop()
            p.reserved_hidden.append(card)
            if out is not None:
                out.append(Event(tick, who, ev.CARD_DRAW, {"deck": a.deck}, trig))
                out.append(Event(tick, who, ev.RESERVE_HIDDEN, {"deck": a.deck}, trig))
        if s.table_jokers > 0:
            s.table_jokers -= 1
            p.jokers += 1
            if out is not None:
                attrs = {"amount": 1}
                out.append(Event(tick, who, ev.TABLE_JOKER_DEC, attrs, trig))
                out.append(Event(tick, who, ev.PLAYER_JOKER_INC, attrs, trig))
        _give_back(s, p, a, out, tick, who, trig)
    else:
        # a full round of forced passes can never be broken: the game is stuck
        s.passes += 1
        if s.passes >= len(s.players):
            s.finished = True
            s.stalled = True
    if kind != Kind.PASS:
        s.passes = 0

    _end_turn(s, who, out, trig)


def _give_back(s, p, a, out, tick, who, trig) -> None:
    if a.returns:
        for x, r in enumerate(a.returns):
            if r:
                p.tokens[x] -= r
                s.table_tokens[x] += r
                if out is not None:
                    attrs = {"suit": x, "amount": r}
                    out.append(Event(tick, who, ev.PLAYER_TOKEN_DEC, attrs, trig))
                    out.append(Event(tick, who, ev.TABLE_TOKEN_INC, attrs, trig))
    if a.return_jokers:
        p.jokers -= a.return_jokers
        s.table_jokers += a.return_jokers
        if out is not None:
            attrs = {"amount": a.return_jokers}
            out.append(Event(tick, who, ev.PLAYER_JOKER_DEC, attrs, trig))
            out.append(Event(tick, who, ev.TABLE_JOKER_INC, attrs, trig))


def _refill(s, deck, slot, out, tick, who, trig) -> None:
    stack = s.decks[deck]
    if stack:
        s.face_up[deck][slot] = stack.pop()
        if out is not None:
            out.append(Event(tick, who, ev.CARD_DRAW, {"deck": deck}, trig))
            out.append(Event(tick, who, ev.CARD_PLACE, {"deck": deck}, trig))
    else:
        s.face_up[deck][slot] = None


def _end_turn(s: GameState, who: int, out, trig) -> None:
    p = s.players[who]
    bonuses = p.bonuses
    for i, noble in enumerate(s.nobles):
        if all(b >= r for b, r in zip(bonuses, noble.requirement)):
            del s.nobles[i]
            p.nobles.append(noble)
            p.points += noble.points
            if out is not None:
                tick = s.tick
                out.append(Event(tick, who, ev.NOBLE_TAKE, {"noble": noble.id}, trig))
                out.append(Event(tick, who, ev.NOBLE_RECEIVE, {"noble": noble.id}, trig))
                out.append(Event(tick, ev.ENGINE, ev.POINTS_FROM_NOBLE, {"points": noble.points}, trig))
            break
    s.tick += 1
    nxt = who + 1
    if nxt == len(s.players):
        nxt = 0
        target = s.params.points_to_win
        if any(q.points >= target for q in s.players):
            s.finished = True
    s.current = nxt
    if not s.finished and s.tick >= s.params.max_turns:
        s.finished = True
        s.capped = True


# -- outcome ------------------------------------------------------------------


def is_terminal(s: GameState) -> bool:
    return s.finished


def winner(s: GameState) -> int | None:
    """Index of the winner, or None for a capped or stalled (tied) game."""
    if not s.finished:
        raise ValueError("winner requested on a non-terminal state")
    if s.capped or s.stalled:
        return None
    return min(range(len(s.players)), key=lambda i: (-s.players[i].points, len(s.players[i].cards), i))


def score(s: GameState, player: int) -> int:
    return s.players[player].points


class InvariantError(AssertionError):
    pass


def _require(ok: bool, message: str) -> None:
    if not ok:
        raise InvariantError(message)


def check_invariants(s: GameState, total_cards: int | None = None) -> None:
    """Raise InvariantError if conservation or holding limits are violated."""
    params = s.params
    for i in range(params.num_suits):
        held = s.table_tokens[i] + sum(p.tokens[i] for p in s.players)
        _require(held == params.tokens_per_suit, f"suit {i} not conserved: {held}")
        _require(s.table_tokens[i] >= 0, f"negative table stack {i}")
    jokers = s.table_jokers + sum(p.jokers for p in s.players)
    _require(jokers == params.joker_count, f"jokers not conserved: {jokers}")
    for p in s.players:
        _require(all(t >= 0 for t in p.tokens) and p.jokers >= 0, "negative holding")
        _require(p.held() <= params.max_tokens_held, f"player holds {p.held()} tokens")
        _require(len(p.reserved_visible) + len(p.reserved_hidden) <= params.max_reserved, "too many reservations")
        _require(p.points >= 0, "negative points")
        _require(p.bonuses == [sum(1 for c in p.cards if c.bonus == i) for i in range(params.num_suits)],
                 "bonuses out of sync with cards")
    for row in s.face_up:
        _require(len(row) == params.face_up_per_deck, "face-up row has the wrong length")
    if total_cards is not None:
        count = sum(len(d) for d in s.decks)
        count += sum(1 for row in s.face_up for c in row if c is not None)
        count += sum(len(p.cards) + len(p.reserved_visible) + len(p.reserved_hidden) for p in s.players)
        _require(count == total_cards, f"card count {count} != {total_cards}")
