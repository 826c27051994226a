import json
import random

import pytest
from hypothesis import given, strategies as st

from r2 import events as ev
from r2.engine import PASS, Action, GameParams, Kind, apply_action, new_game, sample_action
from r2.events import (
    ENGINE,
    HC_MAPPING,
    ID_MAPPING,
    Event,
    EventLogger,
    LoggerError,
    TypeMapping,
    attach_logger,
    detach_logger,
    load_mapping,
    map_type,
    read_trace,
    synthesize,
    write_trace,
)

from builders import card, give, swap_face_up
from test_engine import pass_only_state


def types(events):
    return [e.type for e in events]


def hc(events, player=0):
    return synthesize(events, player, HC_MAPPING)


# -- golden traces, one per action kind ------------------------------------------


def test_take_different_trace(fresh):
    evs = apply_action(fresh, Action(Kind.TAKE_DIFFERENT, (0, 2, 4)))
    assert types(evs) == [2, 8] * 3
    assert [e.attributes for e in evs[::2]] == [{"suit": x, "amount": 1} for x in (0, 2, 4)]
    assert hc(evs) == [3, 0, 0, 0, 0]


def test_take_same_trace(fresh):
    evs = apply_action(fresh, Action(Kind.TAKE_SAME, (1,)))
    assert types(evs) == [2, 8]
    assert evs[1].attributes == {"suit": 1, "amount": 2}
    assert hc(evs) == [1, 0, 0, 0, 0]


def test_take_with_returns_trace(fresh):
    give(fresh, 0, [2, 2, 2, 2, 0], jokers=1)
    a = Action(Kind.TAKE_DIFFERENT, (0, 1, 4), returns=(0, 0, 1, 0, 0), return_jokers=1)
    evs = apply_action(fresh, a)
    assert types(evs) == [2, 8] * 3 + [9, 1, 11, 3]
    assert hc(evs) == [3, 0, 0, 0, 0]
    assert fresh.players[0].held() == 10


def test_buy_face_up_trace(fresh):
    swap_face_up(fresh, 0, 2, card(points=1, bonus=4, cost=(2, 0, 1, 0, 1)))
    give(fresh, 0, [2, 0, 1, 0, 0], jokers=1)
    a = Action(Kind.BUY_FACE_UP, deck=0, slot=2, payment=(2, 0, 1, 0, 0), jokers=1)
    evs = apply_action(fresh, a)
    assert types(evs) == [9, 1, 9, 1, 11, 3, 15, 16, 5, 6]
    assert hc(evs) == [0, 0, 0, 0, 1]
    assert synthesize(evs, 0, ID_MAPPING) == [0, 2, 0, 1, 0, 1, 1, 0, 0, 2, 0, 1, 0, 0, 0, 1, 1, 0]


def test_buy_zero_point_card_has_no_points_event(fresh):
    swap_face_up(fresh, 1, 0, card(points=0, tier=1, cost=(0, 1, 0, 0, 0)))
    give(fresh, 0, [0, 1, 0, 0, 0])
    evs = apply_action(fresh, Action(Kind.BUY_FACE_UP, deck=1, slot=0, payment=(0, 1, 0, 0, 0)))
    assert types(evs) == [9, 1, 15, 5, 6]
    assert evs[2].attributes == {"deck": 1}
    assert hc(evs) == [0, 0, 0, 0, 0]


def test_buy_reserved_trace(fresh):
    fresh.players[0].reserved_visible = [card(points=2, cost=(0, 0, 0, 1, 0), tier=1)]
    give(fresh, 0, [0, 0, 0, 1, 0])
    a = Action(Kind.BUY_RESERVED, slot=0, payment=(0, 0, 0, 1, 0))
    evs = apply_action(fresh, a)
    # no refill: the card came from the hand
    assert types(evs) == [9, 1, 15, 16]
    assert evs[-1].attributes == {"points": 2}
    assert hc(evs) == [0, 0, 0, 0, 1]


def test_reserve_face_up_trace(fresh):
    evs = apply_action(fresh, Action(Kind.RESERVE_FACE_UP, deck=2, slot=3))
    assert types(evs) == [13, 5, 6, 4, 10]
    assert hc(evs) == [1, 0, 1, 0, 0]


def test_reserve_deck_top_trace(fresh):
    evs = apply_action(fresh, Action(Kind.RESERVE_DECK_TOP, deck=1))
    assert types(evs) == [5, 12, 4, 10]
    assert hc(evs) == [1, 1, 0, 0, 0]


def test_reserve_without_jokers_left(fresh):
    fresh.players[1].jokers = fresh.table_jokers
    fresh.table_jokers = 0
    evs = apply_action(fresh, Action(Kind.RESERVE_FACE_UP, deck=0, slot=0))
    assert types(evs) == [13, 5, 6]
    assert hc(evs) == [0, 0, 1, 0, 0]


def test_pass_emits_nothing(params):
    s = pass_only_state(params)
    assert apply_action(s, PASS) == []


def test_noble_visit_trace(fresh):
    noble = fresh.nobles[1]
    fresh.players[0].bonuses = list(noble.requirement)
    evs = apply_action(fresh, Action(Kind.TAKE_DIFFERENT, (0, 1, 2)))
    assert types(evs) == [2, 8] * 3 + [0, 14, 17]
    tail = evs[-3:]
    assert [e.who for e in tail] == [0, 0, ENGINE]
    assert tail[2].trigger[0] == 0
    assert tail[2].attributes == {"points": 3}
    assert all(e.attributes == {"noble": noble.id} for e in tail[:2])
    assert hc(evs) == [3, 0, 0, 1, 1]
    # an engine event is credited to the acting player only
    assert hc(evs, player=1) == [0, 0, 0, 0, 0]


def test_events_share_tick_and_actor(fresh):
    apply_action(fresh, Action(Kind.TAKE_DIFFERENT, (0, 1, 2)))
    evs = apply_action(fresh, Action(Kind.RESERVE_DECK_TOP, deck=0))
    assert {e.tick for e in evs} == {1}
    assert {e.who for e in evs} == {1}


@given(st.integers(0, 10_000))
def test_attributes_follow_signatures(seed):
    s = new_game(GameParams.standard(2), seed=seed)
    rng = random.Random(seed)
    for _ in range(40):
        if s.finished:
            break
        for e in apply_action(s, sample_action(s, rng)):
            assert tuple(e.attributes) == ev.SIGNATURES[e.type]
            assert e.signature == ev.SIGNATURES[e.type]
            assert e.duration == 0 and e.duration_type is ev.DurationType.INSTANT


# -- loggers -------------------------------------------------------------------------


def test_logger_receives_applied_events(fresh):
    log = EventLogger()
    attach_logger(fresh, log)
    evs = apply_action(fresh, Action(Kind.TAKE_DIFFERENT, (0, 1, 2)))
    assert log.buffer == evs
    log.clear()
    assert log.buffer == []


def test_double_attach_and_missing_detach(fresh):
    log = EventLogger()
    attach_logger(fresh, log)
    with pytest.raises(LoggerError):
        attach_logger(fresh, log)
    detach_logger(fresh, log)
    with pytest.raises(LoggerError):
        detach_logger(fresh, log)


def test_trace_json_lines_round_trip(fresh, tmp_path):
    evs = apply_action(fresh, Action(Kind.RESERVE_FACE_UP, deck=0, slot=1))
    path = tmp_path / "trace.jsonl"
    write_trace(evs, path)
    lines = path.read_text().splitlines()
    assert len(lines) == len(evs)
    back = read_trace(path)
    assert [d["type"] for d in back] == types(evs)
    assert back[0]["name"] == "reserve"
    assert back == [json.loads(json.dumps(e.to_dict())) for e in evs]


# -- mappings and synthesis --------------------------------------------------------


def test_builtin_mappings():
    assert ID_MAPPING.group_count == 18
    assert HC_MAPPING.group_count == 5
    assert [map_type(HC_MAPPING, t) for t in (8, 10, 12, 13, 14, 16, 17)] == [0, 0, 1, 2, 3, 4, 4]
    assert all(map_type(HC_MAPPING, t) == -1 for t in (0, 1, 2, 3, 4, 5, 6, 7, 9, 11, 15))
    with pytest.raises(ValueError):
        map_type(ID_MAPPING, 18)


def test_shipped_mapping_files_match():
    from importlib import resources

    data = resources.files("r2.data")
    assert tuple(json.loads(data.joinpath("hc_mapping.json").read_text())) == HC_MAPPING.table
    assert tuple(json.loads(data.joinpath("id_mapping.json").read_text())) == ID_MAPPING.table


def test_load_mapping_sources(tmp_path):
    assert load_mapping("hc") is HC_MAPPING
    path = tmp_path / "m.json"
    path.write_text(json.dumps(list(HC_MAPPING.table)))
    assert load_mapping(path).table == HC_MAPPING.table
    assert load_mapping([0] * 18).group_count == 1


@pytest.mark.parametrize("table", [[0] * 17, [2] + [-1] * 17, [-2] + [0] * 17])
def test_bad_mappings_rejected(table):
    with pytest.raises(ValueError):
        TypeMapping(tuple(table))


def _event(t, who=0):
    return Event(0, who, t, {})


@given(st.lists(st.tuples(st.integers(0, 17), st.integers(0, 1))))
def test_synthesis_counts_match_naive_oracle(raw):
    evs = [_event(t, who) for t, who in raw]
    for mapping in (ID_MAPPING, HC_MAPPING):
        expected = [0] * mapping.group_count
        for t, who in raw:
            if who == 0 and mapping.table[t] >= 0:
                expected[mapping.table[t]] += 1
        assert synthesize(evs, 0, mapping) == expected


@given(st.lists(st.integers(0, 17)), st.lists(st.integers(0, 17)))
def test_synthesis_is_additive_and_order_free(a, b):
    ea, eb = [_event(t) for t in a], [_event(t) for t in b]
    joined = synthesize(ea + eb, 0, ID_MAPPING)
    assert joined == [x + y for x, y in zip(synthesize(ea, 0, ID_MAPPING), synthesize(eb, 0, ID_MAPPING))]
    assert synthesize(eb + ea, 0, ID_MAPPING) == joined
