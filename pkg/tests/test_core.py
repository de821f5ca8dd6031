import json
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from expandsqueeze.core import (
    WHITESPACE,
    Chunk,
    ChunkSet,
    ConfigError,
    Question,
    QueryBundle,
    RewardBreakdown,
    RolloutConfig,
    Segment,
    SegmentKind,
    Status,
    Trajectory,
    dumps_record,
    trajectory_from_record,
    trajectory_to_record,
    validate_config,
)

Q = Question("q1", "who?", ("x",), "toy")


def test_defaults_match_operating_constants():
    cfg = RolloutConfig()
    assert cfg.top_k == 10
    assert cfg.response_token_limit == 500
    assert cfg.retrieved_token_limit == 500
    assert cfg.lambda_format == 0.2
    assert validate_config(cfg) is cfg


@pytest.mark.parametrize(
    "field,value",
    [
        ("max_turns", 0),
        ("n_expansions", -1),
        ("top_k", 0),
        ("top_k", 2.5),
        ("response_token_limit", True),
        ("retrieved_token_limit", 0),
        ("lambda_format", -0.1),
        ("lambda_format", float("nan")),
        ("lambda_format", "0.2"),
    ],
)
def test_invalid_config_names_the_field(field, value):
    with pytest.raises(ConfigError) as err:
        validate_config(replace(RolloutConfig(), **{field: value}))
    assert err.value.field == field


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError) as err:
        RolloutConfig.from_dict({"top_k": 3, "topk": 4})
    assert err.value.field == "topk"
    assert RolloutConfig.from_dict({"top_k": 3}).top_k == 3


def test_config_digest_is_stable_and_sensitive():
    assert RolloutConfig().digest() == RolloutConfig().digest()
    assert RolloutConfig().digest() != RolloutConfig(top_k=3).digest()


def test_question_requires_text_and_golds():
    with pytest.raises(ValueError):
        Question("a", "  ", ("x",))
    with pytest.raises(ValueError):
        Question("a", "q", ())
    with pytest.raises(ValueError):
        Question("a", "q", ("",))


def test_trajectory_answer_invariant():
    ans = Segment(SegmentKind.ANSWER, "x", 0)
    Trajectory(Q, (ans,), Status.ANSWERED, "x", 1)
    with pytest.raises(ValueError):
        Trajectory(Q, (ans,), Status.EXHAUSTED, None, 1)
    with pytest.raises(ValueError):
        Trajectory(Q, (), Status.ANSWERED, "x", 1)
    with pytest.raises(ValueError):
        Trajectory(Q, (ans, ans), Status.ANSWERED, "x", 1)


def test_query_bundle_rejects_untrimmed():
    with pytest.raises(ValueError):
        QueryBundle((" a",))
    with pytest.raises(ValueError):
        QueryBundle(("",))
    assert len(QueryBundle(("a", "b"))) == 2


def test_chunkset_rank_and_score_order():
    ChunkSet("q", (Chunk("a", "", "", 2.0, 1), Chunk("b", "", "", 2.0, 2)))
    with pytest.raises(ValueError):
        ChunkSet("q", (Chunk("a", "", "", 1.0, 1), Chunk("b", "", "", 2.0, 2)))
    with pytest.raises(ValueError):
        ChunkSet("q", (Chunk("a", "", "", 1.0, 2),))


def test_reward_breakdown():
    r = RewardBreakdown.combine(1, 1, 0.2)
    assert r.total == 1.2 and r.consistent()
    assert r.to_dict() == {"em": 1, "format": 1, "lambda": 0.2, "total": 1.2}


def test_record_round_trip():
    segs = (
        Segment(SegmentKind.THINK, "hm", 0),
        Segment(SegmentKind.SEARCH, "a ## b", 0),
        Segment(SegmentKind.INFORMATION, "ünïcode", 0),
        Segment(SegmentKind.ANSWER, "x", 1),
    )
    t = Trajectory(Q, segs, Status.ANSWERED, "x", 2, None, {"total": 5})
    rec = trajectory_to_record(t, RolloutConfig(), RewardBreakdown.combine(1, 1, 0.2))
    line = dumps_record(rec)
    back = trajectory_from_record(json.loads(line))
    assert back == t
    assert "ünïcode" in line
    assert "timings_ms" not in trajectory_to_record(t, include_timings=False)


@given(st.text(), st.integers(min_value=0, max_value=50))
def test_whitespace_truncate_is_a_prefix_within_limit(text, limit):
    cut = WHITESPACE.truncate(text, limit)
    assert text.startswith(cut)
    assert WHITESPACE.count(cut) == min(limit, WHITESPACE.count(text))
