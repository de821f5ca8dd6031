import pytest

from expandsqueeze import Collaborators, ScriptedGateway, Squeezer, run_batch, run_rollout, total_reward
from expandsqueeze.casestudies import ANHALT_CASE, CASES, WINNER_CASE
from expandsqueeze.core import Question, RolloutConfig, SegmentKind, Status
from expandsqueeze.gateway import CallableGateway
from expandsqueeze.rollout import EventKind, RolloutEvent, is_valid_event_path
from expandsqueeze.tags import RETHINK_NOTICE, render_prompt

from conftest import case_collaborators

CFG = RolloutConfig()


def replay(case, index, cfg=CFG, **kw):
    policy = ScriptedGateway(case.policy_script, "policy")
    squeezer = ScriptedGateway(case.squeezer_script, "squeezer")
    events = []
    traj = run_rollout(case.question, cfg, policy, index, Squeezer(squeezer), sink=events.append, **kw)
    return traj, policy, squeezer, events


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.question.id)
def test_case_study_replay(case, toy_index):
    traj, policy, squeezer, events = replay(case, toy_index)
    assert traj.status is Status.ANSWERED
    assert traj.final_answer == case.question.golden_answers[0]
    assert traj.turn_count == 3
    r = total_reward(traj, CFG)
    assert (r.em, r.format, r.total) == (1, 1, 1.2)
    assert is_valid_event_path(events)
    assert policy.remaining == 0 and squeezer.remaining == 0

    # the transcript only ever grows, and starts from the instruction prompt
    prefix = render_prompt(case.question, CFG)
    assert all(p.startswith(prefix) for p in policy.prompts)
    assert all(b.startswith(a) for a, b in zip(policy.prompts, policy.prompts[1:]))
    for summary in case.squeezer_script:
        assert f"<information>{summary}</information>" in policy.prompts[-1]

    # every search turn surfaced its evidence document to the squeezer
    for turn, doc in enumerate(case.evidence):
        assert "Doc" in squeezer.prompts[turn]
        injected = [e for e in events if e.kind is EventKind.SUMMARY_INJECTED and e.turn == turn]
        assert doc in injected[0].payload["doc_ids"]


def test_segments_are_tagged_by_turn(toy_index):
    traj, *_ = replay(WINNER_CASE, toy_index)
    kinds = [(s.kind, s.turn_index) for s in traj.segments]
    assert kinds == [
        (SegmentKind.THINK, 0), (SegmentKind.SEARCH, 0), (SegmentKind.INFORMATION, 0),
        (SegmentKind.THINK, 1), (SegmentKind.SEARCH, 1), (SegmentKind.INFORMATION, 1),
        (SegmentKind.ANSWER, 2),
    ]


def test_rethink_until_exhausted(toy_index):
    cfg = RolloutConfig(max_turns=3)
    policy = ScriptedGateway(["I am not sure.", "<think>hmm", "<search> ## </search>"])
    events = []
    traj = run_rollout(ANHALT_CASE.question, cfg, policy, toy_index, Squeezer(ScriptedGateway([])), sink=events.append)
    assert traj.status is Status.EXHAUSTED and traj.turn_count == 3
    rethinks = [s for s in traj.segments if s.kind is SegmentKind.RETHINK]
    assert len(rethinks) == 3 and all(s.content == RETHINK_NOTICE for s in rethinks)
    assert policy.prompts[-1].count(RETHINK_NOTICE) == 2
    assert total_reward(traj, cfg).format == 0
    assert is_valid_event_path(events)
    assert events[-1].kind is EventKind.EXHAUSTED


def test_rethink_then_answer(toy_index):
    policy = ScriptedGateway(["nothing", "<think>ok</think><answer>12 June 1516</answer>"])
    traj = run_rollout(ANHALT_CASE.question, CFG, policy, toy_index, Squeezer(ScriptedGateway([])))
    assert traj.status is Status.ANSWERED and traj.turn_count == 2
    r = total_reward(traj, CFG)
    assert (r.em, r.format) == (1, 0)


def test_search_without_think_loses_format(toy_index):
    policy = ScriptedGateway(["<search>WINNER</search>", "<think>t</think><answer>YG Entertainment</answer>"])
    traj = run_rollout(WINNER_CASE.question, CFG, policy, toy_index, Squeezer(ScriptedGateway(["s"])))
    assert total_reward(traj, CFG).total == 1.0


def test_bundle_truncated_to_max_size(toy_index):
    cfg = RolloutConfig(max_bundle_size=2, max_turns=1)
    policy = ScriptedGateway(["<think>t</think><search>a ## b ## c ## d</search>"])
    squeezer = ScriptedGateway(["s"])
    events = []
    run_rollout(WINNER_CASE.question, cfg, policy, toy_index, Squeezer(squeezer), sink=events.append)
    dispatched = [e for e in events if e.kind is EventKind.SEARCH_DISPATCHED]
    assert dispatched[0].payload["queries"] == ["a", "b"]
    assert "\n1. a\n2. b\n" in squeezer.prompts[0]


def test_bundle_filter_applied(toy_index):
    policy = ScriptedGateway(["<think>t</think><search>x ## y</search>"])
    squeezer = ScriptedGateway(["s"])
    run_rollout(WINNER_CASE.question, RolloutConfig(max_turns=1), policy, toy_index, Squeezer(squeezer),
                bundle_filter=lambda b: type(b)(b.queries[:1]))
    assert "2. y" not in squeezer.prompts[0]


def test_top_k_and_limits_reach_collaborators(toy_index):
    cfg = RolloutConfig(top_k=2, response_token_limit=77, retrieved_token_limit=5, max_turns=1)
    policy = ScriptedGateway(["<think>t</think><search>WINNER</search>"])
    squeezer = ScriptedGateway(["one two three four five six seven eight"])
    traj = run_rollout(WINNER_CASE.question, cfg, policy, toy_index, Squeezer(squeezer))
    assert policy.requests[0].max_tokens == 77
    assert policy.requests[0].stop_sequences == ("</search>", "</answer>")
    assert squeezer.prompts[0].count("\nDoc ") == 2
    info = [s for s in traj.segments if s.kind is SegmentKind.INFORMATION][0]
    assert len(f"<information>{info.content}</information>".split()) <= 5


def test_policy_failure_is_failed(toy_index):
    events = []
    traj = run_rollout(WINNER_CASE.question, CFG, ScriptedGateway([]), toy_index,
                       Squeezer(ScriptedGateway([])), sink=events.append)
    assert traj.status is Status.FAILED
    assert traj.error.startswith("turn 0 generate:")
    assert is_valid_event_path(events)
    assert total_reward(traj, CFG).total == 0


class Broken:
    def identity(self):
        return "broken"

    def retrieve(self, q, k):
        raise RuntimeError("index offline")


def test_retrieval_failure_is_failed():
    policy = ScriptedGateway(["<think>t</think><search>a</search>"])
    traj = run_rollout(WINNER_CASE.question, CFG, policy, Broken(), Squeezer(ScriptedGateway([])))
    assert traj.status is Status.FAILED
    assert "turn 0 search" in traj.error and "index offline" in traj.error


def test_squeezer_failure_is_failed(toy_index):
    policy = ScriptedGateway(["<think>t</think><search>a</search>"])
    traj = run_rollout(WINNER_CASE.question, CFG, policy, toy_index, Squeezer(ScriptedGateway([])))
    assert traj.status is Status.FAILED


def test_event_path_validator():
    def ev(*kinds):
        return [RolloutEvent(k, 0, "q") for k in kinds]

    K = EventKind
    assert is_valid_event_path(ev(K.TURN_STARTED, K.GENERATION_RECEIVED, K.ANSWERED))
    assert is_valid_event_path(ev(K.EXHAUSTED))
    assert not is_valid_event_path(ev(K.TURN_STARTED, K.ANSWERED))
    assert not is_valid_event_path(ev(K.TURN_STARTED, K.GENERATION_RECEIVED))
    assert not is_valid_event_path(ev(K.TURN_STARTED, K.GENERATION_RECEIVED, K.ANSWERED, K.TURN_STARTED))


def test_batch_order_isolation_and_manifest(toy_index):
    good = case_collaborators(toy_index)
    bad_q = Question("missing", "unknown question?", ("x",), "toy")
    questions = [WINNER_CASE.question, bad_q, ANHALT_CASE.question]
    batch = run_batch(questions, CFG, good, parallelism=3, seed=5)
    assert [t.question.id for t in batch.trajectories] == [q.id for q in questions]
    assert [t.status for t in batch.trajectories] == [Status.ANSWERED, Status.FAILED, Status.ANSWERED]
    assert "KeyError" in batch.trajectories[1].error
    m = batch.manifest
    assert m["status_counts"] == {"answered": 2, "failed": 1}
    assert m["config_hash"] == CFG.digest()
    assert m["index_identity"] == toy_index.identity()
    assert m["seed"] == 5 and m["parallelism"] == 3 and m["n_questions"] == 3


def test_batch_shared_callable_policy(toy_index):
    policy = CallableGateway(lambda p: "<think>t</think><answer>YG Entertainment</answer>", "const")
    collab = Collaborators(policy, toy_index, Squeezer(ScriptedGateway([])))
    batch = run_batch([WINNER_CASE.question] * 5, CFG, collab, parallelism=4)
    assert all(t.final_answer == "YG Entertainment" for t in batch.trajectories)
    assert batch.manifest["models"]["policy"] == "const"


def test_batch_rejects_bad_parallelism(toy_index):
    with pytest.raises(ValueError):
        run_batch([], CFG, case_collaborators(toy_index), parallelism=0)
