"""Replay the two worked multi-hop rollouts against the toy corpus and print each turn."""

import argparse
import json

from expandsqueeze import BM25Index, ScriptedGateway, Squeezer, run_rollout, total_reward
from expandsqueeze.casestudies import CASES, TOY_CORPUS
from expandsqueeze.core import RolloutConfig
from expandsqueeze.rollout import EventKind


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--top-k", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print events as JSON lines")
    args = ap.parse_args()

    index = BM25Index()
    index.build(TOY_CORPUS)
    cfg = RolloutConfig(top_k=args.top_k)
    for case in CASES:
        events = []
        traj = run_rollout(
            case.question,
            cfg,
            ScriptedGateway(case.policy_script, "scripted-policy"),
            index,
            Squeezer(ScriptedGateway(case.squeezer_script, "scripted-squeezer")),
            sink=events.append,
        )
        print(f"== {case.question.id}: {case.question.text}")
        for ev in events:
            if args.json:
                print(json.dumps({"kind": ev.kind.value, "turn": ev.turn, **ev.payload}))
            elif ev.kind is EventKind.SEARCH_DISPATCHED:
                print(f"  turn {ev.turn} search: {ev.payload['queries']}")
            elif ev.kind is EventKind.SUMMARY_INJECTED:
                print(f"  turn {ev.turn} docs {ev.payload['doc_ids']} -> {ev.payload['summary']!r}")
        r = total_reward(traj, cfg)
        print(f"  {traj.status.value}: {traj.final_answer!r}  em={r.em} format={r.format} total={r.total}")


if __name__ == "__main__":
    main()
