"""Command line: index build/serve, run, eval, sweep, classify-expansions, replay.

Exit codes: 0 success, 1 partial failure (some rollouts failed), 2 config or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any

from .bench import (
    SweepSpec,
    classify_expansions,
    evaluate,
    load_dataset,
    read_trajectories,
    rule_based_expansion_classifier,
    run_sweep,
    write_sweep,
    write_trajectories,
)
from .core import ConfigError, RolloutConfig, SchemaError, validate_config
from .gateway import CallableGateway, OpenAIGateway, ScriptedGateway
from .retrieval import BM25Index, RemoteRetriever, ingest_corpus, make_retrieval_server
from .rewards import write_rows_csv
from .rollout import Collaborators, run_batch
from .squeeze import Squeezer

log = logging.getLogger("expandsqueeze")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2

_CFG_KEYS = {f.name for f in fields(RolloutConfig)}
# flat config-file keys besides the RolloutConfig fields
_RUNTIME_DEFAULTS: dict[str, Any] = {
    "retriever": None,
    "policy": None,
    "policy_model": "policy",
    "squeezer": None,
    "squeezer_model": "squeezer",
    "classifier": "rules",
    "classifier_model": "classifier",
    "endpoint": "chat",
    "api_key_env": "OPENAI_API_KEY",
    "seed": 0,
    "parallelism": 1,
    "temperature": 1.0,
    "max_retries": 3,
    "max_calls": None,
    "trace": False,
}


class UsageError(Exception):
    pass


def load_settings(args: argparse.Namespace) -> tuple[RolloutConfig, dict[str, Any]]:
    raw: dict[str, Any] = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
    unknown = set(raw) - _CFG_KEYS - set(_RUNTIME_DEFAULTS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config key")
    cfg_data = {k: v for k, v in raw.items() if k in _CFG_KEYS}
    runtime = {**_RUNTIME_DEFAULTS, **{k: v for k, v in raw.items() if k in _RUNTIME_DEFAULTS}}
    for key in list(_CFG_KEYS) + list(_RUNTIME_DEFAULTS):
        value = getattr(args, key, None)
        if value is not None:
            (cfg_data if key in _CFG_KEYS else runtime)[key] = value
    return validate_config(RolloutConfig(**cfg_data)), runtime


def _scripts(path: str) -> dict[str, list[str]]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
        raise UsageError(f"{path}: expected an object mapping question id to a list of texts")
    return data


def make_gateway(spec: str | None, model: str, rt: dict[str, Any], role: str):
    """A shared gateway, or a per-question factory for ``script:`` specs."""
    if not spec:
        raise UsageError(f"no {role} backend configured (--{role})")
    if spec.startswith(("http://", "https://")):
        return OpenAIGateway(
            spec,
            model,
            api_key_env=rt["api_key_env"],
            endpoint=rt["endpoint"],
            max_retries=rt["max_retries"],
            max_calls=rt["max_calls"],
            trace=rt["trace"],
        )
    if spec.startswith("script:"):
        scripts = _scripts(spec[len("script:"):])
        return lambda q: ScriptedGateway(scripts.get(q.id, []), label=f"script:{role}")
    if spec == "rules" and role == "classifier":
        return CallableGateway(rule_based_expansion_classifier, label="rules")
    raise UsageError(f"unrecognised {role} backend {spec!r}")


def make_retriever(spec: str | None):
    if not spec:
        raise UsageError("no retriever configured (--retriever INDEX_FILE|URL)")
    if spec.startswith(("http://", "https://")):
        return RemoteRetriever(spec)
    return BM25Index.load(spec)


def make_collaborators(rt: dict[str, Any]) -> Collaborators:
    policy = make_gateway(rt["policy"], rt["policy_model"], rt, "policy")
    sq = make_gateway(rt["squeezer"], rt["squeezer_model"], rt, "squeezer")
    squeezer = Squeezer(sq) if hasattr(sq, "generate") else (lambda q: Squeezer(sq(q)))
    return Collaborators(policy, make_retriever(rt["retriever"]), squeezer)


# --- commands -----------------------------------------------------------------


def cmd_index_build(args, cfg, rt) -> int:
    index = ingest_corpus(args.corpus, skip_malformed=args.skip_malformed)
    index.save(args.out)
    print(json.dumps({"out": args.out, "identity": index.identity(), **vars(index.stats)}))
    return EXIT_OK


def cmd_index_serve(args, cfg, rt) -> int:
    server = make_retrieval_server(BM25Index.load(args.index), args.host, args.port)
    print(f"serving {args.index} on http://{server.server_address[0]}:{server.server_address[1]}/", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _run(args, cfg, rt):
    questions = load_dataset(args.dataset)
    collab = make_collaborators(rt)
    return run_batch(questions, cfg, collab, rt["parallelism"], temperature=rt["temperature"], seed=rt["seed"])


def _status(trajectories) -> int:
    return EXIT_PARTIAL if any(t.status.value == "failed" for t in trajectories) else EXIT_OK


def cmd_run(args, cfg, rt) -> int:
    batch = _run(args, cfg, rt)
    write_trajectories(args.out, batch.trajectories, cfg, include_timings=not args.no_timings)
    manifest_path = Path(args.manifest or f"{args.out}.manifest.json")
    manifest_path.write_text(json.dumps(batch.manifest, indent=2), encoding="utf-8")
    print(json.dumps(batch.manifest["status_counts"]))
    return _status(batch.trajectories)


def _write_report(out_dir: Path, report, rows) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    write_rows_csv(rows, out_dir / "rows.csv")
    print(json.dumps(report.overall))


def cmd_eval(args, cfg, rt) -> int:
    batch = _run(args, cfg, rt)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectories(out / "trajectories.jsonl", batch.trajectories, cfg, include_timings=not args.no_timings)
    (out / "manifest.json").write_text(json.dumps(batch.manifest, indent=2), encoding="utf-8")
    report, rows = evaluate(batch.trajectories, cfg)
    _write_report(out, report, rows)
    return _status(batch.trajectories)


def cmd_replay(args, cfg, rt) -> int:
    trajectories = [t for t, _ in read_trajectories(args.trajectories)]
    report, rows = evaluate(trajectories, cfg)
    _write_report(Path(args.out_dir), report, rows)
    return EXIT_OK


def cmd_sweep(args, cfg, rt) -> int:
    values = tuple(int(v) for v in args.values.split(","))
    spec = SweepSpec(args.axis, values, cfg, rt["seed"])
    questions = load_dataset(args.dataset)
    cells = run_sweep(spec, questions, make_collaborators(rt), rt["parallelism"], rt["temperature"])
    json_path, csv_path = write_sweep(cells, spec, args.out_dir)
    print(f"wrote {json_path} and {csv_path}")
    failed = any(c.report is None or c.report.overall["failed"] for c in cells)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_classify(args, cfg, rt) -> int:
    gw = make_gateway(rt["classifier"], rt["classifier_model"], rt, "classifier")
    if not hasattr(gw, "generate"):
        raise UsageError("classifier backend must be a shared endpoint or 'rules'")
    trajectories = [t for t, _ in read_trajectories(args.trajectories)]
    result = classify_expansions(trajectories, gw)
    payload = {
        "summary": result.summary,
        "labels": [vars(x) for x in result.labels],
        "unparseable": result.unparseable,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(json.dumps(result.summary))
    return EXIT_PARTIAL if result.unparseable else EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="JSON file with rollout config keys and endpoints")
    g.add_argument("--retriever", help="index file from 'index build', or URL of a retrieval service")
    g.add_argument("--policy", help="policy backend: OpenAI-compatible base URL or script:FILE")
    g.add_argument("--policy-model", dest="policy_model")
    g.add_argument("--squeezer", help="squeezer backend: OpenAI-compatible base URL or script:FILE")
    g.add_argument("--squeezer-model", dest="squeezer_model")
    g.add_argument("--classifier", help="expansion classifier: base URL or 'rules'")
    g.add_argument("--classifier-model", dest="classifier_model")
    g.add_argument("--endpoint", choices=["chat", "completions"])
    g.add_argument("--seed", type=int)
    g.add_argument("--parallelism", type=int)
    g.add_argument("--temperature", type=float)
    g.add_argument("--max-turns", dest="max_turns", type=int)
    g.add_argument("--n-expansions", dest="n_expansions", type=int)
    g.add_argument("--top-k", dest="top_k", type=int)
    g.add_argument("--lambda", dest="lambda_format", type=float)
    g.add_argument("--strict-em", dest="strict_em", action="store_true", default=None)
    g.add_argument("--trace", action="store_true", default=None, help="log request/response JSON")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="expandsqueeze", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    idx = sub.add_parser("index", help="build or serve a BM25 index").add_subparsers(dest="index_cmd", required=True)
    b = idx.add_parser("build", parents=[common])
    b.add_argument("--corpus", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--skip-malformed", action="store_true")
    b.set_defaults(func=cmd_index_build)
    s = idx.add_parser("serve", parents=[common])
    s.add_argument("--index", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(func=cmd_index_serve)

    r = sub.add_parser("run", parents=[common], help="roll out a dataset and write trajectories")
    r.add_argument("--dataset", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--manifest")
    r.add_argument("--no-timings", action="store_true")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", parents=[common], help="run, score and report")
    e.add_argument("--dataset", required=True)
    e.add_argument("--out-dir", required=True)
    e.add_argument("--no-timings", action="store_true")
    e.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", parents=[common], help="evaluate across n_expansions or top_k values")
    sw.add_argument("--axis", required=True, choices=["n_expansions", "top_k"])
    sw.add_argument("--values", required=True, help="comma-separated, strictly increasing")
    sw.add_argument("--dataset", required=True)
    sw.add_argument("--out-dir", required=True)
    sw.set_defaults(func=cmd_sweep)

    c = sub.add_parser("classify-expansions", parents=[common], help="label expansions as syntax/semantic")
    c.add_argument("--trajectories", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_classify)

    rp = sub.add_parser("replay", parents=[common], help="re-score stored trajectories")
    rp.add_argument("--trajectories", required=True)
    rp.add_argument("--out-dir", required=True)
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg, rt = load_settings(args)
        return args.func(args, cfg, rt)
    except (ConfigError, SchemaError, UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
