import json
import subprocess
import sys

import pytest

from expandsqueeze.casestudies import CASES, TOY_CORPUS
from expandsqueeze.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main


@pytest.fixture
def workspace(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    corpus.write_text(
        "".join(json.dumps({"doc_id": d.doc_id, "title": d.title, "text": d.text}) + "\n" for d in TOY_CORPUS),
        encoding="utf-8",
    )
    dataset = tmp_path / "cases.jsonl"
    dataset.write_text(
        "".join(
            json.dumps({"id": c.question.id, "question": c.question.text,
                        "golden_answers": list(c.question.golden_answers), "dataset": c.question.dataset}) + "\n"
            for c in CASES
        ),
        encoding="utf-8",
    )
    policy = tmp_path / "policy.json"
    policy.write_text(json.dumps({c.question.id: list(c.policy_script) for c in CASES}))
    squeezer = tmp_path / "squeezer.json"
    squeezer.write_text(json.dumps({c.question.id: list(c.squeezer_script) for c in CASES}))
    index = tmp_path / "toy.idx"
    assert main(["index", "build", "--corpus", str(corpus), "--out", str(index)]) == EXIT_OK
    common = ["--retriever", str(index), "--policy", f"script:{policy}", "--squeezer", f"script:{squeezer}"]
    return tmp_path, dataset, common


def test_run_eval_replay(workspace, capsys):
    tmp, dataset, common = workspace
    out = tmp / "traj.jsonl"
    assert main(["run", *common, "--dataset", str(dataset), "--out", str(out)]) == EXIT_OK
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["final_answer"] for r in recs] == ["YG Entertainment", "12 June 1516"]
    assert all(r["reward"]["total"] == 1.2 for r in recs)
    manifest = json.loads((tmp / "traj.jsonl.manifest.json").read_text())
    assert manifest["status_counts"] == {"answered": 2}

    assert main(["eval", *common, "--dataset", str(dataset), "--out-dir", str(tmp / "ev")]) == EXIT_OK
    report = json.loads((tmp / "ev" / "report.json").read_text())
    assert report["overall"] == {"em_mean": 1.0, "count": 2, "failed": 0}
    assert set(report["per_dataset"]) == {"hotpotqa", "2wikimultihopqa"}

    assert main(["replay", "--trajectories", str(out), "--out-dir", str(tmp / "rp")]) == EXIT_OK
    assert json.loads((tmp / "rp" / "report.json").read_text())["overall"]["em_mean"] == 1.0

    assert main(["classify-expansions", "--trajectories", str(out), "--out", str(tmp / "cls.json")]) == EXIT_OK
    summary = json.loads((tmp / "cls.json").read_text())["summary"]
    assert summary["syntax_pct"] + summary["semantic_pct"] == 100.0


def test_run_is_byte_identical_without_timings(workspace):
    tmp, dataset, common = workspace
    a, b = tmp / "a.jsonl", tmp / "b.jsonl"
    assert main(["run", *common, "--parallelism", "2", "--dataset", str(dataset), "--out", str(a), "--no-timings"]) == 0
    assert main(["run", *common, "--parallelism", "2", "--dataset", str(dataset), "--out", str(b), "--no-timings"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_partial_failure_exit_code(workspace):
    tmp, dataset, common = workspace
    short = tmp / "short.json"
    short.write_text(json.dumps({CASES[0].question.id: list(CASES[0].policy_script)}))
    common = [*common[:2], "--policy", f"script:{short}", *common[4:]]
    out = tmp / "t.jsonl"
    assert main(["run", *common, "--dataset", str(dataset), "--out", str(out)]) == EXIT_PARTIAL
    statuses = [json.loads(line)["status"] for line in out.read_text().splitlines()]
    assert statuses == ["answered", "failed"]


def test_config_file_and_flags(workspace):
    tmp, dataset, common = workspace
    cfg = tmp / "cfg.json"
    cfg.write_text(json.dumps({"top_k": 3, "max_turns": 2}))
    out = tmp / "t.jsonl"
    # max_turns=2 leaves no turn for the scripted answer
    assert main(["run", *common, "--config", str(cfg), "--dataset", str(dataset), "--out", str(out)]) == EXIT_OK
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert {r["status"] for r in recs} == {"exhausted"}
    assert recs[0]["config"]["top_k"] == 3
    assert main(["run", *common, "--config", str(cfg), "--max-turns", "4", "--dataset", str(dataset),
                 "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text().splitlines()[0])["status"] == "answered"


@pytest.mark.parametrize(
    "extra,cfg",
    [
        (["--top-k", "0"], None),
        ([], {"lambda_format": -1}),
        ([], {"no_such_key": 1}),
        ([], [1, 2]),
    ],
)
def test_config_errors_exit_2(workspace, extra, cfg, capsys):
    tmp, dataset, common = workspace
    args = ["run", *common, *extra, "--dataset", str(dataset), "--out", str(tmp / "x.jsonl")]
    if cfg is not None:
        (tmp / "bad.json").write_text(json.dumps(cfg))
        args += ["--config", str(tmp / "bad.json")]
    assert main(args) == EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_missing_inputs_exit_2(workspace):
    tmp, dataset, common = workspace
    assert main(["run", "--policy", "script:x", "--dataset", str(dataset), "--out", str(tmp / "o")]) == EXIT_CONFIG
    assert main(["run", *common, "--dataset", str(tmp / "nope.jsonl"), "--out", str(tmp / "o")]) == EXIT_CONFIG
    assert main(["index", "build", "--corpus", str(tmp / "nope"), "--out", str(tmp / "i")]) == EXIT_CONFIG


def test_sweep_command(workspace):
    tmp, dataset, common = workspace
    code = main(["sweep", *common, "--axis", "top_k", "--values", "1,3", "--dataset", str(dataset),
                 "--out-dir", str(tmp / "sw")])
    assert code == EXIT_OK
    assert json.loads((tmp / "sw" / "sweep.json").read_text())["values"] == [1, 3]
    assert main(["sweep", *common, "--axis", "top_k", "--values", "3,1", "--dataset", str(dataset),
                 "--out-dir", str(tmp / "sw")]) == EXIT_CONFIG


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "expandsqueeze", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for verb in ["index", "run", "eval", "sweep", "classify-expansions", "replay"]:
        assert verb in out.stdout
