"""End-to-end tests of the command-line interface."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from cqasynth.cli import main
from cqasynth.corpus import read_dataset, write_dataset

from conftest import DATA_DIR, make_toy_passages


def _write_passages(path: Path, count: int = 8) -> Path:
    with path.open("w", encoding="utf-8") as handle:
        for passage in make_toy_passages(count):
            handle.write(json.dumps(
                {"id": passage.id, "domain": passage.domain, "text": passage.text}
            ) + "\n")
    return path


@pytest.fixture
def passages_file(tmp_path) -> Path:
    return _write_passages(tmp_path / "passages.jsonl")


def test_synthesize_writes_dataset_and_manifest(tmp_path, passages_file, capsys):
    out = tmp_path / "ds.jsonl"
    code = main([
        "synthesize", "--passages", str(passages_file), "--out", str(out), "--seed", "3",
    ])
    assert code == 0
    dataset = read_dataset(out)
    assert dataset
    manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
    assert manifest["command"] == "synthesize"
    assert manifest["seed"] == 3
    assert manifest["config"]["ratio"] == "8:1:1"
    assert "Data type" in capsys.readouterr().out


def test_synthesize_missing_passages_is_exit_2(tmp_path, capsys):
    code = main([
        "synthesize", "--passages", str(tmp_path / "nope.jsonl"),
        "--out", str(tmp_path / "out.jsonl"),
    ])
    assert code == 2
    assert "nope.jsonl" in capsys.readouterr().err


def test_synthesize_missing_config_is_exit_2(tmp_path, passages_file, capsys):
    code = main([
        "synthesize", "--passages", str(passages_file),
        "--out", str(tmp_path / "out.jsonl"), "--config", str(tmp_path / "no.conf"),
    ])
    assert code == 2
    assert "no.conf" in capsys.readouterr().err


def test_synthesize_default_seed_recorded(tmp_path, passages_file):
    out = tmp_path / "ds.jsonl"
    assert main(["synthesize", "--passages", str(passages_file), "--out", str(out)]) == 0
    manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
    assert manifest["seed"] == 0


def test_synthesize_byte_reproducible(tmp_path, passages_file):
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    for out in (first, second):
        assert main([
            "synthesize", "--passages", str(passages_file),
            "--out", str(out), "--seed", "9",
        ]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_synthesize_config_file_with_flag_override(tmp_path, passages_file):
    conf = tmp_path / "run.conf"
    conf.write_text("seed = 4\nmax_kept_turns = 2\nmax_attempts_per_conversation = 4\n")
    out = tmp_path / "ds.jsonl"
    assert main([
        "synthesize", "--passages", str(passages_file), "--out", str(out),
        "--config", str(conf), "--seed", "5",
    ]) == 0
    manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
    assert manifest["seed"] == 5  # flag wins
    assert manifest["config"]["max_kept_turns"] == 2
    assert all(len(c.pairs) <= 2 for c in read_dataset(out))


def test_config_env_var_provides_default(tmp_path, passages_file, monkeypatch):
    conf = tmp_path / "env.conf"
    conf.write_text("max_kept_turns = 2\nmax_attempts_per_conversation = 3\n")
    monkeypatch.setenv("CQASYNTH_CONFIG", str(conf))
    out = tmp_path / "ds.jsonl"
    assert main(["synthesize", "--passages", str(passages_file), "--out", str(out)]) == 0
    manifest = json.loads(Path(str(out) + ".manifest.json").read_text())
    assert manifest["config"]["max_kept_turns"] == 2


def test_filter_context_level_unknownizes(tmp_path, passages_file):
    raw = tmp_path / "raw.jsonl"
    assert main([
        "synthesize", "--passages", str(passages_file), "--out", str(raw),
        "--seed", "3", "--level", "none",
    ]) == 0
    for conversation in read_dataset(raw):
        assert all(p.status == "kept" for p in conversation.pairs)

    filtered = tmp_path / "filtered.jsonl"
    assert main([
        "filter", "--in", str(raw), "--passages", str(passages_file),
        "--out", str(filtered), "--scorer", "hash:3", "--level", "context",
    ]) == 0
    statuses = [p.status for c in read_dataset(filtered) for p in c.pairs]
    assert "unknownized" in statuses
    assert all(not c.discarded for c in read_dataset(filtered))


def test_filter_full_level_equals_classify(tmp_path, passages_file):
    raw = tmp_path / "raw.jsonl"
    assert main([
        "synthesize", "--passages", str(passages_file), "--out", str(raw),
        "--seed", "3", "--level", "none",
    ]) == 0
    filtered = tmp_path / "filtered.jsonl"
    assert main([
        "filter", "--in", str(raw), "--passages", str(passages_file),
        "--out", str(filtered), "--scorer", "hash:3", "--level", "full",
    ]) == 0
    total_discarded = sum(len(c.discarded) for c in read_dataset(filtered))
    assert total_discarded > 0


def test_filter_tau_one_keeps_nothing(tmp_path, passages_file):
    raw = tmp_path / "raw.jsonl"
    assert main([
        "synthesize", "--passages", str(passages_file), "--out", str(raw),
        "--seed", "3", "--level", "none",
    ]) == 0
    filtered = tmp_path / "filtered.jsonl"
    assert main([
        "filter", "--in", str(raw), "--passages", str(passages_file),
        "--out", str(filtered), "--scorer", "constant:1.0", "--tau", "1.0",
    ]) == 0
    for conversation in read_dataset(filtered):
        assert all(p.status != "kept" for p in conversation.pairs)


def test_build_clf_data_counts(tmp_path, capsys):
    out = tmp_path / "clf.jsonl"
    code = main([
        "build-clf-data", "--qnli", str(DATA_DIR / "qnli_mini.tsv"),
        "--coqa", str(DATA_DIR / "coqa_mini.json"), "--out", str(out),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "negatives: 5" in printed
    assert "1 original -> 5 negative samples" in printed
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert len(lines) == 6 + 5 + 5  # qnli + positives + negatives


def test_evaluate_exact_fixture(tmp_path, capsys, coqa_mini):
    pred_path = tmp_path / "pred.jsonl"
    with pred_path.open("w") as handle:
        for _, conversations in coqa_mini:
            for conversation in conversations:
                for turn in conversation.turns:
                    handle.write(json.dumps({
                        "conversation_id": conversation.passage_id,
                        "turn": turn.turn,
                        "prediction": turn.answer,
                    }) + "\n")
    code = main([
        "evaluate", "--pred", str(pred_path), "--gold", str(DATA_DIR / "coqa_mini.json"),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "100.0" in printed
    assert "Wiki." in printed and "News." in printed

    code = main([
        "evaluate", "--pred", str(pred_path), "--gold", str(DATA_DIR / "coqa_mini.json"),
        "--by-type",
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "Open" in printed and "Close" in printed and "Unanswerable" in printed


def test_stats_report_files(tmp_path, passages_file):
    out = tmp_path / "ds.jsonl"
    assert main([
        "synthesize", "--passages", str(passages_file), "--out", str(out), "--seed", "3",
    ]) == 0
    report_dir = tmp_path / "reports"
    assert main(["stats", "--in", str(out), "--report-dir", str(report_dir)]) == 0
    tsv = (report_dir / "stats.tsv").read_text().splitlines()
    assert tsv[0].split("\t") == ["Data type", "#Q-As", "Percentage"]
    assert (report_dir / "stats.png").stat().st_size > 0


def test_sample_and_aggregate_round(tmp_path, passages_file, capsys):
    out = tmp_path / "ds.jsonl"
    assert main([
        "synthesize", "--passages", str(passages_file), "--out", str(out), "--seed", "3",
    ]) == 0
    eval_dir = tmp_path / "eval"
    assert main([
        "sample-eval", "--in", f"synthetic={out}", "--in",
        f"real={DATA_DIR / 'coqa_mini.json'}", "--n", "4", "--seed", "1",
        "--out", str(eval_dir), "--passages", str(passages_file),
    ]) == 0
    packets = [json.loads(l) for l in (eval_dir / "packets.jsonl").read_text().splitlines()]
    assert len(packets) == 8
    key = json.loads((eval_dir / "key.json").read_text())
    assert sorted(set(key.values())) == ["real", "synthetic"]

    annotations = tmp_path / "annotations.jsonl"
    with annotations.open("w") as handle:
        for i, packet in enumerate(packets):
            record = {"example_id": packet["packet_id"], "connectivity": "dependent",
                      "answerability": "answerable", "correctness": "correct"}
            if i == 0:
                record = {"example_id": packet["packet_id"], "connectivity": "unnatural",
                          "answerability": None, "correctness": None}
            handle.write(json.dumps(record) + "\n")
    report_dir = tmp_path / "reports"
    code = main([
        "aggregate-eval", "--annotations", str(annotations), "--key",
        str(eval_dir / "key.json"), "--report-dir", str(report_dir),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "Conversational Connectivity" in printed
    assert "Partially correct" in printed
    assert (report_dir / "human_eval.tsv").exists()
    assert (report_dir / "human_eval.png").exists()


def test_ac_recall_command(tmp_path, capsys):
    verdicts = tmp_path / "verdicts.jsonl"
    with verdicts.open("w") as handle:
        rows = (
            [{"predicted_answerable": True, "gold_answerable": True}] * 9
            + [{"predicted_answerable": False, "gold_answerable": True}]
            + [{"predicted_answerable": False, "gold_answerable": False}] * 3
            + [{"predicted_answerable": True, "gold_answerable": False}]
        )
        for row in rows:
            handle.write(json.dumps({**row, "dataset": "QNLI -> CoQA"}) + "\n")
    assert main(["ac-recall", "--verdicts", str(verdicts)]) == 0
    printed = capsys.readouterr().out
    assert "Answerable-Recall" in printed
    assert "90.0" in printed and "75.0" in printed


def test_aggregate_eval_rejects_bad_record(tmp_path, capsys):
    annotations = tmp_path / "annotations.jsonl"
    annotations.write_text(json.dumps({
        "example_id": "x1", "connectivity": "unnatural",
        "answerability": "answerable", "correctness": None,
    }) + "\n")
    assert main(["aggregate-eval", "--annotations", str(annotations)]) == 1
    assert "x1" in capsys.readouterr().err
