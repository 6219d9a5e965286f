"""Command-line entry point.

Subcommands wire configuration, backends, the synthesis pipeline, the
training-data builders, and the evaluation suite into reproducible runs.
Every output-producing command writes a run manifest next to its output;
report commands print an aligned table and, with --report-dir, also write
a TSV and a rendered figure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import classifier_data, evaluation, reports
from .backends import (
    BackendError,
    ConstantScorer,
    HashScorer,
    MockScorer,
    RuleSpanExtractor,
    TemplateSeq2Seq,
)
from .corpus import (
    DatasetFormatError,
    compute_stats,
    gold_to_conversations,
    load_coqa,
    load_passages,
    read_dataset,
    sniff_json_format,
    write_dataset,
)
from .evaluation import AnnotationError
from .generation import TypeRatio
from .pipeline import (
    BackendSuite,
    ConfigError,
    GenerationConfig,
    load_config,
    refilter_conversation,
    synthesize_dataset,
)

CONFIG_ENV_VAR = "CQASYNTH_CONFIG"


def _fail(message: str, code: int = 1) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _require_file(path: Path) -> Path | None:
    """Return the path, or None after reporting it missing (exit code 2)."""
    if not path.exists():
        return None
    return path


def _write_manifest(
    out_path: Path,
    command: str,
    config: dict,
    seed: int | None,
    inputs: list[str],
    outputs: list[str],
    backends_id: str | None,
    counts: dict,
) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "backends": backends_id,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "counts": counts,
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def build_backend_suite(name: str, config: GenerationConfig) -> BackendSuite:
    """Named mock backend suites; the scorer seed derives from the run seed."""
    if name == "mock":
        scorer = HashScorer(seed=config.seed)
    elif name == "mock-keep":
        scorer = ConstantScorer(1.0)
    elif name == "mock-unknown":
        scorer = ConstantScorer(0.0)
    else:
        raise ValueError(f"unknown backend suite {name!r}; choose mock, mock-keep, mock-unknown")
    return BackendSuite(
        extractor=RuleSpanExtractor(),
        generator=TemplateSeq2Seq(
            open_question="what about {span}?",
            closed_question="is it about {span}?",
            beam_size=config.beam_size,
        ),
        scorer=scorer,
    )


def _parse_scorer_spec(spec: str):
    """Parse --scorer into a per-passage scorer factory.

    Supported: ``hash:SEED``, ``constant:P``, ``table:PATH`` where the table
    file is JSON {"default": float, "entries": [{"question", "sentence_index",
    "prob"}]}. Table entries are resolved against each passage's sentences.
    """
    kind, _, argument = spec.partition(":")
    if kind == "hash":
        scorer = HashScorer(seed=int(argument or 0))
        return lambda passage: scorer
    if kind == "constant":
        scorer = ConstantScorer(float(argument))
        return lambda passage: scorer
    if kind == "table":
        payload = json.loads(Path(argument).read_text(encoding="utf-8"))
        table = {
            (entry["question"], int(entry["sentence_index"])): float(entry["prob"])
            for entry in payload.get("entries", [])
        }
        default = float(payload.get("default", 0.0))
        return lambda passage: MockScorer.for_passage(passage, table, default)
    raise ValueError(f"unknown scorer spec {spec!r}; use hash:SEED, constant:P, or table:PATH")


def _effective_config(args) -> GenerationConfig:
    """Config file (flag, else environment default), overridden by CLI flags."""
    config_path = getattr(args, "config", None)
    if config_path is None and os.environ.get(CONFIG_ENV_VAR):
        config_path = Path(os.environ[CONFIG_ENV_VAR])
    if config_path is not None:
        if _require_file(Path(config_path)) is None:
            raise FileNotFoundError(str(config_path))
        config = load_config(config_path)
    else:
        config = GenerationConfig()
    overrides = {}
    for flag, field in (
        ("seed", "seed"),
        ("ratio", "ratio"),
        ("tau", "tau"),
        ("level", "ac_level"),
        ("max_turns", "max_kept_turns"),
        ("max_attempts", "max_attempts_per_conversation"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            if field == "ac_level" and value == "passage":
                value = "full"  # the passage level runs on top of the context level
            overrides[field] = value
    return dataclasses.replace(config, **overrides) if overrides else config


def _maybe_report(args, name: str, headers, rows, figure=None) -> None:
    """Write TSV and figure into --report-dir when given."""
    report_dir = getattr(args, "report_dir", None)
    if report_dir is None:
        return
    directory = Path(report_dir)
    directory.mkdir(parents=True, exist_ok=True)
    reports.write_tsv(directory / f"{name}.tsv", headers, rows)
    if figure is not None:
        title, ylabel, categories, series = figure
        reports.save_bar_chart(directory / f"{name}.png", title, ylabel, categories, series)


# ---------------------------------------------------------------------------
# commands


def cmd_synthesize(args) -> int:
    passages_path = _require_file(Path(args.passages))
    if passages_path is None:
        return _fail(f"{args.passages}: file not found", 2)
    config = _effective_config(args)
    suite = build_backend_suite(args.backends, config)
    passages = load_passages(passages_path)
    result = synthesize_dataset(passages, suite, config)
    write_dataset(result.dataset, args.out)

    stats = compute_stats(result.dataset)
    headers, rows = reports.stats_rows(stats)
    print(reports.format_table(headers, rows, title=f"Synthesized {args.out}"))
    discarded_total = sum(len(c.discarded) for c in result.dataset)
    print(f"conversations: {len(result.dataset)}  discarded pairs: {discarded_total}")
    for passage_id, message in result.errors:
        print(f"error on passage {passage_id}: {message}", file=sys.stderr)
    _maybe_report(
        args, "stats", headers, rows,
        figure=(
            "Synthesized pairs by type", "count",
            ["Open-ended", "Yes", "No", "Unknown"],
            {"pairs": [stats.counts[t] for t in ("open", "yes", "no", "unknown")]},
        ),
    )
    _write_manifest(
        Path(args.out),
        command="synthesize",
        config=config.to_dict(),
        seed=config.seed,
        inputs=[str(passages_path)],
        outputs=[args.out],
        backends_id=args.backends,
        counts={**stats.counts, "conversations": len(result.dataset),
                "discarded": discarded_total},
    )
    return 0 if not result.errors else 1


def cmd_filter(args) -> int:
    in_path = _require_file(Path(args.infile))
    if in_path is None:
        return _fail(f"{args.infile}: file not found", 2)
    passages_path = _require_file(Path(args.passages))
    if passages_path is None:
        return _fail(f"{args.passages}: file not found", 2)
    scorer_factory = _parse_scorer_spec(args.scorer)
    dataset = read_dataset(in_path)
    passages = {p.id: p for p in load_passages(passages_path)}
    filtered = []
    for conversation in dataset:
        passage = passages.get(conversation.passage_id)
        if passage is None:
            return _fail(f"passage {conversation.passage_id!r} not found in {args.passages}")
        refiltered = refilter_conversation(
            conversation, passage, scorer_factory(passage), args.tau, args.level
        )
        if refiltered.pairs:
            filtered.append(refiltered)
    write_dataset(filtered, args.out)

    stats = compute_stats(filtered)
    headers, rows = reports.stats_rows(stats)
    print(reports.format_table(headers, rows, title=f"Filtered {args.out}"))
    _write_manifest(
        Path(args.out),
        command="filter",
        config={"tau": args.tau, "level": args.level, "scorer": args.scorer},
        seed=None,
        inputs=[str(in_path), str(passages_path)],
        outputs=[args.out],
        backends_id=args.scorer,
        counts=stats.counts,
    )
    return 0


def cmd_build_clf_data(args) -> int:
    if args.qnli is None and args.coqa is None:
        return _fail("provide --qnli and/or --coqa")
    examples = []
    inputs = []
    if args.qnli is not None:
        qnli_path = _require_file(Path(args.qnli))
        if qnli_path is None:
            return _fail(f"{args.qnli}: file not found", 2)
        inputs.append(str(qnli_path))
        examples.extend(
            classifier_data.build_qnli_examples(classifier_data.read_qnli_tsv(qnli_path))
        )
    originals = 0
    if args.coqa is not None:
        coqa_path = _require_file(Path(args.coqa))
        if coqa_path is None:
            return _fail(f"{args.coqa}: file not found", 2)
        inputs.append(str(coqa_path))
        gold = load_coqa(coqa_path)
        originals = sum(
            turn.unanswerable
            for _, conversations in gold
            for conversation in conversations
            for turn in conversation.turns
        )
        examples.extend(classifier_data.build_coqa_examples(gold))
    classifier_data.write_examples(examples, args.out)

    counts = {
        "qnli": sum(e.origin == "qnli" for e in examples),
        "coqa_positive": sum(e.origin == "coqa_positive" for e in examples),
        "coqa_negative": sum(e.origin == "coqa_negative" for e in examples),
    }
    print(f"wrote {len(examples)} examples to {args.out}")
    print(
        f"qnli: {counts['qnli']}  positives: {counts['coqa_positive']}  "
        f"negatives: {counts['coqa_negative']}"
    )
    if args.coqa is not None:
        print(
            f"unanswerable expansion: {originals} original -> "
            f"{counts['coqa_negative']} negative samples"
        )
    _write_manifest(
        Path(args.out),
        command="build-clf-data",
        config={},
        seed=None,
        inputs=inputs,
        outputs=[args.out],
        backends_id=None,
        counts={**counts, "unanswerable_originals": originals},
    )
    return 0


def _read_predictions(path: Path) -> list[tuple[str, int, str]]:
    triples = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            triples.append(
                (record["conversation_id"], int(record["turn"]), record["prediction"])
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
    return triples


def cmd_evaluate(args) -> int:
    pred_path = _require_file(Path(args.pred))
    if pred_path is None:
        return _fail(f"{args.pred}: file not found", 2)
    gold_path = _require_file(Path(args.gold))
    if gold_path is None:
        return _fail(f"{args.gold}: file not found", 2)
    predictions = _read_predictions(pred_path)
    gold = load_coqa(gold_path)
    if args.by_type:
        by_type = evaluation.evaluate_by_type(predictions, gold)
        headers, rows = reports.by_type_rows(args.label, by_type)
        print(reports.format_table(headers, rows, title="F1 by data type"))
        _maybe_report(
            args, "evaluation_by_type", headers, rows,
            figure=(
                "F1 by data type", "F1",
                ["Open", "Close", "Unanswerable"],
                {args.label: [
                    by_type[t][0] or 0.0 for t in ("open", "closed", "unanswerable")
                ]},
            ),
        )
    else:
        report = evaluation.evaluate_cqa(predictions, gold)
        headers, rows = reports.evaluation_rows(args.label, report)
        print(reports.format_table(headers, rows, title="F1 by domain"))
        print(f"overall: {report.overall:.1f}  missing predictions: {report.missing}")
        domains = reports.ordered_domains(list(report.per_domain))
        _maybe_report(
            args, "evaluation", headers, rows,
            figure=(
                "F1 by domain", "F1",
                [reports.domain_title(d) for d in domains],
                {args.label: [report.per_domain[d] for d in domains]},
            ),
        )
    return 0


def cmd_stats(args) -> int:
    in_path = _require_file(Path(args.infile))
    if in_path is None:
        return _fail(f"{args.infile}: file not found", 2)
    stats = compute_stats(read_dataset(in_path))
    headers, rows = reports.stats_rows(stats)
    print(reports.format_table(headers, rows, title=str(in_path)))
    _maybe_report(
        args, "stats", headers, rows,
        figure=(
            "Pairs by type", "count",
            ["Open-ended", "Yes", "No", "Unknown"],
            {"pairs": [stats.counts[t] for t in ("open", "yes", "no", "unknown")]},
        ),
    )
    return 0


def cmd_sample_eval(args) -> int:
    datasets = []
    inputs = []
    for item in args.infile:
        label, _, raw_path = item.partition("=")
        if not raw_path:
            return _fail(f"--in expects LABEL=PATH, got {item!r}")
        path = _require_file(Path(raw_path))
        if path is None:
            return _fail(f"{raw_path}: file not found", 2)
        inputs.append(str(path))
        if sniff_json_format(path) == "coqa":
            conversations = gold_to_conversations(load_coqa(path))
        else:
            conversations = read_dataset(path)
        datasets.append((label, conversations))
    passages = None
    if args.passages is not None:
        passages_path = _require_file(Path(args.passages))
        if passages_path is None:
            return _fail(f"{args.passages}: file not found", 2)
        passages = {p.id: p for p in load_passages(passages_path)}
    packets, key = evaluation.sample_for_human_eval(datasets, args.n, args.seed, passages)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    packets_path = out_dir / "packets.jsonl"
    evaluation.write_packets(packets, packets_path)
    key_path = out_dir / "key.json"
    key_path.write_text(json.dumps(key, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(packets)} packets to {packets_path} (unblinding key: {key_path})")
    _write_manifest(
        packets_path,
        command="sample-eval",
        config={"n": args.n},
        seed=args.seed,
        inputs=inputs,
        outputs=[str(packets_path), str(key_path)],
        backends_id=None,
        counts={"packets": len(packets)},
    )
    return 0


def cmd_aggregate_eval(args) -> int:
    annotations_path = _require_file(Path(args.annotations))
    if annotations_path is None:
        return _fail(f"{args.annotations}: file not found", 2)
    records = evaluation.read_annotations(annotations_path)
    if args.key is not None:
        key_path = _require_file(Path(args.key))
        if key_path is None:
            return _fail(f"{args.key}: file not found", 2)
        key = json.loads(key_path.read_text(encoding="utf-8"))
        groups: dict[str, list] = {}
        for record in records:
            source = key.get(record.example_id)
            if source is None:
                return _fail(f"record {record.example_id} missing from the key file")
            groups.setdefault(source, []).append(record)
        columns = {
            label: evaluation.aggregate_annotations(group)
            for label, group in sorted(groups.items())
        }
    else:
        columns = {"All": evaluation.aggregate_annotations(records)}
    headers, rows = reports.human_eval_rows(columns)
    print(reports.format_table(headers, rows, title="Human evaluation"))
    categories = [row[1] for row in rows]
    _maybe_report(
        args, "human_eval", headers, rows,
        figure=(
            "Human evaluation", "percent", categories,
            {
                label: [
                    float(row[2 + i].rstrip("%")) for row in rows
                ]
                for i, label in enumerate(columns)
            },
        ),
    )
    return 0


def cmd_ac_recall(args) -> int:
    verdicts_path = _require_file(Path(args.verdicts))
    if verdicts_path is None:
        return _fail(f"{args.verdicts}: file not found", 2)
    grouped: dict[str, list[tuple[bool, bool]]] = {}
    for lineno, line in enumerate(verdicts_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            grouped.setdefault(record.get("dataset", "All"), []).append(
                (bool(record["predicted_answerable"]), bool(record["gold_answerable"]))
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            return _fail(f"{verdicts_path}: line {lineno}: {exc}")
    recalls = {label: evaluation.ac_recall(pairs) for label, pairs in grouped.items()}
    headers, rows = reports.ac_recall_rows(recalls)
    print(reports.format_table(headers, rows, title="Answerability classification recall"))
    _maybe_report(
        args, "ac_recall", headers, rows,
        figure=(
            "AC recall", "recall (%)", list(recalls),
            {
                "Answerable": [recalls[l][0] or 0.0 for l in recalls],
                "Unanswerable": [recalls[l][1] or 0.0 for l in recalls],
            },
        ),
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqasynth",
        description="Synthesize and evaluate multi-type conversational QA datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="generate a synthetic dataset from passages")
    p.add_argument("--passages", required=True, help="CoQA JSON or JSONL {id,domain,text}")
    p.add_argument("--out", required=True, help="output dataset path (JSONL)")
    p.add_argument("--config", default=None,
                   help=f"key=value config file (default: ${CONFIG_ENV_VAR})")
    p.add_argument("--backends", default="mock",
                   help="backend suite: mock, mock-keep, mock-unknown")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ratio", type=TypeRatio.parse, default=None,
                   help="open:yes:no weights, e.g. 8:1:1 (1:0:0 disables closed flow)")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--level", choices=["full", "passage", "context", "none"], default=None,
                   help="answerability-classification depth")
    p.add_argument("--max-turns", dest="max_turns", type=int, default=None)
    p.add_argument("--max-attempts", dest="max_attempts", type=int, default=None)
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("filter", help="re-run answerability classification on a dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--passages", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--scorer", default="hash:0",
                   help="hash:SEED, constant:P, or table:PATH")
    p.add_argument("--level", choices=["full", "passage", "context"], default="full")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("build-clf-data", help="build classifier training data")
    p.add_argument("--qnli", default=None, help="TSV (index, question, sentence, label)")
    p.add_argument("--coqa", default=None, help="CoQA JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_clf_data)

    p = sub.add_parser("evaluate", help="token-F1 of predictions against gold")
    p.add_argument("--pred", required=True,
                   help="JSONL {conversation_id, turn, prediction}")
    p.add_argument("--gold", required=True, help="CoQA JSON file")
    p.add_argument("--by-type", dest="by_type", action="store_true")
    p.add_argument("--label", default="predictions")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="per-type distribution of a dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample-eval", help="draw blind human-evaluation packets")
    p.add_argument("--in", dest="infile", action="append", required=True,
                   metavar="LABEL=PATH", help="repeatable; dataset JSONL or CoQA JSON")
    p.add_argument("--n", type=int, required=True, help="pairs per dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--passages", default=None, help="passage texts for the packets")
    p.set_defaults(func=cmd_sample_eval)

    p = sub.add_parser("aggregate-eval", help="aggregate annotation records")
    p.add_argument("--annotations", required=True, help="JSONL annotation records")
    p.add_argument("--key", default=None, help="packet-id to source mapping (JSON)")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_aggregate_eval)

    p = sub.add_parser("ac-recall", help="per-class recall of answerability verdicts")
    p.add_argument("--verdicts", required=True,
                   help="JSONL {predicted_answerable, gold_answerable, dataset?}")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(func=cmd_ac_recall)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail(f"{exc}: file not found", 2)
    except (DatasetFormatError, ConfigError, AnnotationError, BackendError, ValueError) as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
