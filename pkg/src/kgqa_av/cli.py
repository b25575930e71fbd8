"""Command-line front end wiring the modules into reproducible runs.

Configuration comes from an optional JSON file plus flags; flags win. Every
output directory gets a manifest embedding the fully resolved configuration
and seed, and mock-mode runs with equal configurations produce byte-identical
reports (no timestamps, sorted keys, seeded randomness only).

Exit codes: 0 success, 2 configuration error, 3 backend error, 4 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import classifier, dataset, pipeline
from .cache import FileCache
from .errors import BackendError, ConfigError, DataError
from .kg import RemoteLabelResolver, SparqlHttpClient
from .pipeline import EvaluationConfig, OracleScorer, build_ranked_list, compare, filter_list
from .qa import CorrectRankDistribution, MockKGQAConfig, RemoteKGQA, ask_all
from .synthetic import MockKGQA, SyntheticWorld, SyntheticWorldConfig
from .verbalize import MODES, NLG

logger = logging.getLogger(__name__)

TOKEN_ENV_VAR = "KGQA_AV_TOKEN"

DEFAULTS = {
    "seed": 0,
    "dataset": None,
    "pairs": None,
    "model": None,
    "out": "runs/latest",
    "cache_dir": None,
    "ratio": 1,
    "split": 0.67,
    "group_by_question": False,
    "epochs": 5,
    "learning_rate": 0.5,
    "n_runs": 10,
    "threshold": 0.5,
    "threshold_sweep": False,
    "modes": [NLG],
    "k_values": [1, 5],
    "backend": "mock",
    "kgqa_url": None,
    "kb": "wikidata",
    "sparql_url": None,
    "classifier": "baseline",
    "classifier_url": None,
    "row_cap": 1000,
    "timeout": 30.0,
    "workers": 1,
    "drop_stripped": False,
    "questions": None,
    "limit": None,
    "mock_records": 1000,
    "mock_questions": 200,
    "mock_candidates": 60,
    "mock_rank_low": 1,
    "mock_rank_high": 10,
    "mock_absent": 0.2,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgqa-av",
        description="Validate and filter KGQA answer candidates by their NL form.",
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, *flags):
        p = sub.add_parser(name, help=help_text)
        for flag in flags:
            _add_flag(p, flag)
        return p

    common = ["seed", "out"]
    add(
        "ingest",
        "Load and validate a dataset file (or dump the mock world's records)",
        "dataset", "backend", "mock_records", *common,
    )
    add(
        "sample",
        "Build labeled pairs via negative sampling and split them",
        "dataset", "ratio", "split", "group_by_question", "limit", *common,
    )
    add(
        "train",
        "Train the baseline pair classifier on sampled pairs",
        "pairs", "epochs", "learning_rate", "threshold", *common,
    )
    add(
        "eval-classifier",
        "Repeated-seed classification quality report",
        "dataset", "ratio", "split", "n_runs", "epochs", "learning_rate",
        "threshold", "threshold_sweep", "limit", *common,
    )
    add(
        "ask",
        "Fetch ranked candidate lists for questions",
        "questions", "backend", "kgqa_url", "kb", "cache_dir", "limit",
        "timeout", "workers",
        "mock_records", "mock_questions", "mock_candidates",
        "mock_rank_low", "mock_rank_high", "mock_absent", *common,
    )
    add(
        "filter",
        "Full pipeline: ask, execute, verbalize, score, filter, compare",
        "dataset", "backend", "kgqa_url", "kb", "sparql_url", "cache_dir",
        "modes", "classifier", "classifier_url", "model", "threshold",
        "k_values", "row_cap", "timeout", "workers", "drop_stripped", "limit",
        "mock_records", "mock_questions", "mock_candidates",
        "mock_rank_low", "mock_rank_high", "mock_absent", *common,
    )
    add("report", "Re-render a saved quality report", "out")
    return parser


def _add_flag(parser: argparse.ArgumentParser, name: str) -> None:
    flag = "--" + name.replace("_", "-")
    if name in ("group_by_question", "drop_stripped", "threshold_sweep"):
        parser.add_argument(flag, action="store_true", default=None)
    elif name in ("modes",):
        parser.add_argument(flag, nargs="+", choices=list(MODES), default=None)
    elif name in ("k_values",):
        parser.add_argument(flag, nargs="+", type=int, default=None)
    elif name in ("ratio", "epochs", "n_runs", "row_cap", "workers", "limit",
                  "mock_records", "mock_questions", "mock_candidates",
                  "mock_rank_low", "mock_rank_high", "seed"):
        parser.add_argument(flag, type=int, default=None)
    elif name in ("split", "learning_rate", "threshold", "mock_absent", "timeout"):
        parser.add_argument(flag, type=float, default=None)
    elif name == "backend":
        parser.add_argument(flag, choices=["mock", "remote"], default=None)
    elif name == "classifier":
        parser.add_argument(flag, choices=["baseline", "oracle", "remote"], default=None)
    else:
        parser.add_argument(flag, default=None)


def resolve_config(args: argparse.Namespace) -> dict:
    config = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text("utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(loaded) - set(config)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key in config:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    config["command"] = args.command
    return config


#: Location-only keys: they do not influence results, so reports and digests
#: leave them out (equal experiments to different directories stay identical).
_LOCATION_KEYS = ("out", "cache_dir")


def experiment_config(config: dict) -> dict:
    return {k: v for k, v in config.items() if k not in _LOCATION_KEYS}


def config_digest(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(experiment_config(config), sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def write_manifest(out_dir: Path, config: dict, extra: dict) -> None:
    manifest = {"config": config, "config_sha": config_digest(config), **extra}
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8"
    )


def _out_dir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(config: dict, key: str) -> str:
    if not config.get(key):
        raise ConfigError(f"--{key.replace('_', '-')} is required for this command")
    return config[key]


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_ingest(config: dict) -> int:
    if config["backend"] == "mock" and not config["dataset"]:
        world = SyntheticWorld(
            SyntheticWorldConfig(n_records=config["mock_records"], seed=config["seed"])
        )
        records = world.records
    else:
        records = dataset.load_vanilla(_require(config, "dataset"))
    out = _out_dir(config)
    with open(out / "records.jsonl", "w", encoding="utf-8") as handle:
        for r in records:
            handle.write(json.dumps(r.__dict__, sort_keys=True, ensure_ascii=False) + "\n")
    write_manifest(out, config, {"records": len(records)})
    print(f"loaded {len(records)} records -> {out / 'records.jsonl'}")
    return 0


def _sampling_config(config: dict) -> dataset.SamplingConfig:
    return dataset.SamplingConfig(
        negatives_per_positive=config["ratio"],
        seed=config["seed"],
        split_ratio=config["split"],
        group_by_question=config["group_by_question"],
    )


def _load_records(config: dict):
    records = dataset.load_vanilla(_require(config, "dataset"))
    if config["limit"]:
        records = records[: config["limit"]]
    if not records:
        raise DataError("dataset produced no usable records")
    return records


def cmd_sample(config: dict) -> int:
    records = _load_records(config)
    cfg = _sampling_config(config)
    pairs = dataset.negative_sample(records, cfg)
    train_pairs, test_pairs = dataset.split(pairs, cfg)
    out = _out_dir(config)
    n_train = dataset.write_pairs_jsonl(train_pairs, out / "pairs.train.jsonl")
    n_test = dataset.write_pairs_jsonl(test_pairs, out / "pairs.test.jsonl")
    labels = {"correct": 0, "incorrect": 0}
    for pair in pairs:
        labels[pair.label] += 1
    write_manifest(
        out,
        config,
        {
            "records": len(records),
            "pairs": len(pairs),
            "train_pairs": n_train,
            "test_pairs": n_test,
            "label_counts": labels,
        },
    )
    print(f"sampled {len(pairs)} pairs ({labels['correct']}:{labels['incorrect']}) -> {out}")
    return 0


def cmd_train(config: dict) -> int:
    pairs = dataset.read_pairs_jsonl(_require(config, "pairs"))
    train_cfg = classifier.TrainConfig(
        epochs=config["epochs"],
        learning_rate=config["learning_rate"],
        threshold=config["threshold"],
    )
    model = classifier.train(pairs, train_cfg, seed=config["seed"])
    out = _out_dir(config)
    classifier.save_model(model, out / "model.bin")
    write_manifest(out, config, {"pairs": len(pairs), "model": "model.bin"})
    print(f"trained on {len(pairs)} pairs -> {out / 'model.bin'}")
    return 0


def cmd_eval_classifier(config: dict) -> int:
    records = _load_records(config)
    cfg = _sampling_config(config)
    train_cfg = classifier.TrainConfig(
        epochs=config["epochs"],
        learning_rate=config["learning_rate"],
        threshold=config["threshold"],
    )
    report = classifier.repeated_eval(
        records, cfg, n_runs=config["n_runs"], train_config=train_cfg
    )
    out = _out_dir(config)
    lines = [
        f"# Classification quality ({config['n_runs']} seeded runs)",
        "",
        report.to_markdown(),
    ]
    if config["threshold_sweep"]:
        pairs = dataset.negative_sample(records, cfg)
        train_pairs, test_pairs = dataset.split(pairs, cfg)
        model = classifier.train(train_pairs, train_cfg, seed=cfg.seed)
        lines += ["", "## Threshold sweep (diagnostic only)", "",
                  "| threshold | precision | recall |", "| --- | --- | --- |"]
        for row in classifier.threshold_sweep(model, test_pairs):
            lines.append(
                f"| {row['threshold']:.2f} | {row['precision']:.4f} | {row['recall']:.4f} |"
            )
    (out / "classifier_report.md").write_text("\n".join(lines) + "\n", "utf-8")
    payload = {
        "runs": [r.__dict__ for r in report.runs],
        "mean": {m: report.mean(m) for m in ("precision", "recall", "f1")},
        "std": {m: report.std(m) for m in ("precision", "recall", "f1")},
    }
    (out / "classifier_report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8"
    )
    write_manifest(out, config, {"records": len(records)})
    print(report.to_markdown())
    return 0


def _mock_world(config: dict) -> SyntheticWorld:
    return SyntheticWorld(
        SyntheticWorldConfig(
            n_records=config["mock_records"],
            n_questions=config["mock_questions"],
            seed=config["seed"],
        )
    )


def _mock_backend(config: dict, world: SyntheticWorld) -> MockKGQA:
    return MockKGQA(
        MockKGQAConfig(
            candidates_per_question=config["mock_candidates"],
            correct_rank=CorrectRankDistribution(
                low=config["mock_rank_low"],
                high=config["mock_rank_high"],
                absent_prob=config["mock_absent"],
            ),
            seed=config["seed"],
        ),
        world,
    )


def _questions_from_file(config: dict) -> list[str]:
    path = _require(config, "questions")
    lines = [l.strip() for l in Path(path).read_text("utf-8").splitlines()]
    questions = [l for l in lines if l]
    if config["limit"]:
        questions = questions[: config["limit"]]
    return questions


def cmd_ask(config: dict) -> int:
    cache = FileCache(config["cache_dir"]) if config["cache_dir"] else None
    if config["backend"] == "mock":
        world = _mock_world(config)
        backend = _mock_backend(config, world)
        questions = world.questions()
        if config["limit"]:
            questions = questions[: config["limit"]]
    else:
        backend = RemoteKGQA(
            _require(config, "kgqa_url"),
            config["kb"],
            timeout=config["timeout"],
            token=os.environ.get(TOKEN_ENV_VAR),
        )
        questions = _questions_from_file(config)
    lists = ask_all(questions, backend, cache, workers=config["workers"])
    out = _out_dir(config)
    with open(out / "candidates.jsonl", "w", encoding="utf-8") as handle:
        for question in questions:
            cl = lists[question]
            handle.write(
                json.dumps(
                    {
                        "question": question,
                        "count": len(cl),
                        "candidates": [c.raw_text for c in cl.candidates],
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
    write_manifest(out, config, {"questions": len(questions)})
    print(f"asked {len(questions)} questions -> {out / 'candidates.jsonl'}")
    return 0


def _build_scorer(config: dict):
    kind = config["classifier"]
    if kind == "oracle":
        return OracleScorer()
    if kind == "remote":
        return classifier.RemoteClassifier(
            _require(config, "classifier_url"), threshold=config["threshold"]
        )
    return classifier.load_model(_require(config, "model"))


def cmd_filter(config: dict) -> int:
    cache = FileCache(config["cache_dir"]) if config["cache_dir"] else None
    if config["backend"] == "mock":
        world = _mock_world(config)
        backend = _mock_backend(config, world)
        endpoint = world.endpoint(config["row_cap"])
        resolver = world.resolver
        gold_records = world.question_records()
    else:
        backend = RemoteKGQA(
            _require(config, "kgqa_url"), config["kb"],
            timeout=config["timeout"],
            token=os.environ.get(TOKEN_ENV_VAR),
        )
        client = SparqlHttpClient(
            _require(config, "sparql_url"),
            cache=cache,
            row_cap=config["row_cap"],
            timeout=config["timeout"],
            token=os.environ.get(TOKEN_ENV_VAR),
        )
        endpoint = client
        resolver = RemoteLabelResolver(client)
        gold_records = _load_records(config)
    if config["limit"]:
        gold_records = gold_records[: config["limit"]]

    scorer = _build_scorer(config)
    eval_cfg = EvaluationConfig(k_values=tuple(config["k_values"]))
    lists = ask_all(
        [r.question for r in gold_records], backend, cache, workers=config["workers"]
    )

    reports = []
    failures = 0
    out = _out_dir(config)
    jsonl_chunks = []
    for mode in config["modes"]:

        def build_one(record):
            # determinism holds under threading: results are keyed by the
            # question, never by scheduling order
            try:
                return build_ranked_list(
                    record,
                    lists[record.question],
                    endpoint,
                    resolver,
                    mode,
                    drop_stripped=config["drop_stripped"],
                ), 0
            except (DataError, BackendError) as exc:
                logger.warning("question %s failed: %s", record.question_id, exc)
                return (
                    pipeline.RankedAnswerList(record.question_id, record.question, ()),
                    1,
                )

        if config["workers"] > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=config["workers"]) as pool:
                built = list(pool.map(build_one, gold_records))
        else:
            built = [build_one(record) for record in gold_records]
        before = [lst for lst, _ in built]
        failures += sum(failed for _, failed in built)
        after = [filter_list(lst, scorer, config["threshold"]) for lst in before]
        report = compare(before, after, eval_cfg, label=mode)
        reports.append(report)
        jsonl_chunks.append(pipeline.per_question_jsonl(report))

    markdown = pipeline.render_markdown(reports)
    (out / "report.md").write_text(
        markdown + "\nConfig: " + config_digest(config) + "\n", "utf-8"
    )
    (out / "report.csv").write_text(
        "# config_sha=" + config_digest(config) + "\n" + pipeline.render_csv(reports),
        "utf-8",
    )
    (out / "per_question.jsonl").write_text("".join(jsonl_chunks), "utf-8")
    (out / "report.json").write_text(
        json.dumps(
            {
                "config": experiment_config(config),
                "config_sha": config_digest(config),
                "failures": failures,
                "reports": [r.as_dict() for r in reports],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        "utf-8",
    )
    write_manifest(out, config, {"questions": len(gold_records), "failures": failures})
    print(markdown)
    return 0


def cmd_report(config: dict) -> int:
    out = Path(config["out"])
    path = out / "report.json"
    if not path.exists():
        raise DataError(f"no report.json under {out}")
    doc = json.loads(path.read_text("utf-8"))
    reports = []
    for item in doc["reports"]:
        metrics = {
            name: pipeline.MetricChange(vals["before"], vals["after"])
            for name, vals in item["metrics"].items()
        }
        reports.append(
            pipeline.QualityReport(
                metrics=metrics,
                question_count=item["question_count"],
                mean_removed=item["mean_removed"],
                zero_candidate_questions=item["zero_candidate_questions"],
                label=item["label"],
            )
        )
    print(pipeline.render_markdown(reports))
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "sample": cmd_sample,
    "train": cmd_train,
    "eval-classifier": cmd_eval_classifier,
    "ask": cmd_ask,
    "filter": cmd_filter,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("KGQA_AV_LOG", "WARNING"),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
