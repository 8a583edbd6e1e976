"""Command-line entry point.

Subcommands tie the library into reproducible runs:

* ``split``          fold assignment from word vectors + pair usability report
* ``train``          match or joint (match + view estimation) training
* ``eval``           referent-selection accuracy report + prediction log
* ``verify``         gradient checks, store round-trip, checkpoint validation
* ``stats``          expression statistics and optional lexical profile
* ``rotate-report``  match-score change after rotating the gold object

Every artifact-producing run writes a manifest recording the command, the
config, sha256 digests of its inputs, and its output names — never a
wall-clock timestamp — so a rerun with identical inputs and seeds is
byte-identical and verifiable by digest.

Exit codes: 0 success, 2 usage or config error, 3 data error, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Dataset,
    DatasetError,
    Fold,
    FOLDS_FILE,
    INSTANCES_FILE,
    NUM_VIEWS,
    OBJECTS_FILE,
    load_dataset,
    instance_statistics,
    write_folds,
)
from .dataset_tools import (
    CategorySpec,
    HypernymClosure,
    PairInfo,
    WordVectorTable,
    VectorFileError,
    classify_pairs,
    default_descriptor,
    lexical_profile,
    split_folds,
)
from .evaluation import (
    MatchPredictor,
    ZeroShotPredictor,
    evaluate,
    format_report_table,
    rotation_report,
    write_prediction_log,
)
from .grounding import VIEW_MODES
from .heads import (
    CheckpointError,
    gradient_check,
    load_checkpoint,
    new_match_head,
    new_view_head,
    save_checkpoint,
)
from .store import FeatureStore, StoreError
from .synth import make_match_fixture
from .training import ConfigError, TrainConfig, train_lagor, train_match, write_records
from .util import sha256_file

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VERIFY = 4


class UsageError(Exception):
    pass


class VerificationFailure(Exception):
    pass


def _require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _require_dir(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} not found: {p}")
    return p


def _dataset_digests(dataset_dir: Path) -> dict[str, str]:
    digests = {}
    for name in (OBJECTS_FILE, INSTANCES_FILE, FOLDS_FILE):
        candidate = dataset_dir / name
        if candidate.is_file():
            digests[f"dataset/{name}"] = sha256_file(candidate)
    return digests


def write_manifest(out_dir: Path, command: str, seed: int | None,
                   config: dict, inputs: dict[str, str],
                   outputs: list[str]) -> Path:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "seed": seed,
        "config": config,
        "input_digests": inputs,
        "outputs": sorted(outputs),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(args) -> tuple[Dataset, FeatureStore, Path, Path]:
    dataset_dir = _require_dir(args.dataset, "dataset directory")
    store_path = _require_file(args.store, "feature store")
    dataset = load_dataset(dataset_dir)
    store = FeatureStore.read(store_path)
    return dataset, store, dataset_dir, store_path


def _fold_instances(dataset: Dataset, fold: str):
    if fold == "all":
        return list(dataset.instances)
    if dataset.folds is None:
        raise UsageError(f"--fold {fold!r} requires fold assignments in the dataset")
    instances = dataset.instances_in_fold(fold)
    if not instances:
        raise DatasetError(f"fold {fold!r} selects no instances")
    return instances


def _parse_kv(text: str, what: str) -> dict[str, str]:
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"{what} must be comma-separated key=value pairs, got {part!r}")
        key, value = part.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def cmd_split(args) -> int:
    dataset_dir = _require_dir(args.dataset, "dataset directory")
    vectors_path = _require_file(args.vectors, "word-vector file")
    out = _out_dir(args)

    dataset = load_dataset(dataset_dir)
    vectors = WordVectorTable.read(vectors_path)

    anchor_words = _parse_kv(args.anchors, "--anchors")
    try:
        anchors = {Fold(name): word for name, word in anchor_words.items()}
    except ValueError as exc:
        raise UsageError(f"--anchors has an unknown fold name: {exc}") from None
    proportions = None
    if args.proportions:
        raw = _parse_kv(args.proportions, "--proportions")
        try:
            proportions = {Fold(name): float(v) for name, v in raw.items()}
        except ValueError as exc:
            raise UsageError(f"bad --proportions: {exc}") from None

    counts: dict[str, int] = {}
    for entry in dataset.objects.values():
        counts[entry.category] = counts.get(entry.category, 0) + 1
    categories = [
        CategorySpec(name=c, descriptor=default_descriptor(c), object_count=n)
        for c, n in sorted(counts.items())
    ]
    assignments, warnings = split_folds(categories, vectors, anchors, proportions)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)

    fold_map = {a.category: a.fold for a in assignments}
    folds_path = out / FOLDS_FILE
    write_folds(fold_map, folds_path)

    pair_expr: dict[tuple[str, str], int] = {}
    for inst in dataset.instances:
        key = tuple(sorted((inst.object_a.category, inst.object_b.category)))
        pair_expr[key] = pair_expr.get(key, 0) + 1
    pairs = [PairInfo(x, y, n) for (x, y), n in sorted(pair_expr.items())]
    report, _ = classify_pairs(pairs, fold_map)

    report_path = out / "pair_report.json"
    report_path.write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )

    print(f"{'pair class':<12} {'pairs':>6} {'expressions':>12} {'share':>7}")
    shares = report.percentages()
    for cls in ("train-train", "val-val", "train-val", "test-test", "excluded"):
        share = shares.get(cls, "-")
        print(f"{cls:<12} {report.pair_counts[cls]:>6} "
              f"{report.expression_counts[cls]:>12} {share:>7}")

    inputs = _dataset_digests(dataset_dir)
    inputs[str(vectors_path)] = sha256_file(vectors_path)
    write_manifest(out, "split", None,
                   {"anchors": anchor_words, "proportions": args.proportions},
                   inputs, [folds_path.name, report_path.name])
    return EXIT_OK


def cmd_train(args) -> int:
    config_path = _require_file(args.config, "config file")
    config = TrainConfig.from_file(config_path)
    if args.mode == "lagor" and not args.pretrained:
        raise UsageError("lagor mode requires --pretrained with a match checkpoint")
    dataset, store, dataset_dir, store_path = _load_inputs(args)
    out = _out_dir(args)

    instances = _fold_instances(dataset, args.fold)
    val_instances = _fold_instances(dataset, args.val_fold) if args.val_fold else ()

    outputs = []
    if args.mode == "match":
        head, records = train_match(config, instances, store, val_instances)
        ckpt = out / "match_head.ckpt"
        save_checkpoint(head, ckpt, seed=config.seed, step_count=len(records))
        outputs.append(ckpt.name)
    else:
        pretrained_path = _require_file(args.pretrained, "pretrained checkpoint")
        pretrained, _, _ = load_checkpoint(pretrained_path)
        match_head, view_head, records = train_lagor(
            config, instances, store, pretrained, val_instances)
        match_ckpt = out / "match_head.ckpt"
        view_ckpt = out / "view_head.ckpt"
        save_checkpoint(match_head, match_ckpt, seed=config.seed,
                        step_count=len(records))
        save_checkpoint(view_head, view_ckpt, seed=config.seed,
                        step_count=len(records))
        outputs += [match_ckpt.name, view_ckpt.name]

    records_path = out / "records.jsonl"
    write_records(records_path, records)
    outputs.append(records_path.name)

    last = records[-1]
    line = (f"epoch {last.epoch}: match_loss={last.match_loss:.6f} "
            f"train_acc={last.train_accuracy:.4f}")
    if last.val_accuracy is not None:
        line += f" val_acc={last.val_accuracy:.4f}"
    print(line)

    inputs = _dataset_digests(dataset_dir)
    inputs[str(store_path)] = sha256_file(store_path)
    inputs[str(config_path)] = sha256_file(config_path)
    if args.mode == "lagor":
        inputs[str(args.pretrained)] = sha256_file(args.pretrained)
    write_manifest(out, f"train:{args.mode}", config.seed, asdict(config),
                   inputs, outputs)
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.views in ("single", "two") and args.seed is None:
        raise UsageError(
            f"--views {args.views} samples views; --seed is required for a "
            "reproducible report"
        )
    seed = args.seed if args.seed is not None else 0
    dataset, store, dataset_dir, store_path = _load_inputs(args)
    out = _out_dir(args)
    instances = _fold_instances(dataset, args.fold)

    inputs = _dataset_digests(dataset_dir)
    inputs[str(store_path)] = sha256_file(store_path)
    if args.checkpoint == "zeroshot":
        predictor = ZeroShotPredictor()
    else:
        ckpt_path = _require_file(args.checkpoint, "checkpoint")
        head, _, _ = load_checkpoint(ckpt_path)
        predictor = MatchPredictor(head)
        inputs[str(ckpt_path)] = sha256_file(ckpt_path)

    report, rows = evaluate(predictor, instances, store, view_mode=args.views,
                            seed=seed, fold=args.fold)

    report_path = out / "report.json"
    report_path.write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    log_path = out / "predictions.jsonl"
    write_prediction_log(log_path, rows)
    print(format_report_table(report), end="")

    write_manifest(out, "eval", seed,
                   {"views": args.views, "checkpoint": args.checkpoint,
                    "fold": args.fold},
                   inputs, [report_path.name, log_path.name])
    return EXIT_OK


def cmd_verify(args) -> int:
    checks: list[tuple[str, bool, str]] = []

    for kind, factory in (("match", new_match_head), ("view", new_view_head)):
        head = factory(args.seed)
        report = gradient_check(head, tolerance=args.tolerance,
                                probes=args.probes, seed=args.seed + 1)
        checks.append((
            f"gradient-check {kind} head",
            report.passed,
            f"max relative error {report.max_relative_error:.3e} "
            f"over {report.probes} probes (tolerance {report.tolerance:g})",
        ))

    with tempfile.TemporaryDirectory() as tmp:
        fixture = make_match_fixture(n_train=4, n_held_out=2, n_directions=2,
                                     dim=16, seed=args.seed)
        for label, store in (
            ("populated", fixture.store),
            ("empty", FeatureStore(encoder="none", dim=16)),
            ("single-record", _single_record_store()),
        ):
            path = Path(tmp) / f"{label}.snrf"
            store.write(path)
            reread = FeatureStore.read(path)
            second = Path(tmp) / f"{label}-rewrite.snrf"
            reread.write(second)
            ok = path.read_bytes() == second.read_bytes()
            checks.append((f"store round-trip ({label})", ok,
                           "bitwise identical" if ok else "bytes differ"))

    if args.checkpoint:
        try:
            load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
            checks.append((f"checkpoint load {args.checkpoint}", True, "loads"))
        except CheckpointError as exc:
            checks.append((f"checkpoint load {args.checkpoint}", False, str(exc)))

    failed = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += int(not ok)
    if failed:
        raise VerificationFailure(f"{failed} of {len(checks)} checks failed")
    print(f"all {len(checks)} checks passed")
    return EXIT_OK


def _single_record_store() -> FeatureStore:
    store = FeatureStore(encoder="none", dim=16)
    store.add_language("only", np.arange(16, dtype=np.float32))
    return store


def cmd_stats(args) -> int:
    dataset_dir = _require_dir(args.dataset, "dataset directory")
    dataset = load_dataset(dataset_dir)
    out = _out_dir(args)

    payload: dict = {"overall": instance_statistics(dataset.instances).to_dict()}
    if dataset.folds is not None:
        by_fold = {}
        for fold in sorted(dataset.fold_counts()):
            stats = instance_statistics(dataset.instances_in_fold(fold))
            by_fold[fold] = stats.to_dict()
        payload["by_fold"] = by_fold

    inputs = _dataset_digests(dataset_dir)
    if args.closure:
        closure_path = _require_file(args.closure, "hypernym closure file")
        closure = HypernymClosure.read(closure_path)
        targets = tuple(t.strip() for t in args.targets.split(",") if t.strip())
        profile = lexical_profile(
            (inst.expression for inst in dataset.instances), closure, targets)
        payload["lexical"] = profile.to_dict()
        inputs[str(closure_path)] = sha256_file(closure_path)

    stats_path = out / "stats.json"
    stats_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")

    overall = payload["overall"]
    print(f"instances={overall['n_instances']} "
          f"mean_tokens={overall['mean_tokens']} "
          f"std_tokens={overall['std_tokens']}")
    if "lexical" in payload:
        for mode, percents in sorted(payload["lexical"]["percent"].items()):
            cells = " ".join(f"{t}={p:.1f}%" for t, p in sorted(percents.items()))
            print(f"{mode}: {cells}")

    write_manifest(out, "stats", None, {"targets": args.targets}, inputs,
                   [stats_path.name])
    return EXIT_OK


def cmd_rotate_report(args) -> int:
    if args.step % NUM_VIEWS == 0:
        raise UsageError(f"--step {args.step} is a whole number of turns; "
                         "the rotated view would equal the original")
    ckpt_path = _require_file(args.checkpoint, "checkpoint")
    dataset, store, dataset_dir, store_path = _load_inputs(args)
    out = _out_dir(args)
    instances = _fold_instances(dataset, args.fold)

    head, _, _ = load_checkpoint(ckpt_path)
    if head.kind != "match":
        raise UsageError("rotate-report needs a match checkpoint")
    deltas = rotation_report(head, instances, store, seed=args.seed,
                             step=args.step)

    rotations_path = out / "rotations.jsonl"
    with open(rotations_path, "w", encoding="utf-8") as handle:
        for delta in deltas:
            handle.write(json.dumps(delta.to_dict()) + "\n")

    defined = [d.percent for d in deltas if d.percent is not None]
    summary = {
        "n": len(deltas),
        "undefined_percent": len(deltas) - len(defined),
        "mean_percent": (sum(defined) / len(defined)) if defined else None,
        "mean_raw_delta": sum(d.raw_delta for d in deltas) / len(deltas)
        if deltas else None,
    }
    summary_path = out / "rotation_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
    if summary["mean_percent"] is None:
        print(f"rotated {summary['n']} instances; no defined percent changes")
    else:
        print(f"rotated {summary['n']} instances; mean score change "
              f"{summary['mean_percent']:+.1f}%")

    inputs = _dataset_digests(dataset_dir)
    inputs[str(store_path)] = sha256_file(store_path)
    inputs[str(ckpt_path)] = sha256_file(ckpt_path)
    write_manifest(out, "rotate-report", args.seed, {"step": args.step},
                   inputs, [rotations_path.name, summary_path.name])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewmatch",
        description="Referent selection over rendered object views: training, "
                    "evaluation, and dataset tooling.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("split", help="assign categories to folds and report pair usability")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vectors", required=True, help="word-vector text file")
    p.add_argument("--anchors", required=True,
                   help="fold anchor words, e.g. train=table,val=mug,test=bed")
    p.add_argument("--proportions", default=None,
                   help="object-count shares, e.g. train=0.78,val=0.05,test=0.17")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the match head, or both heads jointly")
    p.add_argument("--config", required=True, help="JSON training config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--mode", choices=("match", "lagor"), required=True)
    p.add_argument("--pretrained", default=None,
                   help="match checkpoint to continue from (lagor mode)")
    p.add_argument("--fold", default="all")
    p.add_argument("--val-fold", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy report with prediction log")
    p.add_argument("--checkpoint", required=True,
                   help="match checkpoint path, or 'zeroshot'")
    p.add_argument("--dataset", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--views", choices=VIEW_MODES, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fold", default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="numerical and format self-checks")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--probes", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", default=None,
                   help="also validate that this checkpoint loads")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="expression statistics, optional lexical profile")
    p.add_argument("--dataset", required=True)
    p.add_argument("--closure", default=None, help="hypernym closure file")
    p.add_argument("--targets", default="color,shape")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("rotate-report", help="match-score change after rotation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--fold", default="all")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rotate_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, StoreError, CheckpointError, VectorFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except VerificationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
