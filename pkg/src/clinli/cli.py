"""Command-line driver tying the pipeline together.

Subcommands: synth, train, transfer, predict, eval, expand,
inspect-checkpoint.  Exit codes: 0 success, 2 usage/configuration/input
error, 1 runtime failure.  Given the same config and seed, every command
writes byte-identical artifacts.

Training runs are described by a declarative JSON run config::

    {
      "model": "transformer" | "compaggr",
      "tokenizer": "wordpiece" | "word",          # default: by model kind
      "vocab_size": 200,                           # wordpiece target size
      "model_config": { ... },                     # model-specific overrides
      "train_config": { "learning_rate": 1e-3, "preset": "paper", ... },
      "datasets": {"train": "t.jsonl", "dev": "d.jsonl"},   # train command
      "chain": [{"name": "S", "train": "...", "dev": "...",
                 "train_config": { ... }}, ...],             # transfer command
      "head_reset": "keep" | "reset",
      "abbrev_table": "table.tsv",                 # optional pre-expansion
      "out_dir": "runs/exp1",
      "seed": 0
    }

The optional ``"preset": "paper"`` in a train_config selects the fixed
2e-5 learning rate used when fine-tuning from large pretrained weights.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .abbrev import expand_dataset, load_table
from .checkpoint import load_checkpoint, model_from_checkpoint, save_checkpoint
from .compaggr import CompAggrConfig, CompAggrModel
from .data import load_jsonl, save_jsonl
from .errors import ClinliError, ConfigError, DataError, ParseError
from .evaluate import (
    FilePrediction,
    accuracy,
    agreement_partition,
    group_into_triples,
    mean_correct_confidence,
    predict_listwise,
    predict_pointwise,
    read_predictions,
    write_metrics,
    write_predictions,
)
from .synth import SynthSpec, generate_corpus, generate_transfer_pair
from .tokenizer import build_word_vocab, train_wordpiece
from .training import Stage, TrainConfig, TransferChain, run_chain, train
from .transformer import TransformerClassifier, TransformerConfig

USAGE_ERRORS = (ConfigError, ParseError, DataError, FileNotFoundError)


# ---------------------------------------------------------------------------
# run config


_TOP_KEYS = {
    "model", "tokenizer", "vocab_size", "model_config", "train_config",
    "datasets", "chain", "head_reset", "abbrev_table", "out_dir", "seed",
}


def load_run_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: run config must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return cfg


def _require_file(path_str: str, what: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def _make_train_config(raw: dict | None, seed: int) -> TrainConfig:
    raw = dict(raw or {})
    preset = raw.pop("preset", None)
    raw.setdefault("seed", seed)
    if preset == "paper":
        return TrainConfig.paper_preset(**raw)
    if preset is not None:
        raise ConfigError(f"unknown train preset {preset!r}")
    return TrainConfig(**raw)


def _build_model(cfg: dict, corpora_sentences: list[str], seed: int):
    kind = cfg.get("model")
    if kind not in ("transformer", "compaggr"):
        raise ConfigError(f"model must be 'transformer' or 'compaggr', got {kind!r}")
    tokenizer = cfg.get("tokenizer") or ("wordpiece" if kind == "transformer" else "word")
    model_cfg = dict(cfg.get("model_config") or {})
    if kind == "transformer":
        if tokenizer == "wordpiece":
            vocab = train_wordpiece(corpora_sentences, target_size=int(cfg.get("vocab_size", 200)))
        else:
            vocab = build_word_vocab(corpora_sentences)
        return TransformerClassifier(TransformerConfig(**model_cfg), vocab, seed=seed, tokenizer_mode=tokenizer)
    if tokenizer != "word":
        raise ConfigError("the compaggr model is word-level; set tokenizer to 'word'")
    if "filter_widths" in model_cfg:
        model_cfg["filter_widths"] = tuple(model_cfg["filter_widths"])
    vocab = build_word_vocab(corpora_sentences)
    return CompAggrModel(CompAggrConfig(**model_cfg), vocab, seed=seed)


def _sentences(datasets) -> list[str]:
    out = []
    for examples in datasets:
        for ex in examples:
            out.append(ex.premise)
            out.append(ex.hypothesis)
    return out


def _load_and_expand(path: Path, table) -> list:
    examples = load_jsonl(path)
    if table is not None:
        examples, _ = expand_dataset(examples, table)
    return examples


def _out_dir(args, cfg: dict | None = None) -> Path:
    out = args.out_dir or (cfg or {}).get("out_dir")
    if not out:
        raise ConfigError("an output directory is required (--out-dir or config out_dir)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _summarize(ckpt) -> str:
    best = min(ckpt.history, key=lambda r: r.dev_loss)
    return f"best_dev_loss={best.dev_loss!r}, best_dev_acc={best.dev_accuracy!r}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    out_dir = _out_dir(args)
    spec = SynthSpec(
        vocab_size=args.vocab_size,
        templates_per_class=args.templates_per_class,
        count=args.count,
        seed=args.seed or 0,
        shift=args.shift,
    )

    def split_and_write(examples, stem):
        groups = [examples[i : i + 3] for i in range(0, len(examples), 3)]
        n = len(groups)
        n_train = max(1, round(0.8 * n))
        n_dev = max(1, round(0.1 * n)) if n - n_train >= 2 else max(0, n - n_train - 1)
        parts = {
            "train": [ex for g in groups[:n_train] for ex in g],
            "dev": [ex for g in groups[n_train : n_train + n_dev] for ex in g],
            "test": [ex for g in groups[n_train + n_dev :] for ex in g],
        }
        for name, part in parts.items():
            save_jsonl(out_dir / f"{stem}{name}.jsonl", part)
            print(f"wrote {out_dir / f'{stem}{name}.jsonl'} ({len(part)} examples)")

    if args.transfer_pair:
        source, target = generate_transfer_pair(
            spec,
            source_count=args.source_count,
            target_count=args.target_count,
        )
        split_and_write(source, "source_")
        split_and_write(target, "target_")
    else:
        split_and_write(generate_corpus(spec), "")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(_require_file(args.config, "run config"))
    if args.model:
        cfg["model"] = args.model
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out_dir = _out_dir(args, cfg)

    datasets = cfg.get("datasets")
    if not isinstance(datasets, dict) or "train" not in datasets or "dev" not in datasets:
        raise ConfigError("train needs config datasets.train and datasets.dev")
    train_path = _require_file(datasets["train"], "train dataset")
    dev_path = _require_file(datasets["dev"], "dev dataset")
    table = load_table(_require_file(cfg["abbrev_table"], "abbreviation table")) if cfg.get("abbrev_table") else None

    train_set = _load_and_expand(train_path, table)
    dev_set = _load_and_expand(dev_path, table)
    model = _build_model(cfg, _sentences([train_set, dev_set]), seed)
    config = _make_train_config(cfg.get("train_config"), seed)

    ckpt = train(model, train_set, dev_set, config, dataset_name=Path(train_path).stem)
    ckpt_path = out_dir / "model.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    summary = _summarize(ckpt)
    (out_dir / "summary.txt").write_text(summary + "\n", encoding="utf-8")
    print(f"wrote {ckpt_path}")
    print(summary)
    return 0


def cmd_transfer(args) -> int:
    cfg = load_run_config(_require_file(args.config, "run config"))
    if args.model:
        cfg["model"] = args.model
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out_dir = _out_dir(args, cfg)

    chain_cfg = cfg.get("chain")
    if not isinstance(chain_cfg, list) or not chain_cfg:
        raise ConfigError("transfer needs a non-empty config chain")
    table = load_table(_require_file(cfg["abbrev_table"], "abbreviation table")) if cfg.get("abbrev_table") else None

    stages = []
    for i, stage_cfg in enumerate(chain_cfg):
        if not isinstance(stage_cfg, dict) or "train" not in stage_cfg or "dev" not in stage_cfg:
            raise ConfigError(f"chain stage {i}: needs train and dev dataset paths")
        name = stage_cfg.get("name", f"stage{i}")
        train_set = _load_and_expand(_require_file(stage_cfg["train"], f"stage {name} train dataset"), table)
        dev_set = _load_and_expand(_require_file(stage_cfg["dev"], f"stage {name} dev dataset"), table)
        stage_train_cfg = dict(cfg.get("train_config") or {})
        stage_train_cfg.update(stage_cfg.get("train_config") or {})
        stages.append(Stage(name, train_set, dev_set, _make_train_config(stage_train_cfg, seed)))

    # vocabulary from the union of all chain corpora, built up front
    union_sentences = _sentences([s.train_set for s in stages] + [s.dev_set for s in stages])
    chain = TransferChain(stages=stages, head_reset=cfg.get("head_reset", "keep"))
    ckpt = run_chain(lambda: _build_model(cfg, union_sentences, seed), chain)

    ckpt_path = out_dir / "model.ckpt"
    save_checkpoint(ckpt, ckpt_path)
    summary = _summarize(ckpt)
    (out_dir / "summary.txt").write_text(summary + "\n", encoding="utf-8")
    print(f"wrote {ckpt_path} (chain: {' -> '.join(ckpt.provenance)})")
    print(summary)
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    model = model_from_checkpoint(ckpt)
    examples = load_jsonl(_require_file(args.dataset, "dataset"))
    out_dir = _out_dir(args)

    report = {"mode": args.mode, "n_examples": len(examples)}
    if args.mode == "pointwise":
        errors = []
        preds = predict_pointwise(model, examples, error_log=errors)
        rows = [FilePrediction(p.pair_id, p.probs, p.predicted_label) for p in preds]
        report["n_errors"] = len(errors)
    else:
        triples, _ = group_into_triples(examples, key=args.group_key)
        in_triples = {id(ex) for t in triples for ex in t.examples}
        leftovers = [ex for ex in examples if id(ex) not in in_triples]
        rows = []
        for t in triples:
            result = predict_listwise(model, t)
            for pid, label, probs in zip(result.pair_ids, result.labels, result.probs):
                rows.append(FilePrediction(pid, probs, label))
        errors = []
        for p in predict_pointwise(model, leftovers, error_log=errors):
            rows.append(FilePrediction(p.pair_id, p.probs, p.predicted_label))
        if leftovers:
            print(f"warning: {len(leftovers)} examples not in complete triples; fell back to pointwise")
        report["n_triples"] = len(triples)
        report["n_fallback_pointwise"] = len(leftovers)
        report["n_errors"] = len(errors)

    pred_path = out_dir / "predictions.tsv"
    write_predictions(pred_path, rows)
    write_metrics(out_dir / "predict_report.txt", report)
    print(f"wrote {pred_path} ({len(rows)} predictions)")
    return 0


def cmd_eval(args) -> int:
    golds = load_jsonl(_require_file(args.dataset, "dataset"))
    out_dir = _out_dir(args)
    pred_sets = [read_predictions(_require_file(p, "prediction file")) for p in args.predictions]
    if len(pred_sets) not in (1, 2):
        raise ConfigError("eval takes one or two prediction files")

    metrics: dict = {}
    for i, preds in enumerate(pred_sets):
        prefix = "" if len(pred_sets) == 1 else f"model_{'ab'[i]}_"
        metrics[f"{prefix}accuracy"] = accuracy(preds, golds)
        metrics[f"{prefix}n"] = len(preds)
        try:
            metrics[f"{prefix}mean_correct_confidence"] = mean_correct_confidence(preds, golds)
        except DataError:
            metrics[f"{prefix}mean_correct_confidence"] = "undefined"

    if len(pred_sets) == 2:
        part = agreement_partition(pred_sets[0], pred_sets[1], golds)
        for key, value in sorted(part.counts.items()):
            metrics[f"agreement_{key}_count"] = value
        for key, value in sorted(part.fractions.items()):
            metrics[f"agreement_{key}_fraction"] = value

    metrics_path = out_dir / "metrics.txt"
    write_metrics(metrics_path, metrics)
    for key in sorted(metrics):
        print(f"{key}={metrics[key]}")
    print(f"wrote {metrics_path}")
    return 0


def cmd_expand(args) -> int:
    table = load_table(_require_file(args.table, "abbreviation table"))
    examples = load_jsonl(_require_file(args.dataset, "dataset"))
    out_dir = _out_dir(args)
    expanded, report = expand_dataset(examples, table)
    out_path = out_dir / "expanded.jsonl"
    save_jsonl(out_path, expanded)
    with open(out_dir / "expand_report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"total={report.total}\n")
        for surface in sorted(report.counts):
            fh.write(f"{surface}\t{report.counts[surface]}\n")
    print(f"wrote {out_path} ({report.total} replacements)")
    return 0


def cmd_inspect(args) -> int:
    ckpt = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    print(f"kind: {ckpt.kind}")
    print(f"tokenizer_mode: {ckpt.tokenizer_mode}")
    print(f"config: {json.dumps(ckpt.model_config, sort_keys=True)}")
    print(f"vocab_size: {len(ckpt.vocab_tokens)}")
    print(f"provenance: {' -> '.join(ckpt.provenance) or '(none)'}")
    print(f"adam_t: {ckpt.adam_t}")
    if ckpt.history:
        best = min(ckpt.history, key=lambda r: r.dev_loss)
        print(f"evaluations: {len(ckpt.history)}, best_dev_loss={best.dev_loss!r} at step {best.step}")
    total = 0
    for name, arr in ckpt.params.items():
        total += arr.size
        print(f"  {name:24s} {str(arr.shape):14s} l2={float(np.linalg.norm(arr)):.6f}")
    print(f"total_parameters: {total}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clinli", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic dataset files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=300)
    p.add_argument("--vocab-size", type=int, default=30)
    p.add_argument("--templates-per-class", type=int, default=3)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--transfer-pair", action="store_true", help="emit source_* and target_* corpora")
    p.add_argument("--source-count", type=int, default=None)
    p.add_argument("--target-count", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--model", choices=("transformer", "compaggr"), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transfer", help="run a sequential transfer chain")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--model", choices=("transformer", "compaggr"), default=None)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("predict", help="write predictions for a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=("pointwise", "listwise"), default="pointwise")
    p.add_argument("--group-key", choices=("premise", "pair-prefix"), default="premise",
                   help="how list-wise triples are grouped")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score prediction files against gold labels")
    p.add_argument("--predictions", nargs="+", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("expand", help="apply abbreviation expansion to a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("inspect-checkpoint", help="summarize a checkpoint file")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ClinliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
