"""Sentence-pair inference records and dataset file I/O.

Dataset files are JSONL with one object per line carrying ``sentence1``
(premise), ``sentence2`` (hypothesis), ``gold_label``, and an optional
``pairID``, so files in the common clinical NLI distribution schema load
without conversion.  Text passes through verbatim; no normalization or
de-identification handling is applied at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DataError

__all__ = ["LABELS", "NLIExample", "NLITriple", "label_id", "load_jsonl", "save_jsonl"]

LABELS = ("entailment", "contradiction", "neutral")
_LABEL_TO_ID = {name: i for i, name in enumerate(LABELS)}


def label_id(label: str) -> int:
    try:
        return _LABEL_TO_ID[label]
    except KeyError:
        raise DataError(f"unknown label {label!r}; expected one of {LABELS}") from None


@dataclass
class NLIExample:
    premise: str
    hypothesis: str
    gold_label: str
    pair_id: str | None = None

    def __post_init__(self):
        if not self.premise or not self.hypothesis:
            raise DataError("premise and hypothesis must be non-empty")
        if self.gold_label not in LABELS:
            raise DataError(f"gold_label {self.gold_label!r} not in {LABELS}")


@dataclass
class NLITriple:
    """Three examples sharing one premise, one per class."""

    examples: tuple[NLIExample, NLIExample, NLIExample]

    def __post_init__(self):
        premises = {e.premise for e in self.examples}
        if len(premises) != 1:
            raise DataError("triple examples must share one premise")
        labels = sorted(e.gold_label for e in self.examples)
        if labels != sorted(LABELS):
            raise DataError(f"triple must cover all three classes exactly once, got {labels}")

    @property
    def premise(self) -> str:
        return self.examples[0].premise


def load_jsonl(path) -> list[NLIExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            try:
                examples.append(
                    NLIExample(
                        premise=obj["sentence1"],
                        hypothesis=obj["sentence2"],
                        gold_label=obj["gold_label"],
                        pair_id=obj.get("pairID"),
                    )
                )
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing key {exc}") from None
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return examples


def save_jsonl(path, examples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            obj = {"sentence1": ex.premise, "sentence2": ex.hypothesis, "gold_label": ex.gold_label}
            if ex.pair_id is not None:
                obj["pairID"] = ex.pair_id
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
