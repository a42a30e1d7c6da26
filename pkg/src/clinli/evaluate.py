"""Point-wise and list-wise inference plus the analysis metrics.

Point-wise prediction classifies each pair independently.  List-wise
prediction takes a triple of pairs sharing one premise and assigns the
three labels exclusively, by scoring all six label permutations with the
summed log of the point-wise probabilities and keeping the best
(lexicographically smallest permutation on ties).

Metrics: accuracy, the agreement partition between two prediction sets
(which model got each example right), and the mean confidence over
correctly classified examples.

Prediction files are TSV: pair_id, p_entailment, p_contradiction,
p_neutral, predicted_label.  Floats are written with ``repr`` so files
round-trip exactly.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import LABELS, NLIExample, NLITriple, label_id
from .errors import ClinliError, DataError

__all__ = [
    "AgreementPartition",
    "FilePrediction",
    "ListwiseResult",
    "Prediction",
    "PredictionError",
    "accuracy",
    "agreement_partition",
    "best_label_assignment",
    "group_into_triples",
    "mean_correct_confidence",
    "predict_listwise",
    "predict_pointwise",
    "read_predictions",
    "write_metrics",
    "write_predictions",
]

logger = logging.getLogger(__name__)


@dataclass
class Prediction:
    """Per-pair class probabilities with the argmax label (ties resolved by
    the fixed class order entailment < contradiction < neutral)."""

    pair_id: str
    probs: np.ndarray
    predicted_label: str = field(default="")

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (3,):
            raise DataError(f"prediction needs 3 probabilities, got shape {self.probs.shape}")
        if abs(float(self.probs.sum()) - 1.0) > 1e-6:
            raise DataError(f"probabilities sum to {self.probs.sum()}, not 1")
        argmax_label = LABELS[int(np.argmax(self.probs))]
        if not self.predicted_label:
            self.predicted_label = argmax_label
        elif self.predicted_label != argmax_label:
            raise DataError(
                f"predicted label {self.predicted_label!r} is not the argmax {argmax_label!r}"
            )

    @property
    def confidence(self) -> float:
        return float(self.probs[label_id(self.predicted_label)])


@dataclass
class FilePrediction:
    """A prediction file row.  Unlike Prediction, the label is free: list-wise
    assignments may legitimately differ from the per-pair argmax."""

    pair_id: str
    probs: np.ndarray
    predicted_label: str

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (3,):
            raise DataError(f"prediction needs 3 probabilities, got shape {self.probs.shape}")
        if self.predicted_label not in LABELS:
            raise DataError(f"unknown label {self.predicted_label!r}")

    @property
    def confidence(self) -> float:
        return float(self.probs[label_id(self.predicted_label)])


@dataclass
class PredictionError:
    pair_id: str
    message: str


def _pair_id(ex: NLIExample, index: int) -> str:
    return ex.pair_id if ex.pair_id is not None else f"idx-{index}"


def predict_pointwise(model, examples, error_log: list | None = None) -> list[Prediction]:
    """One prediction per example, order preserved.  Examples the model
    cannot encode are recorded (or logged) and skipped; the run continues."""
    out: list[Prediction] = []
    for i, ex in enumerate(examples):
        pid = _pair_id(ex, i)
        try:
            probs = model.predict_proba(ex.premise, ex.hypothesis)
        except ClinliError as exc:
            record = PredictionError(pair_id=pid, message=str(exc))
            if error_log is not None:
                error_log.append(record)
            else:
                logger.warning("skipping %s: %s", pid, exc)
            continue
        out.append(Prediction(pair_id=pid, probs=probs))
    return out


def best_label_assignment(prob_matrix) -> tuple[tuple[int, int, int], float]:
    """Exclusive assignment of 3 labels to 3 pairs maximizing the summed log
    probability; ties go to the lexicographically smallest permutation."""
    p = np.asarray(prob_matrix, dtype=np.float64)
    if p.shape != (3, 3):
        raise DataError(f"need a 3x3 probability matrix, got {p.shape}")
    best_perm: tuple[int, int, int] | None = None
    best_score = -math.inf
    for perm in itertools.permutations(range(3)):
        score = sum(math.log(max(p[k, perm[k]], 1e-300)) for k in range(3))
        if score > best_score:
            best_score = score
            best_perm = perm
    return best_perm, best_score


@dataclass
class ListwiseResult:
    """Exclusive label assignment for one premise-sharing triple."""

    pair_ids: tuple[str, str, str]
    labels: tuple[str, str, str]
    log_score: float
    probs: np.ndarray

    def as_dict(self) -> dict[str, str]:
        return dict(zip(self.pair_ids, self.labels))


def predict_listwise(model, triple: NLITriple) -> ListwiseResult:
    """Assign the three labels exclusively across the triple's pairs."""
    pair_ids = tuple(_pair_id(ex, i) for i, ex in enumerate(triple.examples))
    probs = np.stack([model.predict_proba(ex.premise, ex.hypothesis) for ex in triple.examples])
    perm, score = best_label_assignment(probs)
    return ListwiseResult(
        pair_ids=pair_ids,
        labels=tuple(LABELS[perm[k]] for k in range(3)),
        log_score=score,
        probs=probs,
    )


def group_into_triples(examples, key: str = "premise") -> tuple[list[NLITriple], int]:
    """Group examples into label-complete triples for list-wise inference.

    ``key`` selects the grouping: "premise" groups by shared premise text,
    "pair-prefix" by the pair id up to its last '-'.  Groups that do not
    form a valid triple (one example per class, one premise) are skipped
    and counted in the second return value.
    """
    if key == "premise":
        key_fn = lambda ex, i: ex.premise
    elif key == "pair-prefix":
        key_fn = lambda ex, i: (_pair_id(ex, i).rsplit("-", 1)[0])
    else:
        raise DataError(f"unknown grouping key {key!r}")
    groups: dict[str, list[NLIExample]] = {}
    for i, ex in enumerate(examples):
        groups.setdefault(key_fn(ex, i), []).append(ex)
    triples: list[NLITriple] = []
    skipped = 0
    for members in groups.values():
        if len(members) != 3:
            skipped += 1
            continue
        try:
            triples.append(NLITriple(examples=tuple(members)))
        except DataError:
            skipped += 1
    return triples, skipped


def _gold_map(golds) -> dict[str, str]:
    out = {}
    for i, ex in enumerate(golds):
        out[_pair_id(ex, i)] = ex.gold_label
    return out


def _check_aligned(predictions, gold_by_id) -> None:
    missing = [p.pair_id for p in predictions if p.pair_id not in gold_by_id]
    if missing:
        raise DataError(f"predictions without matching gold examples: {missing[:5]}")


def accuracy(predictions, golds) -> float:
    """Fraction of predictions matching the gold label, aligned by pair id."""
    preds = list(predictions)
    if not preds:
        raise DataError("no predictions to score")
    gold_by_id = _gold_map(golds)
    _check_aligned(preds, gold_by_id)
    correct = sum(1 for p in preds if p.predicted_label == gold_by_id[p.pair_id])
    return correct / len(preds)


@dataclass
class AgreementPartition:
    """Which of two models classified each example correctly."""

    counts: dict[str, int]
    fractions: dict[str, float]
    total: int


def agreement_partition(preds_a, preds_b, golds) -> AgreementPartition:
    preds_a = list(preds_a)
    preds_b = list(preds_b)
    gold_by_id = _gold_map(golds)
    _check_aligned(preds_a, gold_by_id)
    _check_aligned(preds_b, gold_by_id)
    b_by_id = {p.pair_id: p for p in preds_b}
    if set(b_by_id) != {p.pair_id for p in preds_a}:
        raise DataError("the two prediction sets cover different pair ids")
    counts = {"both": 0, "only_a": 0, "only_b": 0, "neither": 0}
    for pa in preds_a:
        gold = gold_by_id[pa.pair_id]
        a_ok = pa.predicted_label == gold
        b_ok = b_by_id[pa.pair_id].predicted_label == gold
        key = {(True, True): "both", (True, False): "only_a", (False, True): "only_b", (False, False): "neither"}[
            (a_ok, b_ok)
        ]
        counts[key] += 1
    total = len(preds_a)
    if total == 0:
        raise DataError("no predictions to partition")
    fractions = {k: v / total for k, v in counts.items()}
    return AgreementPartition(counts=counts, fractions=fractions, total=total)


def mean_correct_confidence(predictions, golds) -> float:
    """Mean predicted-label probability over correctly classified examples."""
    preds = list(predictions)
    gold_by_id = _gold_map(golds)
    _check_aligned(preds, gold_by_id)
    confidences = [p.confidence for p in preds if p.predicted_label == gold_by_id[p.pair_id]]
    if not confidences:
        raise DataError("mean_correct_confidence undefined: no correct predictions")
    return float(sum(confidences) / len(confidences))


def write_predictions(path, predictions) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in predictions:
            pe, pc, pn = (float(v) for v in p.probs)
            fh.write(f"{p.pair_id}\t{pe!r}\t{pc!r}\t{pn!r}\t{p.predicted_label}\n")


def read_predictions(path) -> list[FilePrediction]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 tab-separated fields")
            pid, pe, pc, pn, label = fields
            out.append(
                FilePrediction(pair_id=pid, probs=np.array([float(pe), float(pc), float(pn)]), predicted_label=label)
            )
    return out


def write_metrics(path, metrics: dict) -> None:
    """Plain-text key=value lines, sorted by key."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(metrics):
            value = metrics[key]
            if isinstance(value, (float, np.floating)):
                fh.write(f"{key}={float(value)!r}\n")
            else:
                fh.write(f"{key}={value}\n")
