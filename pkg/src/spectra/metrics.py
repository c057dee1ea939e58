"""
Confusion-matrix metrics for the 4-class problem.

Rows of a confusion matrix are ground truth, columns are predictions.
Zero denominators (an empty prediction column, a single-class matrix for MCC)
give 0 instead of raising so batch evaluation of weak classifiers finishes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DegenerateClassError,
    EmptyClassError,
    EmptyInputError,
    LabelOutOfRangeError,
    MissingColumnError,
    PredictionParseError,
)
from .image_io import CLASS_NAMES, ClassLabel

SCORE_COLUMNS = [f"score_{k}" for k in range(len(CLASS_NAMES))]
REQUIRED_COLUMNS = ["id", "true_label", "pred_label"]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple[str, ...] = tuple(CLASS_NAMES)

    def __post_init__(self):
        counts = np.array(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {counts.shape}")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.round(counts)):
                raise ValueError("confusion counts must be integers")
            counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("confusion counts must be nonnegative")
        names = tuple(self.class_names)
        if len(names) != counts.shape[0]:
            names = tuple(str(i) for i in range(counts.shape[0]))
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", names)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class PredictionRecord:
    item_id: str
    true_label: int
    pred_label: int
    scores: tuple[float, ...] | None = None


@dataclass
class MetricsReport:
    accuracy: float
    balanced_accuracy: float
    mcc: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: ConfusionMatrix
    auc_ovr_macro: float | None = None
    class_names: list[str] = field(default_factory=lambda: list(CLASS_NAMES))


def _require_total(cm: ConfusionMatrix) -> None:
    if cm.total <= 0:
        raise EmptyInputError("confusion matrix is empty")


def confusion_from_records(records, k: int = len(CLASS_NAMES)) -> ConfusionMatrix:
    records = list(records)
    if not records:
        raise EmptyInputError("no prediction records")
    counts = np.zeros((k, k), dtype=np.int64)
    for rec in records:
        t, p = int(rec.true_label), int(rec.pred_label)
        if not (0 <= t < k and 0 <= p < k):
            raise LabelOutOfRangeError(f"record {rec.item_id!r}: label out of range 0..{k - 1}")
        counts[t, p] += 1
    return ConfusionMatrix(counts, tuple(CLASS_NAMES) if k == len(CLASS_NAMES) else ())


def accuracy(cm: ConfusionMatrix) -> float:
    _require_total(cm)
    return float(np.trace(cm.counts) / cm.total)


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class recall."""
    _require_total(cm)
    rows = cm.counts.sum(axis=1)
    for name, r in zip(cm.class_names, rows):
        if r == 0:
            raise EmptyClassError(name)
    return float(np.mean(np.diag(cm.counts) / rows))


def mcc_multiclass(cm: ConfusionMatrix) -> float:
    """Gorodkin's K-class Matthews correlation coefficient."""
    _require_total(cm)
    c = cm.counts.astype(np.float64)
    s = c.sum()
    correct = np.trace(c)
    t = c.sum(axis=1)
    p = c.sum(axis=0)
    denom = (s * s - p @ p) * (s * s - t @ t)
    if denom <= 0:
        return 0.0
    return float((correct * s - p @ t) / math.sqrt(denom))


def per_class_prf(cm: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    _require_total(cm)
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    cols, rows = c.sum(axis=0), c.sum(axis=1)
    precision = np.divide(tp, cols, out=np.zeros_like(tp), where=cols > 0)
    recall = np.divide(tp, rows, out=np.zeros_like(tp), where=rows > 0)
    both = precision + recall
    f1 = np.divide(2 * precision * recall, both, out=np.zeros_like(tp), where=both > 0)
    return precision, recall, f1


def macro_f1(cm: ConfusionMatrix) -> float:
    return float(np.mean(per_class_prf(cm)[2]))


def binary_auc(scores, positive) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    ranks = rankdata(scores, method="average")
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_ovr_macro(records, k: int = len(CLASS_NAMES)) -> float:
    records = list(records)
    if not records:
        raise EmptyInputError("no prediction records")
    if any(r.scores is None for r in records):
        raise EmptyInputError("AUC needs score vectors on every record")
    scores = np.array([r.scores for r in records], dtype=np.float64)
    truth = np.array([r.true_label for r in records])
    names = CLASS_NAMES if k == len(CLASS_NAMES) else [str(i) for i in range(k)]
    aucs = []
    for cls in range(k):
        pos = truth == cls
        if pos.all() or not pos.any():
            raise DegenerateClassError(names[cls], "needs both positive and negative examples for AUC")
        aucs.append(binary_auc(scores[:, cls], pos))
    return float(np.mean(aucs))


def compute_report(records) -> MetricsReport:
    records = list(records)
    cm = confusion_from_records(records)
    auc = None
    if records and all(r.scores is not None for r in records):
        auc = auc_ovr_macro(records)
    return report_from_confusion(cm, auc)


def report_from_confusion(cm: ConfusionMatrix, auc: float | None = None) -> MetricsReport:
    precision, recall, f1 = per_class_prf(cm)
    return MetricsReport(
        accuracy=accuracy(cm),
        balanced_accuracy=balanced_accuracy(cm),
        mcc=mcc_multiclass(cm),
        macro_f1=float(np.mean(f1)),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        confusion=cm,
        auc_ovr_macro=auc,
        class_names=list(cm.class_names),
    )


# ---------------------------------------------------------------------------
# file formats


def argmax_label(scores) -> int:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return int(np.argmax(scores))


def read_predictions(path) -> list[PredictionRecord]:
    """Parse a prediction CSV.

    Labels may be class indices or class names. Score columns are optional as
    a group; when present the predicted label must equal their argmax.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumnError(f"{path}: empty file, expected header {REQUIRED_COLUMNS}") from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: missing column(s) {', '.join(missing)}")
        present = [c for c in SCORE_COLUMNS if c in header]
        if present and len(present) != len(SCORE_COLUMNS):
            absent = [c for c in SCORE_COLUMNS if c not in header]
            raise MissingColumnError(f"{path}: score columns are all-or-nothing; missing {', '.join(absent)}")
        col = {name: header.index(name) for name in header}
        records = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise PredictionParseError(path, line, f"expected {len(header)} fields, got {len(row)}")
            try:
                true_label = int(ClassLabel.parse(row[col["true_label"]]))
                pred_label = int(ClassLabel.parse(row[col["pred_label"]]))
                scores = None
                if present:
                    scores = tuple(float(row[col[c]]) for c in SCORE_COLUMNS)
            except ValueError as exc:
                raise PredictionParseError(path, line, str(exc)) from None
            if scores is not None:
                if not all(math.isfinite(s) for s in scores):
                    raise PredictionParseError(path, line, "non-finite score")
                if argmax_label(scores) != pred_label:
                    raise PredictionParseError(
                        path, line,
                        f"row {row[col['id']]!r}: pred_label {pred_label} disagrees with argmax of scores "
                        f"({argmax_label(scores)})",
                    )
            records.append(PredictionRecord(row[col["id"]], true_label, pred_label, scores))
    return records


def write_predictions(records, path) -> None:
    records = list(records)
    with_scores = bool(records) and all(r.scores is not None for r in records)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REQUIRED_COLUMNS + (SCORE_COLUMNS if with_scores else []))
        for r in records:
            row = [r.item_id, r.true_label, r.pred_label]
            if with_scores:
                row += [repr(float(s)) for s in r.scores]
            writer.writerow(row)


def _to_json(value, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(value, bool) or value is None:
        return {True: "true", False: "false", None: "null"}[value]
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        items = [f"{pad}{_to_json(str(k))}: {_to_json(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(value, (list, tuple)):
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in value):
            return "[" + ", ".join(_to_json(v) for v in value) + "]"
        items = [pad + _to_json(v, indent + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def report_to_dict(report: MetricsReport) -> dict:
    out = {
        "accuracy": report.accuracy,
        "balanced_accuracy": report.balanced_accuracy,
        "mcc": report.mcc,
        "macro_f1": report.macro_f1,
        "per_class": {
            name: {"precision": p, "recall": r, "f1": f}
            for name, p, r, f in zip(report.class_names, report.precision, report.recall, report.f1)
        },
    }
    if report.auc_ovr_macro is not None:
        out["auc_ovr_macro"] = report.auc_ovr_macro
    out["confusion"] = report.confusion.counts.tolist()
    return out


def write_report(report: MetricsReport, path) -> None:
    """JSON report; every real number is written with 6 decimal places."""
    Path(path).write_text(_to_json(report_to_dict(report)) + "\n", encoding="utf-8")
