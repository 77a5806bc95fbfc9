"""Sequence-level scoring: aggregated log loss, accuracy, empty accuracy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ensemble import PredictionTable
from .errors import FormatError, KeyMismatch, ValidationError, VocabularyMismatch
from .manifest import LabelVocabulary, Manifest, group_by_sequence

LOG_CLAMP = 1e-15


@dataclass(frozen=True)
class SequenceGroundTruth:
    sequence_id: str
    labels: tuple[int, ...]


@dataclass(frozen=True)
class MetricReport:
    agg_log_loss_raw: float
    agg_log_loss: float
    accuracy: float
    empty_accuracy: float
    sequences_scored: int

    def format(self) -> str:
        return "\n".join(
            [
                f"agg_log_loss_raw={self.agg_log_loss_raw:.6g}",
                f"agg_log_loss_normalized={self.agg_log_loss:.6g}",
                f"accuracy={self.accuracy:.6g}",
                f"empty_accuracy={self.empty_accuracy:.6g}",
                f"sequences={self.sequences_scored}",
            ]
        )


def truths_from_manifest(manifest: Manifest) -> list[SequenceGroundTruth]:
    """Sequence truth as the union of the sequence's image labels."""
    out = []
    empty = manifest.vocabulary.empty_index
    for seq, recs in group_by_sequence(manifest).items():
        labels = np.max([r.labels for r in recs], axis=0)
        if labels.sum() > 1 and labels[empty]:
            labels[empty] = 0
        out.append(SequenceGroundTruth(seq, tuple(int(v) for v in labels)))
    return out


def write_truth(truths: Sequence[SequenceGroundTruth], names: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence_id", *names])
        for t in truths:
            w.writerow([t.sequence_id, *t.labels])


def read_truth(path: str | Path, empty_name: str = "empty") -> tuple[list[SequenceGroundTruth], LabelVocabulary]:
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise FormatError(f"cannot open truth file {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sequence_id":
            raise FormatError(f"{path}: header must start with sequence_id")
        vocab = LabelVocabulary.from_names(header[1:], empty_name)
        truths = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header) or any(c not in ("0", "1") for c in row[1:]):
                raise ValidationError(f"{path}:{lineno}: malformed truth row")
            labels = tuple(int(c) for c in row[1:])
            if sum(labels) == 0 or (labels[vocab.empty_index] and sum(labels) > 1):
                raise ValidationError(f"{path}:{lineno}: invalid label combination")
            truths.append(SequenceGroundTruth(row[0], labels))
    return truths, vocab


def _aligned(predictions: PredictionTable, truths: Sequence[SequenceGroundTruth]):
    if not predictions.is_sequence_level:
        raise ValidationError("metrics need a sequence-level prediction table")
    pos = {s: i for i, s in enumerate(predictions.sequence_ids)}
    ids = [t.sequence_id for t in truths]
    if len(ids) != len(pos) or any(s not in pos for s in ids):
        raise KeyMismatch("prediction and truth sequence ids differ")
    width = len(predictions.names)
    if any(len(t.labels) != width for t in truths):
        raise VocabularyMismatch("truth label width differs from prediction width")
    p = predictions.values[[pos[s] for s in ids]]
    t = np.array([t.labels for t in truths], dtype=np.float64).reshape(len(ids), width)
    return p, t


def _mean(values: np.ndarray) -> float:
    """Correctly rounded sum, then one residual pass.

    Independent of summation order, and exact when every term is equal.
    """
    flat = values.ravel().tolist()
    m = math.fsum(flat) / len(flat)
    return m + math.fsum(v - m for v in flat) / len(flat)


def _losses(predictions: PredictionTable, truths: Sequence[SequenceGroundTruth]) -> np.ndarray:
    p, t = _aligned(predictions, truths)
    if len(p) == 0:
        raise ValidationError("no sequences to score")
    p = np.clip(p, LOG_CLAMP, 1.0 - LOG_CLAMP)
    return -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))


def sequence_losses(predictions: PredictionTable, truths: Sequence[SequenceGroundTruth]) -> np.ndarray:
    """Per-sequence sum of per-category binary log losses."""
    return np.array([math.fsum(row) for row in _losses(predictions, truths).tolist()])


def agg_log_loss(
    predictions: PredictionTable,
    truths: Sequence[SequenceGroundTruth],
    normalize: bool = True,
) -> float:
    """Mean over sequences of the summed binary losses.

    With ``normalize`` the result is divided by the category count, i.e. the
    mean binary loss over every (sequence, category) cell.
    """
    if normalize:
        return _mean(_losses(predictions, truths))
    return _mean(sequence_losses(predictions, truths))


def accuracy(predictions: PredictionTable, truths: Sequence[SequenceGroundTruth]) -> float:
    p, t = _aligned(predictions, truths)
    if len(p) == 0:
        raise ValidationError("no sequences to score")
    top = np.argmax(p, axis=1)  # first maximum wins ties
    return float(np.mean(t[np.arange(len(p)), top] == 1.0))


def empty_accuracy(
    predictions: PredictionTable,
    truths: Sequence[SequenceGroundTruth],
    empty_index: int,
    threshold: float = 0.5,
) -> float:
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must be in (0, 1), got {threshold}")
    p, t = _aligned(predictions, truths)
    if len(p) == 0:
        raise ValidationError("no sequences to score")
    return float(np.mean((p[:, empty_index] >= threshold) == (t[:, empty_index] == 1.0)))


def evaluate(
    predictions: PredictionTable,
    truths: Sequence[SequenceGroundTruth],
    empty_index: int,
    threshold: float = 0.5,
) -> MetricReport:
    return MetricReport(
        agg_log_loss_raw=agg_log_loss(predictions, truths, normalize=False),
        agg_log_loss=agg_log_loss(predictions, truths),
        accuracy=accuracy(predictions, truths),
        empty_accuracy=empty_accuracy(predictions, truths, empty_index, threshold),
        sequences_scored=len(truths),
    )
