"""Per-image ensembling (mean / gmean / class-aware) and sequence aggregation."""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadWeights,
    EmptyTableList,
    FormatError,
    KeyMismatch,
    ValidationError,
    VocabularyMismatch,
    WeightMismatch,
)

GMEAN_CLAMP = 1e-7


class CombinerKind(str, Enum):
    MEAN = "mean"
    GMEAN = "gmean"
    CLASS_AWARE = "class_aware"


@dataclass(frozen=True, eq=False)
class PredictionTable:
    """Probability rows keyed by ``(sequence_id, image_id)``.

    Sequence-level tables have ``image_ids=None`` and are keyed by
    ``sequence_id`` alone.
    """

    sequence_ids: tuple[str, ...]
    image_ids: tuple[str, ...] | None
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sequence_ids", tuple(self.sequence_ids))
        object.__setattr__(self, "names", tuple(self.names))
        if self.image_ids is not None:
            object.__setattr__(self, "image_ids", tuple(self.image_ids))
        n = len(self.sequence_ids)
        if values.shape != (n, len(self.names)):
            raise ValidationError(f"values shape {values.shape} != ({n}, {len(self.names)})")
        if self.image_ids is not None and len(self.image_ids) != n:
            raise ValidationError("sequence_ids and image_ids differ in length")
        if not np.all((values >= 0.0) & (values <= 1.0)):
            raise ValidationError("probabilities must lie in [0, 1]")
        if len(set(self.keys)) != n:
            raise KeyMismatch("duplicate keys in prediction table")

    @property
    def keys(self) -> list:
        if self.image_ids is None:
            return list(self.sequence_ids)
        return list(zip(self.sequence_ids, self.image_ids))

    @property
    def is_sequence_level(self) -> bool:
        return self.image_ids is None

    def __len__(self) -> int:
        return len(self.sequence_ids)

    def with_values(self, values: np.ndarray) -> "PredictionTable":
        return PredictionTable(self.sequence_ids, self.image_ids, values, self.names)

    def reindexed(self, keys: Sequence) -> "PredictionTable":
        """Rows reordered to ``keys``; raises KeyMismatch unless the key sets agree."""
        pos = {k: i for i, k in enumerate(self.keys)}
        if len(keys) != len(pos) or any(k not in pos for k in keys):
            raise KeyMismatch("prediction tables have different key sets")
        idx = [pos[k] for k in keys]
        if self.image_ids is None:
            return PredictionTable(tuple(keys), None, self.values[idx], self.names)
        seqs, imgs = zip(*keys) if keys else ((), ())
        return PredictionTable(seqs, imgs, self.values[idx], self.names)

    def equals(self, other: "PredictionTable") -> bool:
        return (
            self.keys == other.keys
            and self.names == other.names
            and np.array_equal(self.values, other.values)
        )


def _aligned(tables: Sequence[PredictionTable]) -> list[np.ndarray]:
    if not tables:
        raise EmptyTableList("need at least one prediction table")
    first = tables[0]
    out = [first.values]
    for t in tables[1:]:
        if t.names != first.names:
            raise VocabularyMismatch(f"vocabularies differ: {first.names} vs {t.names}")
        if t.is_sequence_level != first.is_sequence_level:
            raise KeyMismatch("cannot mix image-level and sequence-level tables")
        out.append(t.values if t.keys == first.keys else t.reindexed(first.keys).values)
    return out


def _geometric_columns(kind: CombinerKind, n_cols: int, empty_index: int) -> np.ndarray:
    geo = np.zeros(n_cols, dtype=bool)
    if kind is CombinerKind.GMEAN:
        geo[:] = True
    elif kind is CombinerKind.CLASS_AWARE:
        if not 0 <= empty_index < n_cols:
            raise ValidationError(f"empty_index {empty_index} out of range")
        geo[empty_index] = True
    return geo


def _mean(stack: np.ndarray) -> np.ndarray:
    """Mean over axis 0 of a stack sorted along that axis; identical inputs come back unchanged."""
    return np.where(stack[0] == stack[-1], stack[0], stack.mean(axis=0))


def combine(
    tables: Sequence[PredictionTable],
    kind: CombinerKind | str = CombinerKind.MEAN,
    empty_index: int = 0,
) -> PredictionTable:
    kind = CombinerKind(kind)
    stacks = _aligned(tables)
    first = tables[0]
    geo = _geometric_columns(kind, len(first.names), empty_index)
    if len(stacks) == 1:
        return first.with_values(first.values.copy())
    # sorting along the model axis makes the reductions exactly order-invariant
    stack = np.sort(np.stack(stacks), axis=0)
    out = _mean(stack)
    if geo.any():
        clamped = np.clip(stack[:, :, geo], GMEAN_CLAMP, 1.0)
        gm = np.exp(np.log(clamped).mean(axis=0))
        # exp(mean(log)) can round a ulp off; pin it to AM-GM and to equal inputs
        gm = np.minimum(gm, _mean(clamped))
        out[:, geo] = np.where(clamped[0] == clamped[-1], clamped[0], gm)
    return first.with_values(out)


def weighted_combine(
    tables: Sequence[PredictionTable],
    weights: Sequence[float],
    kind: CombinerKind | str = CombinerKind.MEAN,
    empty_index: int = 0,
) -> PredictionTable:
    kind = CombinerKind(kind)
    stacks = _aligned(tables)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(stacks),):
        raise WeightMismatch(f"{len(w)} weights for {len(stacks)} tables")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or abs(w.sum() - 1.0) > 1e-9:
        raise BadWeights(f"weights must be non-negative and sum to 1, got {list(w)}")
    first = tables[0]
    keep = w > 0
    if keep.sum() == 1:
        only = stacks[int(np.flatnonzero(keep)[0])]
        return first.with_values(only.copy())
    stack = np.stack(stacks)[keep]
    w = w[keep]
    geo = _geometric_columns(kind, len(first.names), empty_index)
    out = np.tensordot(w, stack, axes=1)
    if geo.any():
        clamped = np.clip(stack[:, :, geo], GMEAN_CLAMP, 1.0)
        gm = np.exp(np.tensordot(w, np.log(clamped), axes=1))
        out[:, geo] = np.minimum(gm, np.tensordot(w, clamped, axes=1))
    return first.with_values(np.clip(out, 0.0, 1.0))


def aggregate_sequence(table: PredictionTable) -> PredictionTable:
    """Arithmetic mean of each sequence's image rows, sequences in first-seen order."""
    if len(table) == 0:
        raise ValidationError("cannot aggregate an empty prediction table")
    if table.is_sequence_level:
        return table
    groups: OrderedDict[str, list[int]] = OrderedDict()
    for i, seq in enumerate(table.sequence_ids):
        groups.setdefault(seq, []).append(i)
    values = np.empty((len(groups), len(table.names)))
    for row, idx in enumerate(groups.values()):
        values[row] = _mean(np.sort(table.values[idx], axis=0))
    return PredictionTable(tuple(groups), None, values, table.names)


# CSV I/O


def write_predictions(table: PredictionTable, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if table.is_sequence_level:
            w.writerow(["sequence_id", *table.names])
            for seq, row in zip(table.sequence_ids, table.values.tolist()):
                w.writerow([seq, *(repr(v) for v in row)])
        else:
            w.writerow(["sequence_id", "image_id", *table.names])
            for seq, img, row in zip(table.sequence_ids, table.image_ids, table.values.tolist()):
                w.writerow([seq, img, *(repr(v) for v in row)])


def read_predictions(path: str | Path) -> PredictionTable:
    """Read an image-level or sequence-level prediction CSV (detected from the header)."""
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise FormatError(f"cannot open predictions {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sequence_id":
            raise FormatError(f"{path}: header must start with sequence_id")
        image_level = len(header) > 1 and header[1] == "image_id"
        n_key = 2 if image_level else 1
        names = tuple(header[n_key:])
        seqs, imgs, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns")
            seqs.append(row[0])
            if image_level:
                imgs.append(row[1])
            try:
                rows.append([float(x) for x in row[n_key:]])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return PredictionTable(tuple(seqs), tuple(imgs) if image_level else None, values, names)
