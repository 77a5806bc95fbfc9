"""Dataset manifests, the label vocabulary and the companion feature files.

Manifest CSV header::

    season,sequence_id,image_id,feature_row,<cat_0>,...,<cat_{k-1}>

Feature file: 16-byte header ``magic | version | rows | dim`` (uint32 LE)
followed by ``rows * dim`` little-endian float32 values, row-major.
"""

from __future__ import annotations

import csv
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateImage,
    EmptyConflict,
    FormatError,
    InconsistentWidth,
    MalformedRow,
    ValidationError,
)

FIXED_COLUMNS = ("season", "sequence_id", "image_id", "feature_row")
FEATURE_MAGIC = 0x45465443  # b"CTFE"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4I")


@dataclass(frozen=True)
class LabelVocabulary:
    names: tuple[str, ...]
    empty_index: int

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 2:
            raise ValidationError("vocabulary needs 'empty' plus at least one category")
        if any(not isinstance(n, str) or not n for n in self.names):
            raise ValidationError("category names must be non-empty strings")
        if len(set(self.names)) != len(self.names):
            raise ValidationError(f"duplicate category names in {self.names}")
        if not 0 <= self.empty_index < len(self.names):
            raise ValidationError(f"empty_index {self.empty_index} out of range")

    @classmethod
    def from_names(cls, names: Sequence[str], empty_name: str = "empty") -> "LabelVocabulary":
        names = tuple(names)
        if empty_name not in names:
            raise ValidationError(f"no category named {empty_name!r} in {names}")
        return cls(names, names.index(empty_name))

    def __len__(self) -> int:
        return len(self.names)

    @property
    def empty_name(self) -> str:
        return self.names[self.empty_index]


@dataclass(frozen=True)
class ImageRecord:
    season: str
    sequence_id: str
    image_id: str
    features: int
    labels: tuple[int, ...]

    def validate(self, vocab: LabelVocabulary) -> None:
        if len(self.labels) != len(vocab):
            raise InconsistentWidth(
                f"{self.sequence_id}/{self.image_id}: {len(self.labels)} labels, "
                f"vocabulary has {len(vocab)}"
            )
        if any(v not in (0, 1) for v in self.labels):
            raise MalformedRow(f"{self.sequence_id}/{self.image_id}: labels must be 0/1")
        if sum(self.labels) == 0:
            raise MalformedRow(f"{self.sequence_id}/{self.image_id}: no positive label")
        if self.labels[vocab.empty_index] == 1 and sum(self.labels) > 1:
            raise EmptyConflict(
                f"{self.sequence_id}/{self.image_id}: empty flag set together with an animal"
            )
        if self.features < 0:
            raise MalformedRow(f"{self.sequence_id}/{self.image_id}: negative feature_row")


@dataclass(frozen=True)
class Manifest:
    records: tuple[ImageRecord, ...]
    vocabulary: LabelVocabulary
    feature_dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            rec.validate(self.vocabulary)
            key = (rec.sequence_id, rec.image_id)
            if key in seen:
                raise DuplicateImage(f"duplicate image {key}")
            seen.add(key)
        if self.feature_dim is not None and self.feature_dim < 1:
            raise ValidationError("feature_dim must be positive")

    def __len__(self) -> int:
        return len(self.records)

    def label_matrix(self) -> np.ndarray:
        return np.array([r.labels for r in self.records], dtype=np.float64).reshape(
            len(self.records), len(self.vocabulary)
        )

    def feature_rows(self) -> np.ndarray:
        return np.array([r.features for r in self.records], dtype=np.int64)

    def subset(self, indices: Iterable[int]) -> "Manifest":
        return Manifest(tuple(self.records[i] for i in indices), self.vocabulary, self.feature_dim)


def _parse_row(row: list[str], lineno: int, width: int) -> ImageRecord:
    if len(row) != width:
        raise MalformedRow(f"line {lineno}: expected {width} columns, got {len(row)}")
    season, seq, img, frow = row[:4]
    try:
        feature_row = int(frow)
    except ValueError:
        raise MalformedRow(f"line {lineno}: feature_row {frow!r} is not an integer") from None
    labels = []
    for cell in row[4:]:
        cell = cell.strip()
        if cell not in ("0", "1"):
            raise MalformedRow(f"line {lineno}: non-binary label {cell!r}")
        labels.append(int(cell))
    return ImageRecord(season, seq, img, feature_row, tuple(labels))


def load_manifest(
    path: str | Path,
    empty_name: str = "empty",
    features: str | Path | None = None,
) -> Manifest:
    """Read and validate a manifest CSV.

    ``feature_dim`` is taken from the header of ``features`` when given
    (which also checks every ``feature_row`` is in range); otherwise it is
    left as ``None``.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise FormatError(f"cannot open manifest {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(f"{path}: missing header") from None
        if tuple(header[:4]) != FIXED_COLUMNS:
            raise MalformedRow(f"{path}: header must start with {','.join(FIXED_COLUMNS)}")
        vocab = LabelVocabulary.from_names(header[4:], empty_name)
        width = len(header)
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) > 4 and len(row) != width:
                raise InconsistentWidth(
                    f"line {lineno}: {len(row) - 4} label columns, header has {width - 4}"
                )
            records.append(_parse_row(row, lineno, width))

    feature_dim = None
    if features is not None:
        rows, feature_dim = read_feature_header(features)
        bad = [r for r in records if r.features >= rows]
        if bad:
            raise MalformedRow(
                f"feature_row {bad[0].features} out of range for {rows}-row feature file"
            )
    return Manifest(tuple(records), vocab, feature_dim)


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIXED_COLUMNS + manifest.vocabulary.names)
        for r in manifest.records:
            w.writerow([r.season, r.sequence_id, r.image_id, r.features, *r.labels])


def group_by_sequence(manifest: Manifest) -> "OrderedDict[str, list[ImageRecord]]":
    groups: OrderedDict[str, list[ImageRecord]] = OrderedDict()
    for rec in manifest.records:
        groups.setdefault(rec.sequence_id, []).append(rec)
    return groups


# feature files


def write_features(array: np.ndarray, path: str | Path) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim != 2 or array.shape[1] < 1:
        raise ValidationError(f"feature array must be 2-D with dim >= 1, got {array.shape}")
    rows, dim = array.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, rows, dim))
        fh.write(array.tobytes())


def read_feature_header(path: str | Path) -> tuple[int, int]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read(_HEADER.size)
    except OSError as e:
        raise FormatError(f"cannot open feature file {path}: {e}") from e
    if len(raw) != _HEADER.size:
        raise FormatError(f"{path}: truncated feature header")
    magic, version, rows, dim = _HEADER.unpack(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported feature file version {version}")
    return rows, dim


def read_features(path: str | Path) -> np.ndarray:
    """Load a feature file as a ``(rows, dim)`` float32 array."""
    rows, dim = read_feature_header(path)
    data = np.fromfile(path, dtype="<f4", offset=_HEADER.size)
    if data.size != rows * dim:
        raise FormatError(f"{path}: expected {rows * dim} floats, found {data.size}")
    return data.reshape(rows, dim)
