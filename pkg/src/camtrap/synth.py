"""Synthetic camera-trap datasets with empty dominance and skewed animal frequencies.

Every category owns a Gaussian cluster centre (orthogonal to the others when
the feature width allows, so pairwise distances are ``separation * sqrt(2)``); an image's feature vector is
the sum of the centres of its positive labels plus isotropic unit noise, so
``separation`` (the centre norm) sets how learnable the data is. A second
"flipped" view of each image shares the labels but draws fresh noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .manifest import ImageRecord, LabelVocabulary, Manifest, write_features, write_manifest
from .metrics import truths_from_manifest, write_truth


@dataclass(frozen=True)
class SynthConfig:
    categories: int = 3
    sequences: int = 10_000
    images: int | None = None
    test_sequences: int = 2_000
    images_per_sequence: tuple[int, ...] = (1, 2, 3)
    empty_fraction: float = 0.75
    seasons: int = 10
    feature_dim: int = 16
    separation: float = 12.0
    cooccurrence: float = 0.05
    imbalance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.categories < 1 or self.sequences < 1 or self.seasons < 1 or self.feature_dim < 1:
            raise ValidationError("categories, sequences, seasons and feature_dim must be >= 1")
        if self.images is not None and self.images < 1:
            raise ValidationError("images must be >= 1")
        if self.test_sequences < 0:
            raise ValidationError("test_sequences must be >= 0")
        if not self.images_per_sequence or min(self.images_per_sequence) < 1:
            raise ValidationError("images_per_sequence must list positive sizes")
        if not 0.0 <= self.empty_fraction < 1.0:
            raise ValidationError("empty_fraction must be in [0, 1)")
        if not 0.0 <= self.cooccurrence <= 1.0:
            raise ValidationError("cooccurrence must be in [0, 1]")
        if self.separation < 0:
            raise ValidationError("separation must be non-negative")


@dataclass
class SynthDataset:
    train: Manifest
    test: Manifest
    features: np.ndarray
    flipped: np.ndarray
    centres: np.ndarray


def _sequence_labels(rng: np.random.Generator, cfg: SynthConfig, animal_p: np.ndarray) -> np.ndarray:
    labels = np.zeros(cfg.categories + 1, dtype=np.int64)
    if rng.random() < cfg.empty_fraction:
        labels[0] = 1
        return labels
    labels[1 + rng.choice(cfg.categories, p=animal_p)] = 1
    if cfg.categories > 1 and rng.random() < cfg.cooccurrence:
        labels[1 + rng.choice(cfg.categories, p=animal_p)] = 1
    return labels


def _centres(rng: np.random.Generator, k: int, dim: int, norm: float) -> np.ndarray:
    """``k`` centres of length ``norm``, mutually orthogonal whenever ``k <= dim``."""
    raw = rng.standard_normal((max(k, dim), dim))
    if k <= dim:
        q, _ = np.linalg.qr(raw.T)
        raw = q.T
    raw = raw[:k]
    return raw * (norm / np.linalg.norm(raw, axis=1, keepdims=True))


def generate(cfg: SynthConfig) -> SynthDataset:
    """Build train/test manifests over one shared pair of feature stores.

    Train is ``cfg.sequences`` sequences, or exactly ``cfg.images`` images
    when that is set (the last sequence is truncated); test follows with
    ``cfg.test_sequences`` sequences in a season one past the last train
    season.
    """
    rng = np.random.default_rng(cfg.seed)
    names = ("empty", *(f"animal_{i}" for i in range(cfg.categories)))
    vocab = LabelVocabulary(names, 0)
    centres = _centres(rng, len(names), cfg.feature_dim, cfg.separation)
    freq = 1.0 / np.arange(1, cfg.categories + 1) ** cfg.imbalance
    animal_p = freq / freq.sum()
    sizes = np.asarray(cfg.images_per_sequence)

    label_rows: list[np.ndarray] = []

    def make(n_seq: int | None, n_img: int | None, prefix: str, season_of) -> list[ImageRecord]:
        recs: list[ImageRecord] = []
        s = 0
        while (n_img is None and s < n_seq) or (n_img is not None and len(recs) < n_img):
            labels = _sequence_labels(rng, cfg, animal_p)
            size = int(rng.choice(sizes))
            if n_img is not None:
                size = min(size, n_img - len(recs))
            season = season_of(s)
            for k in range(size):
                recs.append(ImageRecord(season, f"{prefix}{s:06d}", f"{prefix}{s:06d}_{k}", len(label_rows), tuple(labels.tolist())))
                label_rows.append(labels)
            s += 1
        return recs

    train = make(cfg.sequences, cfg.images, "S", lambda s: str(1 + int(rng.integers(cfg.seasons))))
    test_season = str(cfg.seasons + 1)
    test = make(cfg.test_sequences, None, "T", lambda s: test_season)

    y = np.array(label_rows, dtype=np.float64).reshape(-1, len(names))
    base = y @ centres
    features = base + rng.standard_normal(base.shape)
    flipped = base + rng.standard_normal(base.shape)
    dim = cfg.feature_dim
    return SynthDataset(
        Manifest(tuple(train), vocab, dim),
        Manifest(tuple(test), vocab, dim),
        features.astype(np.float32),
        flipped.astype(np.float32),
        centres,
    )


SYNTH_FILES = {
    "train": "train.csv",
    "test": "test.csv",
    "features": "features.bin",
    "flipped": "features_flipped.bin",
    "train_truth": "train_truth.csv",
    "test_truth": "test_truth.csv",
}


def write_dataset(ds: SynthDataset, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {k: out_dir / v for k, v in SYNTH_FILES.items()}
    write_manifest(ds.train, paths["train"])
    write_manifest(ds.test, paths["test"])
    write_features(ds.features, paths["features"])
    write_features(ds.flipped, paths["flipped"])
    names = ds.train.vocabulary.names
    write_truth(truths_from_manifest(ds.train), names, paths["train_truth"])
    write_truth(truths_from_manifest(ds.test), names, paths["test_truth"])
    return paths
