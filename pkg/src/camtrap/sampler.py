"""Single-epoch visitation order with per-entry horizontal-flip flags."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from .errors import EmptyManifest, ValidationError
from .manifest import Manifest
from .rng import SplitMix64, derive_seed

StrategyKind = Literal["random", "season_by_season"]


@dataclass(frozen=True)
class SamplingStrategy:
    kind: StrategyKind = "random"
    tail_seasons: tuple[str, ...] = ("9", "10")

    def __post_init__(self):
        if self.kind not in ("random", "season_by_season"):
            raise ValidationError(f"unknown sampling strategy {self.kind!r}")
        object.__setattr__(self, "tail_seasons", tuple(str(s) for s in self.tail_seasons))
        if len(set(self.tail_seasons)) != len(self.tail_seasons):
            raise ValidationError(f"tail seasons must be distinct: {self.tail_seasons}")


@dataclass(frozen=True)
class SamplePlan:
    order: tuple[tuple[int, bool], ...]
    seed: int
    chunks: tuple[str, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.order)

    @property
    def indices(self) -> list[int]:
        return [i for i, _ in self.order]

    @property
    def flips(self) -> list[bool]:
        return [f for _, f in self.order]


def _season_key(tag: str):
    try:
        return (0, float(tag), tag)
    except ValueError:
        return (1, 0.0, tag)


def season_chunk_order(seasons: set[str], tail: tuple[str, ...]) -> list[str]:
    """Ascending non-tail seasons (numeric when parseable), then present tail seasons in order."""
    head = sorted((s for s in seasons if s not in tail), key=_season_key)
    return head + [s for s in tail if s in seasons]


def build_plan(
    manifest: Manifest,
    strategy: SamplingStrategy,
    seed: int,
    flip_probability: float = 0.5,
) -> SamplePlan:
    """Visit every record exactly once.

    The shuffle consumes the first draws of its stream; flips are drawn
    afterwards from the main stream in plan-position order, so the
    permutation does not depend on ``flip_probability``.
    """
    n = len(manifest)
    if n == 0:
        raise EmptyManifest("cannot build a sample plan for an empty manifest")
    if not 0.0 <= flip_probability <= 1.0:
        raise ValidationError(f"flip_probability must be in [0, 1], got {flip_probability}")

    main = SplitMix64(seed)
    chunks: list[str] = []
    if strategy.kind == "random":
        order = main.shuffle(list(range(n)))
    else:
        by_season: dict[str, list[int]] = {}
        for i, rec in enumerate(manifest.records):
            by_season.setdefault(rec.season, []).append(i)
        chunks = season_chunk_order(set(by_season), strategy.tail_seasons)
        order = []
        for season in chunks:
            stream = SplitMix64(derive_seed(seed, "season:" + season))
            order.extend(stream.shuffle(by_season[season]))

    flips = main.bernoulli(n, flip_probability).tolist()
    return SamplePlan(tuple(zip(order, flips)), seed, tuple(chunks))


def batches(plan: SamplePlan, batch_size: int) -> Iterator[list[tuple[int, bool]]]:
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    for start in range(0, len(plan.order), batch_size):
        yield list(plan.order[start : start + batch_size])


def write_plan(plan: SamplePlan, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position", "record_index", "flip"])
        for pos, (idx, flip) in enumerate(plan.order):
            w.writerow([pos, idx, int(flip)])


def read_plan(path: str | Path, seed: int = 0) -> SamplePlan:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    order = tuple((int(r["record_index"]), r["flip"] == "1") for r in rows)
    return SamplePlan(order, seed)


def flip_fraction(plan: SamplePlan) -> float:
    return float(np.mean(plan.flips)) if plan.order else 0.0
