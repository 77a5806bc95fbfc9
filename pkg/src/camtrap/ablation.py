"""Table-4-shaped ablation: single presets, then the three ensemble combiners."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ensemble import CombinerKind, aggregate_sequence, combine
from .errors import ValidationError
from .manifest import Manifest
from .metrics import agg_log_loss, truths_from_manifest
from .sampler import season_chunk_order
from .trainer import predict, preset, train_one_epoch


@dataclass(frozen=True)
class AblationRow:
    seed: int
    model: str
    agg_log_loss: float


def holdout_last_season(manifest: Manifest) -> tuple[Manifest, Manifest]:
    """Split off the latest season (ascending season order) as the evaluation set."""
    seasons = season_chunk_order({r.season for r in manifest.records}, ())
    if len(seasons) < 2:
        raise ValidationError("need at least two seasons to hold one out; pass an eval manifest")
    last = seasons[-1]
    train = [i for i, r in enumerate(manifest.records) if r.season != last]
    held = [i for i, r in enumerate(manifest.records) if r.season == last]
    return manifest.subset(train), manifest.subset(held)


def run_ablation(
    manifest: Manifest,
    features: np.ndarray,
    seeds: Sequence[int],
    presets: Sequence[int] = (1, 2, 3, 4),
    eval_manifest: Manifest | None = None,
    flipped_features: np.ndarray | None = None,
    tta_flip: bool = False,
) -> list[AblationRow]:
    """Train every preset per seed, score each alone and as uniform ensembles.

    Scores are normalized AggLogLoss on ``eval_manifest`` (or the held-out
    last season). Ensemble rows are emitted only when there are at least two
    presets.
    """
    if not seeds:
        raise ValidationError("need at least one seed")
    if eval_manifest is None:
        manifest, eval_manifest = holdout_last_season(manifest)
    truths = truths_from_manifest(eval_manifest)
    empty = manifest.vocabulary.empty_index
    rows: list[AblationRow] = []
    for seed in seeds:
        tables = []
        for number in presets:
            model = train_one_epoch(manifest, features, preset(number, seed=seed), flipped_features=flipped_features)
            table = predict(model, eval_manifest, features, tta_flip, flipped_features)
            tables.append(table)
            rows.append(AblationRow(seed, f"preset{number}", agg_log_loss(aggregate_sequence(table), truths)))
        if len(tables) < 2:
            continue
        for kind in CombinerKind:
            combined = aggregate_sequence(combine(tables, kind, empty))
            rows.append(AblationRow(seed, f"ensemble_{kind.value}", agg_log_loss(combined, truths)))
    return rows


def write_report(rows: Sequence[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "model", "agg_log_loss"])
        for r in rows:
            w.writerow([r.seed, r.model, f"{r.agg_log_loss:.6g}"])


def summarize(rows: Sequence[AblationRow]) -> dict[str, float]:
    """Mean score per model name across seeds."""
    acc: dict[str, list[float]] = {}
    for r in rows:
        acc.setdefault(r.model, []).append(r.agg_log_loss)
    return {k: float(np.mean(v)) for k, v in acc.items()}
