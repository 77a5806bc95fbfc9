"""Single-epoch training of a multi-label sigmoid MLP over feature vectors.

Adam, gradient accumulation, inverted dropout on hidden activations and the
one-cycle schedule. Parameters are float64 throughout; features are stored
as float32 and widened on load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .ensemble import PredictionTable
from .errors import (
    DimensionMismatch,
    EmptyManifest,
    FormatError,
    LengthMismatch,
    MissingFlippedFeatures,
    NonFiniteGradient,
    ValidationError,
)
from .manifest import Manifest
from .rng import SplitMix64, derive_seed
from .sampler import SamplingStrategy, batches, build_plan
from .schedule import ScheduleConfig, lr_at, warmup_steps_for

BCE_EPS = 1e-7
# expit(36) is the largest logit whose sigmoid still rounds below 1.0
LOGIT_LIMIT = 36.0


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    grad_accum: int = 2
    strategy: SamplingStrategy = field(default_factory=SamplingStrategy)
    dropout: float = 0.0
    seed: int = 0
    hidden_dims: tuple[int, ...] = (64,)
    adam: tuple[float, float, float] = (0.9, 0.999, 1e-8)
    flip_probability: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1 or self.grad_accum < 1:
            raise ValidationError("batch_size and grad_accum must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if any(h < 1 for h in self.hidden_dims):
            raise ValidationError("hidden layer widths must be positive")


# Training presets; dropout follows the backbone each preset stood in for
PRESETS: dict[int, TrainConfig] = {
    1: TrainConfig(16, 2, SamplingStrategy("season_by_season"), 0.0),
    2: TrainConfig(13, 3, SamplingStrategy("random"), 0.0),
    3: TrainConfig(16, 2, SamplingStrategy("season_by_season"), 0.2),
    4: TrainConfig(11, 3, SamplingStrategy("random"), 0.3),
}


def preset(number: int, **overrides) -> TrainConfig:
    if number not in PRESETS:
        raise ValidationError(f"unknown preset {number}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[number], **overrides)


@dataclass
class ModelState:
    """Layer parameters ``[W0, b0, W1, b1, ...]`` with ``W`` shaped (in, out)."""

    params: list[np.ndarray]
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    @property
    def weights(self) -> list[np.ndarray]:
        return self.params[0::2]

    @property
    def biases(self) -> list[np.ndarray]:
        return self.params[1::2]

    @property
    def input_dim(self) -> int:
        return self.params[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.params[-1].shape[0]

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    @classmethod
    def from_params(cls, params: Sequence[np.ndarray], step: int = 0) -> "ModelState":
        params = [np.array(p, dtype=np.float64) for p in params]
        return cls(params, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], step)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (*self.params, *self.m, *self.v))


def init_model(
    input_dim: int,
    output_dim: int,
    hidden_dims: Sequence[int] = (64,),
    seed: int = 0,
    output_scale: float = 0.0,
) -> ModelState:
    """He-uniform hidden weights from the seeded init stream, zero biases.

    The output layer scale is ``output_scale`` times the He bound; 0 starts
    every probability at 0.5.
    """
    stream = SplitMix64(derive_seed(seed, "init"))
    dims = [input_dim, *hidden_dims, output_dim]
    params = []
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = np.sqrt(6.0 / fan_in)
        if k == len(dims) - 2:
            bound *= output_scale
        w = (2.0 * stream.uniform(fan_in * fan_out) - 1.0) * bound
        params += [w.reshape(fan_in, fan_out), np.zeros(fan_out)]
    return ModelState.from_params(params)


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.clip(z, -LOGIT_LIMIT, LOGIT_LIMIT)
    return 1.0 / (1.0 + np.exp(-z))


def forward_batch(model: ModelState, x: np.ndarray, masks: Sequence[np.ndarray] | None = None):
    """Probabilities for a batch ``x`` of shape (b, in), plus activations for backprop.

    ``masks`` holds one array per hidden layer, already carrying the inverted
    dropout scale (entries 0 or 1/(1-p)).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected feature width {model.input_dim}, got {x.shape}")
    acts = [x]
    h = x
    n = model.n_layers
    for layer in range(n - 1):
        h = np.maximum(h @ model.params[2 * layer] + model.params[2 * layer + 1], 0.0)
        if masks is not None:
            h = h * masks[layer]
        acts.append(h)
    logits = h @ model.params[-2] + model.params[-1]
    return sigmoid(logits), acts


def forward(model: ModelState, features: np.ndarray, dropout_mask: Sequence[np.ndarray] | None = None) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise DimensionMismatch("forward takes a single feature vector")
    masks = None if dropout_mask is None else [np.asarray(m).reshape(1, -1) for m in dropout_mask]
    probs, _ = forward_batch(model, features.reshape(1, -1), masks)
    return probs[0]


def backward(model: ModelState, probs: np.ndarray, targets: np.ndarray, acts, masks=None) -> list[np.ndarray]:
    """Gradients of the batch-summed multi-label BCE, one array per parameter."""
    grads: list[np.ndarray] = [None] * len(model.params)  # type: ignore[list-item]
    delta = probs - targets
    for layer in range(model.n_layers - 1, -1, -1):
        a = acts[layer]
        grads[2 * layer] = a.T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer == 0:
            break
        delta = delta @ model.params[2 * layer].T
        if masks is not None:
            delta = delta * masks[layer - 1]
        delta = delta * (acts[layer] > 0)
    return grads


def bce_multilabel(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LengthMismatch(f"prediction length {pred.shape} != target length {target.shape}")
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.sum(target * np.log(p) + (1.0 - target) * np.log1p(-p)))


def loss_and_grad(model: ModelState, x: np.ndarray, targets: np.ndarray, masks=None):
    """Summed BCE over the batch and its gradient."""
    probs, acts = forward_batch(model, x, masks)
    targets = np.asarray(targets, dtype=np.float64).reshape(probs.shape)
    p = np.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    loss = float(-np.sum(targets * np.log(p) + (1.0 - targets) * np.log1p(-p)))
    return loss, backward(model, probs, targets, acts, masks)


def adam_update(
    model: ModelState,
    grads: Sequence[np.ndarray],
    lr: float,
    betas: tuple[float, float, float] = (0.9, 0.999, 1e-8),
) -> None:
    beta1, beta2, eps = betas
    model.step += 1
    t = model.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(model.params, grads, model.m, model.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def dropout_masks(stream: SplitMix64, batch: int, hidden_dims: Sequence[int], rate: float) -> list[np.ndarray] | None:
    if rate <= 0.0:
        return None
    scale = 1.0 / (1.0 - rate)
    return [
        np.where(stream.uniform(batch * h).reshape(batch, h) >= rate, scale, 0.0)
        for h in hidden_dims
    ]


def total_optimizer_steps(n_records: int, batch_size: int, grad_accum: int) -> int:
    n_batches = -(-n_records // batch_size)
    return -(-n_batches // grad_accum)


def default_schedule(n_records: int, config: TrainConfig, max_lr: float | None = None, end_lr: float | None = None) -> ScheduleConfig:
    """Default one-cycle schedule sized to one pass over ``n_records``.

    Warm-up is capped at ``total_steps - 1`` for datasets too small to
    finish the 600-iteration warm start.
    """
    total = total_optimizer_steps(n_records, config.batch_size, config.grad_accum)
    warm = min(warmup_steps_for(config.batch_size, config.grad_accum), total - 1)
    kw = {}
    if max_lr is not None:
        kw["max_lr"] = max_lr
    if end_lr is not None:
        kw["end_lr"] = end_lr
    return ScheduleConfig(warmup_steps=warm, total_steps=total, **kw)


StepHook = Callable[[int, float, list[int]], None]


def train_one_epoch(
    manifest: Manifest,
    features: np.ndarray,
    config: TrainConfig,
    schedule: ScheduleConfig | None = None,
    flipped_features: np.ndarray | None = None,
    on_step: StepHook | None = None,
) -> ModelState:
    """Visit every record once in plan order and return the trained model.

    ``on_step(step, lr, record_indices)`` fires after each optimizer step
    with the records that contributed to it.
    """
    n = len(manifest)
    if n == 0:
        raise EmptyManifest("cannot train on an empty manifest")
    features = np.asarray(features)
    rows = manifest.feature_rows()
    if rows.max() >= features.shape[0]:
        raise ValidationError(f"feature store has {features.shape[0]} rows, manifest needs {rows.max() + 1}")
    if flipped_features is not None and flipped_features.shape != features.shape:
        raise ValidationError("flipped feature store must match the normal store's shape")

    total = total_optimizer_steps(n, config.batch_size, config.grad_accum)
    if schedule is None:
        schedule = default_schedule(n, config)
    elif schedule.total_steps != total:
        raise ValidationError(f"schedule has {schedule.total_steps} steps, one epoch needs {total}")

    labels = manifest.label_matrix()
    model = init_model(features.shape[1], labels.shape[1], config.hidden_dims, config.seed)
    plan = build_plan(manifest, config.strategy, config.seed, config.flip_probability)
    drop_stream = SplitMix64(derive_seed(config.seed, "dropout"))

    all_batches = list(batches(plan, config.batch_size))
    for step in range(total):
        group = all_batches[step * config.grad_accum : (step + 1) * config.grad_accum]
        grad_sum = None
        seen: list[int] = []
        for batch in group:
            idx = np.array([i for i, _ in batch])
            flip = np.array([f for _, f in batch])
            x = features[rows[idx]].astype(np.float64)
            if flipped_features is not None and flip.any():
                x[flip] = flipped_features[rows[idx[flip]]]
            masks = dropout_masks(drop_stream, len(batch), config.hidden_dims, config.dropout)
            probs, acts = forward_batch(model, x, masks)
            g = backward(model, probs, labels[idx], acts, masks)
            grad_sum = g if grad_sum is None else [a + b for a, b in zip(grad_sum, g)]
            seen.extend(idx.tolist())
        grads = [g / len(seen) for g in grad_sum]
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise NonFiniteGradient(step)
        lr = lr_at(step, schedule)
        adam_update(model, grads, lr, config.adam)
        if on_step is not None:
            on_step(step, lr, seen)
    return model


def predict(
    model: ModelState,
    manifest: Manifest,
    features: np.ndarray,
    tta_flip: bool = False,
    flipped_features: np.ndarray | None = None,
    chunk: int = 4096,
) -> PredictionTable:
    if tta_flip and flipped_features is None:
        raise MissingFlippedFeatures("tta_flip requested without a flipped feature store")
    rows = manifest.feature_rows()
    out = np.empty((len(rows), model.output_dim))
    for start in range(0, len(rows), chunk):
        r = rows[start : start + chunk]
        p, _ = forward_batch(model, features[r].astype(np.float64))
        if tta_flip:
            q, _ = forward_batch(model, flipped_features[r].astype(np.float64))
            p = 0.5 * (p + q)
        out[start : start + chunk] = p
    return PredictionTable(
        tuple(r.sequence_id for r in manifest.records),
        tuple(r.image_id for r in manifest.records),
        out,
        manifest.vocabulary.names,
    )


# model files: magic | version | n_layers (uint32) | step (uint64) | shapes | float64 params

MODEL_MAGIC = 0x444D5443  # b"CTMD"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<3IQ")


def save_model(model: ModelState, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.n_layers, model.step))
        for fan_in, fan_out in model.layer_shapes:
            fh.write(struct.pack("<2I", fan_in, fan_out))
        for p in model.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path: str | Path) -> ModelState:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read model {path}: {e}") from e
    if len(raw) < _MODEL_HEADER.size:
        raise FormatError(f"{path}: truncated model header")
    magic, version, n_layers, step = _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    off = _MODEL_HEADER.size
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<2I", raw, off))
        off += 8
    params = []
    for fan_in, fan_out in shapes:
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            if off + 8 * count > len(raw):
                raise FormatError(f"{path}: truncated parameters")
            params.append(np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64))
            off += 8 * count
    if off != len(raw):
        raise FormatError(f"{path}: {len(raw) - off} trailing bytes")
    return ModelState.from_params(params, step)
