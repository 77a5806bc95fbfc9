"""``camtrap`` command line: synth, sample-plan, schedule-dump, train, predict,
ensemble, evaluate, ablation.

Exit codes: 0 success, 2 input validation failure, 3 numerical failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import ablation, ensemble, manifest, metrics, sampler, schedule, synth, trainer
from .errors import CamtrapError, ValidationError

log = logging.getLogger("camtrap")


@dataclass
class PipelineRun:
    command: str
    config: dict
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    duration_s: float = 0.0


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# subcommands; each returns (input paths, output paths)


def cmd_synth(a):
    cfg = synth.SynthConfig(
        categories=a.categories,
        sequences=a.sequences,
        images=a.images,
        test_sequences=a.test_sequences,
        images_per_sequence=tuple(_ints(a.images_per_sequence)),
        empty_fraction=a.empty_fraction,
        seasons=a.seasons,
        feature_dim=a.feature_dim,
        separation=a.separation,
        cooccurrence=a.cooccurrence,
        imbalance=a.imbalance,
        seed=a.seed,
    )
    paths = synth.write_dataset(synth.generate(cfg), a.out)
    log.info("wrote synthetic dataset to %s", a.out)
    return [], list(paths.values())


def cmd_sample_plan(a):
    m = manifest.load_manifest(a.manifest, a.empty_name)
    strategy = sampler.SamplingStrategy(a.strategy, tuple(a.tail_seasons.split(",")) if a.tail_seasons else ())
    plan = sampler.build_plan(m, strategy, a.seed, a.flip_probability)
    sampler.write_plan(plan, a.out)
    log.info("plan over %d records, chunks %s", len(plan), list(plan.chunks) or "-")
    return [a.manifest], [a.out]


def cmd_schedule_dump(a):
    total = a.total_steps
    warm = a.warmup_steps
    if warm is None:
        warm = min(schedule.warmup_steps_for(a.batch_size, a.grad_accum), total - 1)
    cfg = schedule.ScheduleConfig(warm, total, a.max_lr, a.end_lr)
    schedule.write_schedule(cfg, a.out)
    log.info("warmup_steps=%d total_steps=%d", warm, total)
    return [], [a.out]


def _train_config(a) -> trainer.TrainConfig:
    overrides = {"seed": a.seed}
    if a.hidden is not None:
        overrides["hidden_dims"] = tuple(_ints(a.hidden))
    if a.flip_probability is not None:
        overrides["flip_probability"] = a.flip_probability
    if a.preset is not None:
        manual = [a.batch_size, a.grad_accum, a.strategy, a.dropout]
        if any(v is not None for v in manual):
            raise ValidationError("--preset cannot be combined with --batch-size/--grad-accum/--strategy/--dropout")
        return trainer.preset(a.preset, **overrides)
    if a.batch_size is None or a.grad_accum is None or a.strategy is None:
        raise ValidationError("give --preset or all of --batch-size, --grad-accum, --strategy")
    return trainer.TrainConfig(
        batch_size=a.batch_size,
        grad_accum=a.grad_accum,
        strategy=sampler.SamplingStrategy(a.strategy),
        dropout=a.dropout or 0.0,
        **overrides,
    )


def cmd_train(a):
    m = manifest.load_manifest(a.manifest, a.empty_name, a.features)
    feats = manifest.read_features(a.features)
    flipped = manifest.read_features(a.flipped_features) if a.flipped_features else None
    cfg = _train_config(a)
    sched = trainer.default_schedule(len(m), cfg, a.max_lr, a.end_lr)
    model = trainer.train_one_epoch(m, feats, cfg, sched, flipped)
    trainer.save_model(model, a.out)
    log.info("trained %d optimizer steps over %d images", model.step, len(m))
    inputs = [a.manifest, a.features] + ([a.flipped_features] if a.flipped_features else [])
    return inputs, [a.out]


def cmd_predict(a):
    m = manifest.load_manifest(a.manifest, a.empty_name, a.features)
    model = trainer.load_model(a.model)
    feats = manifest.read_features(a.features)
    flipped = manifest.read_features(a.flipped_features) if a.flipped_features else None
    table = trainer.predict(model, m, feats, a.tta_flip, flipped)
    if a.aggregate_sequences:
        table = ensemble.aggregate_sequence(table)
    ensemble.write_predictions(table, a.out)
    inputs = [a.model, a.manifest, a.features] + ([a.flipped_features] if a.flipped_features else [])
    return inputs, [a.out]


def cmd_ensemble(a):
    tables = [ensemble.read_predictions(p) for p in a.inputs]
    names = tables[0].names
    if a.empty_name not in names:
        raise ValidationError(f"no category named {a.empty_name!r}")
    empty = names.index(a.empty_name)
    if a.weights:
        out = ensemble.weighted_combine(tables, _floats(a.weights), a.kind, empty)
    else:
        out = ensemble.combine(tables, a.kind, empty)
    if a.aggregate_sequences:
        out = ensemble.aggregate_sequence(out)
    ensemble.write_predictions(out, a.out)
    return list(a.inputs), [a.out]


def cmd_evaluate(a):
    table = ensemble.read_predictions(a.pred)
    truths, vocab = metrics.read_truth(a.truth, a.empty_name)
    if table.names != vocab.names:
        raise ValidationError("prediction and truth category columns differ")
    report = metrics.evaluate(ensemble.aggregate_sequence(table), truths, vocab.empty_index, a.threshold)
    print(report.format())
    return [a.pred, a.truth], []


def cmd_ablation(a):
    m = manifest.load_manifest(a.manifest, a.empty_name, a.features)
    eval_m = manifest.load_manifest(a.eval_manifest, a.empty_name, a.features) if a.eval_manifest else None
    feats = manifest.read_features(a.features)
    flipped = manifest.read_features(a.flipped_features) if a.flipped_features else None
    seeds = _ints(a.seeds) if a.seeds else [a.seed]
    rows = ablation.run_ablation(m, feats, seeds, _ints(a.presets), eval_m, flipped, a.tta_flip)
    ablation.write_report(rows, a.out)
    if not a.quiet:
        for name, score in ablation.summarize(rows).items():
            print(f"{name:<24}{score:.6g}")
    inputs = [p for p in (a.manifest, a.eval_manifest, a.features, a.flipped_features) if p]
    return inputs, [a.out]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--empty-name", default="empty")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--run-log", help="write a JSON run snapshot to this path")

    p = argparse.ArgumentParser(prog="camtrap", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--categories", type=int, default=3)
    s.add_argument("--sequences", type=int, default=10_000)
    s.add_argument("--images", type=int, help="exact training image count (overrides --sequences)")
    s.add_argument("--test-sequences", type=int, default=2_000)
    s.add_argument("--images-per-sequence", default="1,2,3")
    s.add_argument("--empty-fraction", type=float, default=0.75)
    s.add_argument("--seasons", type=int, default=10)
    s.add_argument("--feature-dim", type=int, default=16)
    s.add_argument("--separation", type=float, default=12.0)
    s.add_argument("--cooccurrence", type=float, default=0.05)
    s.add_argument("--imbalance", type=float, default=1.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("sample-plan", parents=[common], help="dump the single-epoch visitation order")
    s.add_argument("--manifest", required=True)
    s.add_argument("--strategy", choices=["random", "season_by_season"], required=True)
    s.add_argument("--tail-seasons", default="9,10")
    s.add_argument("--flip-probability", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample_plan)

    s = sub.add_parser("schedule-dump", parents=[common], help="dump the learning rate per step")
    s.add_argument("--batch-size", type=int, required=True)
    s.add_argument("--grad-accum", type=int, required=True)
    s.add_argument("--total-steps", type=int, required=True)
    s.add_argument("--warmup-steps", type=int)
    s.add_argument("--max-lr", type=float, default=schedule.MAX_LR)
    s.add_argument("--end-lr", type=float, default=schedule.END_LR)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_schedule_dump)

    s = sub.add_parser("train", parents=[common], help="train one model for a single epoch")
    s.add_argument("--manifest", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--flipped-features")
    s.add_argument("--preset", type=int, choices=sorted(trainer.PRESETS))
    s.add_argument("--batch-size", type=int)
    s.add_argument("--grad-accum", type=int)
    s.add_argument("--strategy", choices=["random", "season_by_season"])
    s.add_argument("--dropout", type=float)
    s.add_argument("--hidden", help="comma-separated hidden widths; empty string for a linear model")
    s.add_argument("--flip-probability", type=float)
    s.add_argument("--max-lr", type=float)
    s.add_argument("--end-lr", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="per-image probabilities from a model file")
    s.add_argument("--model", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--flipped-features")
    s.add_argument("--tta-flip", action="store_true")
    s.add_argument("--aggregate-sequences", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("ensemble", parents=[common], help="combine prediction CSVs")
    s.add_argument("--in", dest="inputs", nargs="+", required=True)
    s.add_argument("--kind", choices=[k.value for k in ensemble.CombinerKind], default="mean")
    s.add_argument("--weights", help="comma-separated, non-negative, summing to 1")
    s.add_argument("--aggregate-sequences", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("evaluate", parents=[common], help="score predictions against sequence truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ablation", parents=[common], help="presets 1-4 singly and as ensembles")
    s.add_argument("--manifest", required=True)
    s.add_argument("--eval-manifest")
    s.add_argument("--features", required=True)
    s.add_argument("--flipped-features")
    s.add_argument("--tta-flip", action="store_true")
    s.add_argument("--seeds", help="comma-separated training seeds (default: --seed)")
    s.add_argument("--presets", default="1,2,3,4")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablation)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    start = time.perf_counter()
    try:
        inputs, outputs = args.func(args)
    except CamtrapError as e:
        log.error("%s", e)
        return e.exit_code
    except FloatingPointError as e:
        log.error("numerical failure: %s", e)
        return 3
    except OSError as e:
        log.error("I/O failure: %s", e)
        return 4
    if args.run_log:
        config = {k: v for k, v in vars(args).items() if k != "func"}
        run = PipelineRun(
            command=args.command,
            config=config,
            seed=args.seed,
            inputs={str(p): sha256(p) for p in inputs},
            outputs=[str(p) for p in outputs],
            duration_s=time.perf_counter() - start,
        )
        Path(args.run_log).write_text(json.dumps(asdict(run), indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
