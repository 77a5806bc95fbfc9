"""Single-epoch multi-label camera-trap classification at desk scale."""

from .ensemble import CombinerKind, PredictionTable, aggregate_sequence, combine, weighted_combine
from .manifest import ImageRecord, LabelVocabulary, Manifest, group_by_sequence, load_manifest
from .metrics import MetricReport, SequenceGroundTruth, accuracy, agg_log_loss, empty_accuracy, evaluate
from .sampler import SamplePlan, SamplingStrategy, batches, build_plan
from .schedule import ScheduleConfig, lr_at, warmup_steps_for
from .trainer import ModelState, TrainConfig, bce_multilabel, forward, predict, train_one_epoch

__version__ = "0.1.0"
