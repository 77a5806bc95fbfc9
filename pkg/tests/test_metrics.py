import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camtrap.ensemble import PredictionTable, combine
from camtrap.errors import KeyMismatch, ValidationError, VocabularyMismatch
from camtrap.manifest import ImageRecord, LabelVocabulary, Manifest
from camtrap.metrics import (
    SequenceGroundTruth,
    accuracy,
    agg_log_loss,
    empty_accuracy,
    evaluate,
    read_truth,
    truths_from_manifest,
    write_truth,
)

NAMES = ("empty", "wildebeest", "zebra")


def seq_table(values, ids=None, names=NAMES):
    values = np.asarray(values, dtype=float)
    ids = ids or [f"s{i}" for i in range(len(values))]
    return PredictionTable(tuple(ids), None, values, names)


def truths(rows, ids=None):
    ids = ids or [f"s{i}" for i in range(len(rows))]
    return [SequenceGroundTruth(i, tuple(r)) for i, r in zip(ids, rows)]


def brute_force_loss(values, labels):
    total = 0.0
    for prow, trow in zip(values, labels):
        seq = 0.0
        for p, t in zip(prow, trow):
            p = min(max(p, 1e-15), 1 - 1e-15)
            seq += -math.log(p) if t else -math.log(1 - p)
        total += seq
    return total / len(values)


def test_worked_example():
    p, t = seq_table([[0.8, 0.1, 0.3]]), truths([[1, 0, 0]])
    assert agg_log_loss(p, t, normalize=False) == pytest.approx(0.6851790109107685, rel=1e-12)
    assert agg_log_loss(p, t) == pytest.approx(0.22839300363692283, rel=1e-12)


def test_perfect_predictions():
    p = seq_table([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    assert agg_log_loss(p, truths([[1, 0, 0], [0, 1, 1]]), normalize=False) <= 3 * 2e-15


@pytest.mark.parametrize("c", [2, 3, 5, 54])
@pytest.mark.parametrize("n", [1, 7, 47])
def test_all_half_is_ln2_per_category(c, n):
    names = ("empty",) + tuple(f"a{i}" for i in range(c - 1))
    p = seq_table(np.full((n, c), 0.5), names=names)
    t = truths([[1] + [0] * (c - 1)] * n)
    assert agg_log_loss(p, t) == math.log(2)
    assert agg_log_loss(p, t, normalize=False) == pytest.approx(c * math.log(2), rel=1e-15)


def test_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n, c = rng.integers(1, 20), rng.integers(2, 8)
        vals = rng.random((n, c))
        vals[rng.random((n, c)) < 0.05] = rng.choice([0.0, 1.0])
        labels = rng.integers(0, 2, (n, c))
        names = tuple(f"c{i}" for i in range(c))
        p = seq_table(vals, names=names)
        raw = agg_log_loss(p, truths(labels.tolist()), normalize=False)
        assert raw == pytest.approx(brute_force_loss(vals.tolist(), labels.tolist()), rel=1e-12)


def test_key_order_does_not_matter():
    p = seq_table([[0.9, 0.1, 0.1], [0.2, 0.7, 0.3]], ids=["a", "b"])
    t1 = truths([[1, 0, 0], [0, 1, 0]], ids=["a", "b"])
    t2 = list(reversed(t1))
    assert agg_log_loss(p, t1) == agg_log_loss(p, t2)


def test_key_and_vocab_mismatch():
    p = seq_table([[0.5, 0.5, 0.5]])
    with pytest.raises(KeyMismatch):
        agg_log_loss(p, truths([[1, 0, 0]], ids=["zzz"]))
    with pytest.raises(VocabularyMismatch):
        agg_log_loss(p, truths([[1, 0]]))
    with pytest.raises(ValidationError):
        agg_log_loss(PredictionTable(("a",), ("x",), np.full((1, 3), 0.5), NAMES), truths([[1, 0, 0]], ["a"]))


@given(st.integers(0, 2), st.floats(1e-9, 1.0))
@settings(max_examples=100)
def test_minimized_at_target(col, delta):
    # perturbations inside the 1e-15 clamp band are invisible by design
    t = truths([[0, 1, 1]])
    target = [0.0, 1.0, 1.0]
    best = agg_log_loss(seq_table([target]), t)
    moved = list(target)
    moved[col] = delta if target[col] == 0 else 1.0 - delta
    assert agg_log_loss(seq_table([moved]), t) > best


def test_mean_ensemble_beats_average_member():
    """Independent-noise members: the mean ensemble wins in >= 95 of 100 trials."""
    rng = np.random.default_rng(123)
    wins = 0
    for _ in range(100):
        labels = rng.integers(0, 2, (50, 3))
        labels[:, 0] = labels[:, 1:].max(axis=1) == 0
        logits = np.where(labels == 1, 2.0, -2.0)
        members = [seq_table(1 / (1 + np.exp(-(logits + rng.normal(0, 1.5, logits.shape))))) for _ in range(4)]
        t = truths(labels.tolist())
        single = np.mean([agg_log_loss(m, t) for m in members])
        wins += agg_log_loss(combine(members, "mean"), t) < single
    assert wins >= 95


def test_identical_members_do_not_change_the_loss():
    p = seq_table(np.random.default_rng(4).random((10, 3)))
    t = truths([[1, 0, 0]] * 10)
    assert agg_log_loss(combine([p, p, p], "mean"), t) <= agg_log_loss(p, t)


def test_accuracy_examples():
    t = truths([[0, 1, 0], [0, 1, 1], [1, 0, 0]])
    assert accuracy(seq_table([[0.1, 0.8, 0.1], [0.1, 0.3, 0.9], [0.9, 0.1, 0.2]]), t) == 1.0
    assert accuracy(seq_table([[0.1, 0.8, 0.1], [0.1, 0.3, 0.9], [0.1, 0.5, 0.2]]), t) == pytest.approx(2 / 3)


def test_accuracy_tie_goes_to_lowest_index():
    assert accuracy(seq_table([[0.5, 0.5, 0.1]]), truths([[1, 0, 0]])) == 1.0
    assert accuracy(seq_table([[0.5, 0.5, 0.1]]), truths([[0, 1, 0]])) == 0.0


def test_empty_accuracy():
    t = truths([[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    p = seq_table([[0.9, 0, 0], [0.5, 0, 0], [0.6, 0.9, 0], [0.1, 0, 0.9]])
    assert empty_accuracy(p, t, 0) == 0.75
    assert empty_accuracy(p, t, 0, threshold=0.55) == 0.5
    assert empty_accuracy(p, t, 0, threshold=0.7) == 0.75
    with pytest.raises(ValidationError):
        empty_accuracy(p, t, 0, threshold=1.0)


def test_report_format():
    p = seq_table([[0.8, 0.1, 0.3]])
    r = evaluate(p, truths([[1, 0, 0]]), 0)
    assert r.format().splitlines() == [
        "agg_log_loss_raw=0.685179",
        "agg_log_loss_normalized=0.228393",
        "accuracy=1",
        "empty_accuracy=1",
        "sequences=1",
    ]
    assert evaluate(p, truths([[1, 0, 0]]), 0) == r


def test_truth_from_manifest_and_roundtrip(tmp_path):
    vocab = LabelVocabulary(NAMES, 0)
    recs = (
        ImageRecord("1", "A", "a0", 0, (0, 1, 0)),
        ImageRecord("1", "A", "a1", 1, (0, 0, 1)),
        ImageRecord("1", "B", "b0", 2, (1, 0, 0)),
        ImageRecord("1", "C", "c0", 3, (1, 0, 0)),
        ImageRecord("1", "C", "c1", 4, (0, 1, 0)),
    )
    got = truths_from_manifest(Manifest(recs, vocab))
    assert [(t.sequence_id, t.labels) for t in got] == [("A", (0, 1, 1)), ("B", (1, 0, 0)), ("C", (0, 1, 0))]
    p = tmp_path / "truth.csv"
    write_truth(got, NAMES, p)
    back, v = read_truth(p)
    assert back == got and v == vocab


def test_truth_rejects_empty_conflict(tmp_path):
    p = tmp_path / "truth.csv"
    p.write_text("sequence_id,empty,zebra\nA,1,1\n")
    with pytest.raises(ValidationError):
        read_truth(p)
