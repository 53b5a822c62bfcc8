import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from patchjudge.assessors import ConstantAssessor, OracleAssessor, RecordsAssessor, ToyPolicyAssessor, patch_tokens
from patchjudge.corpus import PatchSample, Verdict, kfold_split, load_dataset
from patchjudge.evaluation import (
    ConfusionMatrix,
    EvaluationError,
    Prediction,
    auc,
    confusion,
    cross_dataset_run,
    crossval_run,
    derive_score,
    metrics,
    report_from_predictions,
)
from patchjudge.toy import toy_config

C, O = Verdict.CORRECT, Verdict.OVERFITTING


def mk(ids_labels, tag=""):
    return [PatchSample(i, f"a{i}", f"b{i}", lab, dataset_tag=tag) for i, lab in ids_labels]


def test_confusion_orientation():
    golds = [("a", O), ("b", O), ("c", O), ("d", C), ("e", C)]
    cm = confusion([(i, O) for i, _ in golds], golds)
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (3, 2, 0, 0)
    cm = confusion(golds[:4], golds[:4])
    assert cm.fp == cm.fn == 0
    assert confusion([], []) == ConfusionMatrix(0, 0, 0, 0)


def test_confusion_id_mismatch():
    with pytest.raises(EvaluationError, match="x"):
        confusion([("a", O), ("x", C)], [("a", O), ("y", C)])


def test_metrics_examples():
    m = metrics(ConfusionMatrix(1, 0, 0, 1))
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)
    m = metrics(ConfusionMatrix(tp=5, fp=3, fn=2, tn=10))
    assert m.accuracy == 0.75 and m.precision == 0.625
    assert m.recall == pytest.approx(0.714286, abs=1e-6) and m.f1 == pytest.approx(0.666667, abs=1e-6)
    m = metrics(ConfusionMatrix(0, 0, 4, 6))
    assert (m.precision, m.recall, m.f1, m.accuracy) == (0.0, 0.0, 0.0, 0.6)
    with pytest.raises(EvaluationError):
        metrics(ConfusionMatrix(0, 0, 0, 0))


def test_metrics_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        tp, fp, fn, tn = (int(x) for x in rng.integers(0, 6, size=4) * rng.integers(0, 2, size=4))
        if tp + fp + fn + tn == 0:
            tn = 1
        m = metrics(ConfusionMatrix(tp, fp, fn, tn))
        np.testing.assert_allclose((m.accuracy, m.precision, m.recall, m.f1), oracles.brute_metrics(tp, fp, fn, tn), rtol=0, atol=1e-12)


def test_auc_examples():
    golds = [("p1", O), ("p2", O), ("n1", C), ("n2", C)]
    assert auc([("p1", 0.9), ("p2", 0.4), ("n1", 0.6), ("n2", 0.1)], golds) == 0.75
    assert auc([("p1", 1), ("p2", 0.9), ("n1", 0.2), ("n2", 0.1)], golds) == 1.0
    assert auc([(i, 0.3) for i, _ in golds], golds) == 0.5
    with pytest.raises(EvaluationError):
        auc([("p1", 1.0)], [("p1", O)])


def test_auc_pairwise_oracle_with_ties():
    rng = np.random.default_rng(2)
    for trial in range(1000):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 5, size=n) / 4 if trial % 2 else rng.random(n)
        golds = [(str(i), O if labels[i] else C) for i in range(n)]
        sc = [(str(i), float(scores[i])) for i in range(n)]
        pos, neg = oracles.split_scores(sc, golds)
        assert abs(auc(sc, golds) - oracles.pairwise_auc(pos, neg)) <= 1e-12


@given(st.lists(st.tuples(st.floats(-5, 5), st.booleans()), min_size=2, max_size=30))
def test_auc_monotone_invariance(pairs):
    if len({b for _, b in pairs}) < 2:
        return
    golds = [(str(i), O if b else C) for i, (_, b) in enumerate(pairs)]
    sc = [(str(i), s) for i, (s, _) in enumerate(pairs)]
    transformed = [(i, float(np.tanh(s)) * 3 + 1) for i, s in sc]
    # tanh can merge distinct floats into ties; compare only when order is kept
    if len({s for _, s in sc}) == len({s for _, s in transformed}):
        assert auc(sc, golds) == pytest.approx(auc(transformed, golds), abs=1e-12)


def test_binary_auc_is_balanced_accuracy():
    rng = np.random.default_rng(3)
    golds = [(str(i), O if i % 3 else C) for i in range(60)]
    verdicts = [O if rng.random() < 0.6 else C for _ in golds]
    sc = [(i, derive_score(v, "binary")) for (i, _), v in zip(golds, verdicts)]
    cm = confusion([(i, v) for (i, _), v in zip(golds, verdicts)], golds)
    m = metrics(cm)
    spec = cm.tn / (cm.tn + cm.fp)
    assert auc(sc, golds) == pytest.approx((m.recall + spec) / 2, abs=1e-12)


def test_derive_score():
    assert derive_score(O, "binary") == 1.0 and derive_score(C, "binary") == 0.0 and derive_score(None, "binary") == 0.5
    assert derive_score([O, C, O], "vote-3") == pytest.approx(2 / 3)
    with pytest.raises(EvaluationError):
        derive_score(O, "vote")
    with pytest.raises(EvaluationError):
        derive_score([O], "vote-3")


def test_crossval_oracle_and_constant():
    ds = mk([(f"o{i}", O) for i in range(10)] + [(f"c{i}", C) for i in range(10)])
    folds = kfold_split([s.id for s in ds], 5, 0)
    r = crossval_run(ds, folds, OracleAssessor())
    assert all(f.accuracy == 1.0 for f in r.per_fold) and r.accuracy == 1.0 and len(r.per_fold) == 5
    r = crossval_run(ds, folds, ConstantAssessor(O))
    assert (r.accuracy, r.recall, r.precision) == (0.5, 1.0, 0.5)
    total = sum((f.confusion for f in r.per_fold), ConfusionMatrix(0, 0, 0, 0))
    assert total == r.confusion
    assert r.fold_mean["accuracy"] == pytest.approx(np.mean([f.accuracy for f in r.per_fold]))
    assert r.metadata["k"] == 5 and r.pooled


def test_crossval_requires_cover():
    ds = mk([("a", O), ("b", C), ("c", C)])
    with pytest.raises(EvaluationError):
        crossval_run(ds, kfold_split(["a", "b"], 2, 0), OracleAssessor())


class Exploding:
    trainable = False

    def predict(self, samples, score_mode):
        if any(s.id == "c1" for s in samples):
            raise RuntimeError("kaboom")
        return OracleAssessor().predict(samples, score_mode)


def test_crossval_failure_names_fold():
    ds = mk([(f"o{i}", O) for i in range(5)] + [(f"c{i}", C) for i in range(5)])
    folds = kfold_split([s.id for s in ds], 5, 0)
    with pytest.raises(EvaluationError, match=f"fold {folds.folds['c1']}"):
        crossval_run(ds, folds, Exploding())


def test_cross_dataset():
    train = mk([("t1", O), ("t2", C)], tag="small")
    test = mk([(f"x{i}", O if i < 6 else C) for i in range(10)], tag="large")
    r = cross_dataset_run(train, test, ConstantAssessor(C))
    assert r.accuracy == pytest.approx(0.4) and r.recall == 0.0
    assert cross_dataset_run(train, test, OracleAssessor()).accuracy == 1.0
    d = json.loads(r.to_json())
    for key in ("accuracy", "precision", "recall", "f1", "auc", "unresolved_count", "unresolved_policy", "confusion"):
        assert key in d
    with pytest.raises(EvaluationError, match="share"):
        cross_dataset_run(train, mk([("t1", O), ("z", C)], tag="large"), OracleAssessor())
    with pytest.raises(EvaluationError, match="tags"):
        cross_dataset_run(train, mk([("z", O)], tag="small"), OracleAssessor())


def test_unresolved_policies():
    ds = mk([("a", O), ("b", C), ("c", C)])
    preds = [Prediction("a", O, 1.0), Prediction("b", None, 0.5), Prediction("c", C, 0.0)]
    r = report_from_predictions(preds, ds)
    assert r.unresolved_count == 1 and r.confusion == ConfusionMatrix(tp=1, fp=1, fn=0, tn=1)
    r = report_from_predictions(preds, ds, "exclude")
    assert r.unresolved_count == 1 and r.confusion == ConfusionMatrix(tp=1, fp=0, fn=0, tn=1)
    assert r.unresolved_policy == "exclude"
    with pytest.raises(EvaluationError):
        report_from_predictions(preds, ds, "guess")


def test_records_assessor_missing_record():
    with pytest.raises(EvaluationError):
        RecordsAssessor([]).predict(mk([("a", O)]), "binary")


def test_patch_tokens_deterministic(fixtures_dir):
    fillers = [f"w{i}" for i in range(16)]
    for s in load_dataset(fixtures_dir / "example_patches.jsonl"):
        toks = patch_tokens(s, fillers)
        assert toks == patch_tokens(s, fillers) and 1 <= len(toks) <= 6 and set(toks) <= set(fillers)


def test_toy_assessor_crossval(fixtures_dir):
    ds = load_dataset(fixtures_dir / "ten.jsonl")
    folds = kfold_split([s.id for s in ds], 2, 0)
    assessor = ToyPolicyAssessor(cfg=toy_config(epochs=1, batch_size=4))
    r = crossval_run(ds, folds, assessor, score_mode="vote-3")
    assert len(r.per_fold) == 2 and r.confusion.total == 10
    assert r.score_mode == "vote-3"
