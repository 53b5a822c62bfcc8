"""Confusion-matrix metrics, rank AUC and the two evaluation protocols.

Overfitting is the positive class. Ratios whose denominator is zero are
reported as 0.0 so degenerate predictors (e.g. one that never says
overfitting) still produce a report.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from .corpus import FoldAssignment, PatchSample, Verdict

UNRESOLVED_POLICIES = ("predict-overfitting", "exclude")
_VOTE_RE = re.compile(r"^vote-(\d+)$")


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise EvaluationError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def _pairs_to_map(pairs: Iterable[tuple[str, object]], what: str) -> dict:
    out = {}
    for i, v in pairs:
        if i in out:
            raise EvaluationError(f"duplicate id {i!r} in {what}")
        out[i] = v
    return out


def _check_same_ids(a: dict, b: dict) -> None:
    if a.keys() != b.keys():
        diff = sorted(set(a) ^ set(b))
        raise EvaluationError(f"id sets differ; symmetric difference: {diff[:20]}")


def confusion(
    predictions: Iterable[tuple[str, Verdict]],
    golds: Iterable[tuple[str, Verdict]],
) -> ConfusionMatrix:
    pred = _pairs_to_map(predictions, "predictions")
    gold = _pairs_to_map(golds, "golds")
    _check_same_ids(pred, gold)
    tp = fp = fn = tn = 0
    for i, g in gold.items():
        p = pred[i]
        if p is Verdict.OVERFITTING:
            if g is Verdict.OVERFITTING:
                tp += 1
            else:
                fp += 1
        elif g is Verdict.OVERFITTING:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(cm: ConfusionMatrix) -> Metrics:
    if cm.total == 0:
        raise EvaluationError("metrics are undefined for an empty confusion matrix")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    return Metrics(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=precision,
        recall=recall,
        f1=_ratio(2 * precision * recall, precision + recall),
    )


def auc(scores: Iterable[tuple[str, float]], golds: Iterable[tuple[str, Verdict]]) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), via midranks (Mann-Whitney U)."""
    s = _pairs_to_map(scores, "scores")
    g = _pairs_to_map(golds, "golds")
    _check_same_ids(s, g)
    ids = list(g)
    values = np.array([float(s[i]) for i in ids])
    positive = np.array([g[i] is Verdict.OVERFITTING for i in ids])
    n_pos = int(positive.sum())
    n_neg = len(ids) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs at least one overfitting and one correct sample")
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    # 1-based midrank of each distinct value
    midranks = np.cumsum(counts) - (counts - 1) / 2.0
    ranks = midranks[inverse]
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class Prediction:
    """One assessor output: verdict (None when unresolved) and a score in [0, 1]."""

    id: str
    verdict: Optional[Verdict]
    score: float


def parse_score_mode(mode: str) -> Optional[int]:
    """``binary`` -> None, ``vote-k`` -> k."""
    if mode == "binary":
        return None
    m = _VOTE_RE.match(mode or "")
    if not m or int(m.group(1)) < 1:
        raise EvaluationError(f"score mode must be 'binary' or 'vote-k', got {mode!r}")
    return int(m.group(1))


def derive_score(source, mode: str = "binary") -> float:
    """Score in [0, 1] (higher means more likely overfitting).

    ``source`` is an assessment record (anything with ``verdict`` and
    ``votes``), a single verdict, or a sequence of verdicts from independent
    samples. ``binary`` maps Overfitting/Correct/unresolved to 1/0/0.5;
    ``vote-k`` is the share of the first k votes that say Overfitting.
    """
    k = parse_score_mode(mode)
    if k is None:
        if isinstance(source, (list, tuple)):
            raise EvaluationError("binary mode takes a single verdict or record")
        verdict = getattr(source, "verdict", source)
        if verdict is Verdict.OVERFITTING:
            return 1.0
        if verdict is Verdict.CORRECT:
            return 0.0
        return 0.5
    votes = source if isinstance(source, (list, tuple)) else getattr(source, "votes", None)
    if votes is None or len(votes) < k:
        raise EvaluationError(f"{mode} needs {k} votes, got {0 if votes is None else len(votes)}")
    return sum(v is Verdict.OVERFITTING for v in votes[:k]) / k


class Assessor(Protocol):
    trainable: bool

    def predict(self, samples: Sequence[PatchSample], score_mode: str) -> list[Prediction]: ...


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: Optional[float]
    per_fold: Optional[list["EvalReport"]] = None
    pooled: bool = False
    fold_mean: Optional[dict] = None
    unresolved_count: int = 0
    unresolved_policy: str = "predict-overfitting"
    score_mode: str = "binary"
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "confusion": self.confusion.to_dict(),
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "pooled": self.pooled,
            "unresolved_count": self.unresolved_count,
            "unresolved_policy": self.unresolved_policy,
            "score_mode": self.score_mode,
        }
        if self.per_fold is not None:
            d["per_fold"] = [f.to_dict() for f in self.per_fold]
            d["fold_mean"] = self.fold_mean
        if self.metadata:
            d["metadata"] = self.metadata
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def report_from_predictions(
    predictions: Sequence[Prediction],
    samples: Sequence[PatchSample],
    unresolved_policy: str = "predict-overfitting",
    score_mode: str = "binary",
) -> EvalReport:
    """Score predictions against gold labels under the given unresolved policy."""
    if unresolved_policy not in UNRESOLVED_POLICIES:
        raise EvaluationError(f"unresolved policy must be one of {UNRESOLVED_POLICIES}")
    by_id = _pairs_to_map(((p.id, p) for p in predictions), "predictions")
    gold = _pairs_to_map(((s.id, s.label) for s in samples), "golds")
    _check_same_ids(by_id, gold)
    unresolved = [i for i, p in by_id.items() if p.verdict is None]
    if unresolved_policy == "exclude":
        keep = [i for i in gold if by_id[i].verdict is not None]
        pred_pairs = [(i, by_id[i].verdict) for i in keep]
    else:
        keep = list(gold)
        pred_pairs = [(i, by_id[i].verdict or Verdict.OVERFITTING) for i in keep]
    gold_pairs = [(i, gold[i]) for i in keep]
    cm = confusion(pred_pairs, gold_pairs)
    m = metrics(cm) if cm.total else Metrics(0.0, 0.0, 0.0, 0.0)
    try:
        area = auc([(i, by_id[i].score) for i in keep], gold_pairs)
    except EvaluationError:
        area = None
    return EvalReport(
        confusion=cm,
        accuracy=m.accuracy,
        precision=m.precision,
        recall=m.recall,
        f1=m.f1,
        auc=area,
        unresolved_count=len(unresolved),
        unresolved_policy=unresolved_policy,
        score_mode=score_mode,
    )


def _fold_mean(reports: Sequence[EvalReport]) -> dict:
    out = {}
    for name in ("accuracy", "precision", "recall", "f1", "auc"):
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[name] = float(np.mean(vals)) if vals else None
    return out


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _metadata(protocol: str, samples: Iterable[PatchSample], extra: Optional[dict]) -> dict:
    meta = {
        "protocol": protocol,
        "dataset_tags": sorted({s.dataset_tag for s in samples if s.dataset_tag}),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        meta.update(extra)
    return meta


def crossval_run(
    dataset: Sequence[PatchSample],
    folds: FoldAssignment,
    assessor: Assessor,
    score_mode: str = "binary",
    unresolved_policy: str = "predict-overfitting",
    metadata: Optional[dict] = None,
) -> EvalReport:
    """k-fold evaluation. Trainable assessors are refit on the other k-1 folds.

    The returned report holds pooled metrics over all predictions, with
    ``per_fold`` reports and their unweighted ``fold_mean``.
    """
    parse_score_mode(score_mode)
    ids = {s.id for s in dataset}
    if ids != set(folds.folds):
        raise EvaluationError(f"fold assignment does not cover the dataset: {sorted(ids ^ set(folds.folds))[:20]}")
    per_fold, pooled_preds = [], []
    for f in range(folds.k):
        test = [s for s in dataset if folds.folds[s.id] == f]
        train = [s for s in dataset if folds.folds[s.id] != f]
        try:
            if getattr(assessor, "trainable", False):
                assessor.fit(train)
            preds = assessor.predict(test, score_mode)
            per_fold.append(report_from_predictions(preds, test, unresolved_policy, score_mode))
        except Exception as exc:
            raise EvaluationError(f"fold {f}: {exc}") from exc
        pooled_preds.extend(preds)
    report = report_from_predictions(pooled_preds, dataset, unresolved_policy, score_mode)
    report.pooled = True
    report.per_fold = per_fold
    report.fold_mean = _fold_mean(per_fold)
    report.metadata = _metadata("crossval", dataset, {"k": folds.k, "seed": folds.seed, **(metadata or {})})
    return report


def cross_dataset_run(
    train_set: Sequence[PatchSample],
    test_set: Sequence[PatchSample],
    assessor: Assessor,
    score_mode: str = "binary",
    unresolved_policy: str = "predict-overfitting",
    metadata: Optional[dict] = None,
) -> EvalReport:
    """Fit on ``train_set`` only (when trainable), report on ``test_set``."""
    parse_score_mode(score_mode)
    overlap = sorted({s.id for s in train_set} & {s.id for s in test_set})
    if overlap:
        raise EvaluationError(f"train and test sets share {len(overlap)} ids, e.g. {overlap[:10]}")
    shared_tags = {s.dataset_tag for s in train_set if s.dataset_tag} & {s.dataset_tag for s in test_set if s.dataset_tag}
    if shared_tags:
        raise EvaluationError(f"train and test sets share dataset tags {sorted(shared_tags)}")
    if getattr(assessor, "trainable", False):
        assessor.fit(list(train_set))
    preds = assessor.predict(list(test_set), score_mode)
    report = report_from_predictions(preds, test_set, unresolved_policy, score_mode)
    report.metadata = _metadata(
        "cross-dataset",
        test_set,
        {
            "train_tags": sorted({s.dataset_tag for s in train_set if s.dataset_tag}),
            "train_size": len(train_set),
            "test_size": len(test_set),
            **(metadata or {}),
        },
    )
    return report
