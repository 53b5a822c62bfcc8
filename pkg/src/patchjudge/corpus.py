"""Labeled patch datasets: loading, deduplication and fold assignment.

Dataset files are JSON Lines. Each line holds one object::

    {"id": "...", "buggy": "...", "fixed": "...", "label": "correct" | "overfitting",
     "origin": "...", "dataset_tag": "..."}

``origin`` and ``dataset_tag`` are optional.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class DatasetError(ValueError):
    """A dataset file or record is invalid."""


class Verdict(str, enum.Enum):
    """Patch class. Overfitting is the positive class."""

    CORRECT = "correct"
    OVERFITTING = "overfitting"

    @property
    def is_positive(self) -> bool:
        return self is Verdict.OVERFITTING


@dataclass(frozen=True)
class PatchSample:
    id: str
    buggy_code: str
    fixed_code: str
    label: Verdict
    origin: str = ""
    dataset_tag: str = ""

    def __post_init__(self):
        if not self.buggy_code:
            raise DatasetError(f"sample {self.id!r}: buggy_code is empty")
        if not self.fixed_code:
            raise DatasetError(f"sample {self.id!r}: fixed_code is empty")
        if not isinstance(self.label, Verdict):
            raise DatasetError(f"sample {self.id!r}: label must be a Verdict")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "buggy": self.buggy_code,
            "fixed": self.fixed_code,
            "label": self.label.value,
            "origin": self.origin,
            "dataset_tag": self.dataset_tag,
        }


@dataclass(frozen=True)
class DatasetStats:
    correct: int
    overfitting: int
    total: int

    def __iter__(self):
        return iter((self.correct, self.overfitting, self.total))


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    seed: int
    folds: Mapping[str, int]

    def fold_ids(self, fold: int) -> list[str]:
        return [i for i, f in self.folds.items() if f == fold]

    def sizes(self) -> list[int]:
        counts = Counter(self.folds.values())
        return [counts.get(f, 0) for f in range(self.k)]

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "seed": self.seed, "folds": dict(self.folds)}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FoldAssignment":
        obj = json.loads(text)
        try:
            k, seed, folds = int(obj["k"]), int(obj["seed"]), obj["folds"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"invalid fold file: {exc}") from None
        bad = {i: f for i, f in folds.items() if not (isinstance(f, int) and 0 <= f < k)}
        if bad:
            raise DatasetError(f"fold indices out of range [0, {k}): {sorted(bad)[:5]}")
        return cls(k=k, seed=seed, folds={str(i): int(f) for i, f in folds.items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FoldAssignment":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def parse_label(value) -> Verdict:
    if value == "correct":
        return Verdict.CORRECT
    if value == "overfitting":
        return Verdict.OVERFITTING
    raise DatasetError(f"label must be 'correct' or 'overfitting', got {value!r}")


def _record_to_sample(obj, lineno: int) -> PatchSample:
    if not isinstance(obj, dict):
        raise DatasetError(f"line {lineno}: expected a JSON object")
    for key in ("id", "buggy", "fixed", "label"):
        if key not in obj:
            raise DatasetError(f"line {lineno}: missing field {key!r}")
    for key in ("id", "buggy", "fixed"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise DatasetError(f"line {lineno}: field {key!r} must be a non-empty string")
    for key in ("origin", "dataset_tag"):
        if key in obj and not isinstance(obj[key], str):
            raise DatasetError(f"line {lineno}: field {key!r} must be a string")
    try:
        label = parse_label(obj["label"])
    except DatasetError as exc:
        raise DatasetError(f"line {lineno}: invalid field 'label': {exc}") from None
    return PatchSample(
        id=obj["id"],
        buggy_code=obj["buggy"],
        fixed_code=obj["fixed"],
        label=label,
        origin=obj.get("origin", ""),
        dataset_tag=obj.get("dataset_tag", ""),
    )


def load_dataset(path: str | Path) -> list[PatchSample]:
    """Read a JSON Lines dataset, preserving file order.

    Blank lines are skipped. Raises DatasetError naming the offending line
    for malformed records and for repeated ids.
    """
    samples: list[PatchSample] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            sample = _record_to_sample(obj, lineno)
            if sample.id in seen:
                raise DatasetError(
                    f"line {lineno}: duplicate id {sample.id!r} (first seen on line {seen[sample.id]})"
                )
            seen[sample.id] = lineno
            samples.append(sample)
    return samples


def save_dataset(samples: Iterable[PatchSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def normalize_code(code: str) -> str:
    """LF line endings, trailing whitespace stripped from every line."""
    code = code.replace("\r\n", "\n").replace("\r", "\n")
    return "\n".join(line.rstrip() for line in code.split("\n"))


def deduplicate(samples: Sequence[PatchSample]) -> list[PatchSample]:
    """Drop samples whose normalized (buggy, fixed) pair was already seen."""
    seen = set()
    kept = []
    for s in samples:
        key = (normalize_code(s.buggy_code), normalize_code(s.fixed_code))
        if key in seen:
            continue
        seen.add(key)
        kept.append(s)
    return kept


def dataset_stats(samples: Iterable[PatchSample]) -> DatasetStats:
    counts = Counter(s.label for s in samples)
    c, o = counts.get(Verdict.CORRECT, 0), counts.get(Verdict.OVERFITTING, 0)
    return DatasetStats(correct=c, overfitting=o, total=c + o)


def kfold_split(
    ids: Sequence[str],
    k: int = 5,
    seed: int = 0,
    labels: Sequence[Verdict] | None = None,
) -> FoldAssignment:
    """Assign ids to ``k`` folds.

    The ids are shuffled with ``numpy.random.default_rng(seed)`` (PCG64,
    ``Generator.permutation``) and dealt round-robin, so fold sizes differ
    by at most one. With ``labels`` the deal is stratified: each class is
    shuffled separately and the classes are dealt one after the other,
    continuing the same round-robin counter.
    """
    ids = list(ids)
    if k < 2:
        raise DatasetError(f"k must be >= 2, got {k}")
    if len(ids) < k:
        raise DatasetError(f"need at least k={k} ids, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise DatasetError("ids must be distinct")
    rng = np.random.default_rng(seed)

    if labels is None:
        order = [ids[i] for i in rng.permutation(len(ids))]
    else:
        labels = list(labels)
        if len(labels) != len(ids):
            raise DatasetError("labels must align with ids")
        order = []
        for verdict in (Verdict.CORRECT, Verdict.OVERFITTING):
            group = [i for i, lab in zip(ids, labels) if lab is verdict]
            order.extend(group[j] for j in rng.permutation(len(group)))

    folds = {sample_id: pos % k for pos, sample_id in enumerate(order)}
    return FoldAssignment(k=k, seed=seed, folds=folds)
