"""Format and accuracy rewards for parsed responses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .corpus import Verdict
from .parsing import ParsedResponse, parse

THINK_POINTS = 0.5
ANSWER_POINTS = 0.25
KEYWORD_POINTS = 0.25

# Matching an overfitting patch pays double: it is the harder class.
ACCURACY_POINTS = {Verdict.CORRECT: 1.0, Verdict.OVERFITTING: 2.0}

MAX_TOTAL_REWARD = THINK_POINTS + ANSWER_POINTS + KEYWORD_POINTS + max(ACCURACY_POINTS.values())


@dataclass(frozen=True)
class RewardBreakdown:
    format_reward: float
    accuracy_reward: float

    @property
    def total(self) -> float:
        return self.format_reward + self.accuracy_reward

    def to_dict(self) -> dict:
        return {"format_reward": self.format_reward, "accuracy_reward": self.accuracy_reward, "total": self.total}


def format_reward(p: ParsedResponse) -> float:
    # The keyword must sit inside an answer block to count.
    reward = 0.0
    if p.has_think:
        reward += THINK_POINTS
    if p.has_answer:
        reward += ANSWER_POINTS
        if p.has_keyword:
            reward += KEYWORD_POINTS
    return reward


def accuracy_reward(predicted: Optional[Verdict], gold: Verdict) -> float:
    if predicted is None or predicted != gold:
        return 0.0
    return ACCURACY_POINTS[gold]


def total_reward(p: ParsedResponse, gold: Verdict) -> RewardBreakdown:
    return RewardBreakdown(format_reward(p), accuracy_reward(p.verdict, gold))


def score_text(raw: str, gold: Verdict) -> RewardBreakdown:
    """Parse raw model output and score it against ``gold``."""
    return total_reward(parse(raw), gold)


def expected_max_reward(overfitting_fraction: float) -> float:
    """Best achievable mean total reward on a set with the given positive share."""
    fmt = THINK_POINTS + ANSWER_POINTS + KEYWORD_POINTS
    return fmt + (1 - overfitting_fraction) * ACCURACY_POINTS[Verdict.CORRECT] + (
        overfitting_fraction * ACCURACY_POINTS[Verdict.OVERFITTING]
    )
