"""Parse ``<think>...</think><answer>...</answer>`` model output into a verdict."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from typing import Optional

from .corpus import Verdict

CORRECT_KEYWORDS = frozenset({"correct", "fix", "fixed"})
OVERFITTING_KEYWORDS = frozenset({"overfitting", "buggy", "incorrect", "wrong"})
KEYWORDS = CORRECT_KEYWORDS | OVERFITTING_KEYWORDS

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
# Word boundaries are maximal runs of letters, so "incorrect" never yields "correct".
_WORD_RE = re.compile(r"[A-Za-z]+")


@dataclass(frozen=True)
class ParsedResponse:
    think_text: Optional[str] = None
    answer_text: Optional[str] = None
    verdict: Optional[Verdict] = None
    has_think: bool = False
    has_answer: bool = False
    has_keyword: bool = False
    ambiguous: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value if self.verdict else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParsedResponse":
        d = dict(d)
        d["verdict"] = Verdict(d["verdict"]) if d.get("verdict") else None
        return cls(**d)


def answer_words(answer_text: str) -> set[str]:
    return {w.lower() for w in _WORD_RE.findall(answer_text)}


def classify_answer(answer_text: str) -> tuple[Optional[Verdict], bool]:
    """Map an answer to a verdict by keyword class.

    Returns ``(verdict, ambiguous)``. When keywords of both classes occur the
    answer is ambiguous and no verdict is returned; when none occur there is
    no verdict and it is not ambiguous.
    """
    words = answer_words(answer_text)
    says_correct = bool(words & CORRECT_KEYWORDS)
    says_overfitting = bool(words & OVERFITTING_KEYWORDS)
    if says_correct and says_overfitting:
        return None, True
    if says_correct:
        return Verdict.CORRECT, False
    if says_overfitting:
        return Verdict.OVERFITTING, False
    return None, False


def parse(raw: str) -> ParsedResponse:
    think = _THINK_RE.search(raw)
    answer = _ANSWER_RE.search(raw)
    if answer is None:
        return ParsedResponse(
            think_text=think.group(1) if think else None,
            has_think=think is not None,
        )
    answer_text = answer.group(1)
    verdict, ambiguous = classify_answer(answer_text)
    return ParsedResponse(
        think_text=think.group(1) if think else None,
        answer_text=answer_text,
        verdict=verdict,
        has_think=think is not None,
        has_answer=True,
        has_keyword=bool(answer_words(answer_text) & KEYWORDS),
        ambiguous=ambiguous,
    )


def is_wellformed(p: ParsedResponse) -> bool:
    return p.has_think and p.has_answer and p.verdict is not None
