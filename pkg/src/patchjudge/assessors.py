"""Assessors pluggable into the cross-validation and cross-dataset runs."""

from __future__ import annotations

import difflib
import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .client import AssessmentRecord
from .corpus import PatchSample, Verdict
from .evaluation import EvaluationError, Prediction, derive_score, parse_score_mode
from .grpo import GrpoConfig, train_loop
from .parsing import parse
from .toy import EpisodeSpec, ToyPolicy, default_vocabulary, detokenize, episode_reward, toy_config


@dataclass
class OracleAssessor:
    """Returns the gold label; useful as a sanity baseline."""

    trainable: bool = False

    def predict(self, samples: Sequence[PatchSample], score_mode: str = "binary") -> list[Prediction]:
        k = parse_score_mode(score_mode)
        return [
            Prediction(s.id, s.label, derive_score(s.label if k is None else [s.label] * k, score_mode)) for s in samples
        ]


@dataclass
class ConstantAssessor:
    verdict: Verdict = Verdict.OVERFITTING
    trainable: bool = False

    def predict(self, samples: Sequence[PatchSample], score_mode: str = "binary") -> list[Prediction]:
        k = parse_score_mode(score_mode)
        score = derive_score(self.verdict if k is None else [self.verdict] * k, score_mode)
        return [Prediction(s.id, self.verdict, score) for s in samples]


@dataclass
class RecordsAssessor:
    """Replays stored endpoint assessments."""

    records: Sequence[AssessmentRecord]
    trainable: bool = False

    def predict(self, samples: Sequence[PatchSample], score_mode: str = "binary") -> list[Prediction]:
        by_id = {r.sample_id: r for r in self.records}
        missing = [s.id for s in samples if s.id not in by_id]
        if missing:
            raise EvaluationError(f"no assessment record for {len(missing)} samples, e.g. {missing[:10]}")
        return [Prediction(s.id, by_id[s.id].verdict, derive_score(by_id[s.id], score_mode)) for s in samples]


def patch_tokens(sample: PatchSample, fillers: Sequence[str], length: int = 6) -> list[str]:
    """Hash each changed line of the patch onto a filler token.

    A crude, deterministic stand-in for tokenizing code: the toy policy
    only sees which hashed lines changed, never the code itself.
    """
    diff = difflib.unified_diff(sample.buggy_code.splitlines(), sample.fixed_code.splitlines(), lineterm="", n=0)
    changed = [ln[1:].strip() for ln in diff if ln[:1] in "+-" and not ln.startswith(("+++", "---"))]
    toks = [fillers[int(hashlib.sha256(ln.encode()).hexdigest(), 16) % len(fillers)] for ln in changed if ln]
    return toks[:length] or [fillers[0]]


@dataclass
class ToyPolicyAssessor:
    """A toy policy trained with GRPO on hashed patch tokens.

    This wires the real training loop into the evaluation protocols. With
    no hint token in the prompt the policy can only learn shallow
    regularities, so its scores say nothing about real assessment quality.
    """

    cfg: GrpoConfig = field(default_factory=lambda: toy_config(epochs=2, batch_size=8))
    seed: int = 0
    trainable: bool = True
    policy: Optional[ToyPolicy] = None

    def __post_init__(self):
        self.vocab = self.policy.vocab if self.policy is not None else default_vocabulary()
        self._fillers = [t for t in self.vocab.tokens if t.startswith("w") and t[1:].isdigit()]

    def _episode(self, s: PatchSample) -> EpisodeSpec:
        return EpisodeSpec(tuple(self.vocab.ids(patch_tokens(s, self._fillers))), s.label, id=s.id)

    def fit(self, samples: Sequence[PatchSample]) -> None:
        self.policy = ToyPolicy.initialize(self.seed, self.vocab)
        episodes = [self._episode(s) for s in samples]
        self.policy, _ = train_loop(self.policy, episodes, episode_reward(self.vocab), self.cfg)

    def predict(self, samples: Sequence[PatchSample], score_mode: str = "binary") -> list[Prediction]:
        if self.policy is None:
            raise EvaluationError("ToyPolicyAssessor.predict called before fit")
        k = parse_score_mode(score_mode)
        rng = np.random.default_rng(self.seed)
        prompts = [list(self._episode(s).prompt_tokens) for s in samples]
        draws = []
        for _ in range(k or 1):
            comps = self.policy.sample(prompts, self.cfg.temperature, self.cfg.max_completion_tokens, rng)
            draws.append([parse(detokenize(self.vocab, c)) for c in comps])
        out = []
        for i, s in enumerate(samples):
            votes = [d[i].verdict if d[i].has_think and d[i].has_answer else None for d in draws]
            out.append(Prediction(s.id, votes[0], derive_score(votes[0] if k is None else votes, score_mode)))
        return out
