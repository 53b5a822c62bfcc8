"""Group Relative Policy Optimization for a differentiable sequence policy.

For every prompt the trainer samples a group of completions, scores them,
standardizes the rewards inside the group to get advantages, and takes a
gradient step on the clipped surrogate with a per-token KL penalty against
a frozen reference copy of the starting policy.

A policy is any object with::

    sample(prompts, temperature, max_len, rng) -> list of token lists
    forward(prompts, completions, temperature) -> (per-token logprobs, tape)
    backward(tape, grad_per_token) -> {name: gradient array}
    parameters() -> {name: array}   # updated in place
    clone() -> policy
    state_dict() -> JSON-able dict

Log-probabilities for the ratio and KL terms are taken at temperature 1
unless ``tempered_logprobs`` is set, in which case they use the sampling
temperature so that old, new and reference policies match the distribution
the completions were actually drawn from.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "patchjudge-checkpoint"
CHECKPOINT_VERSION = 1


class GrpoError(RuntimeError):
    pass


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_epsilon: float = 0.2
    kl_beta: float = 0.04
    learning_rate: float = 5e-5
    temperature: float = 0.6
    max_completion_tokens: int = 2048
    epochs: int = 20
    batch_size: int = 8
    grad_accum_steps: int = 2
    seed: int = 0
    optimizer: str = "sgd"  # sgd | momentum | adam
    momentum: float = 0.9
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    inner_epochs: int = 1
    length_normalize: bool = True
    tempered_logprobs: bool = False

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be > 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.kl_beta < 0 or self.learning_rate <= 0:
            raise ValueError("kl_beta must be >= 0 and learning_rate > 0")
        for name in ("max_completion_tokens", "batch_size", "grad_accum_steps", "inner_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GrpoConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown GRPO options: {sorted(unknown)}")
        d = dict(d)
        if "adam_betas" in d:
            d["adam_betas"] = tuple(d["adam_betas"])
        return cls(**d)


@dataclass
class CandidateGroup:
    prompt_id: str
    prompt_tokens: Sequence[int]
    completions: list[list[int]]
    rewards: np.ndarray
    old_logprobs: list[np.ndarray]
    ref_logprobs: list[np.ndarray]
    advantages: np.ndarray
    format_rewards: Optional[np.ndarray] = None

    def validate(self) -> None:
        g = len(self.completions)
        for name in ("rewards", "old_logprobs", "ref_logprobs", "advantages"):
            if len(getattr(self, name)) != g:
                raise GrpoError(f"group {self.prompt_id}: {name} has {len(getattr(self, name))} entries, expected {g}")
        for i, c in enumerate(self.completions):
            if len(self.old_logprobs[i]) != len(c) or len(self.ref_logprobs[i]) != len(c):
                raise GrpoError(f"group {self.prompt_id}: logprobs of completion {i} do not match its length")


def compute_advantages(rewards: Sequence[float]) -> np.ndarray:
    """Standardize rewards within a group (population std); flat groups get zeros."""
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise GrpoError("a group needs at least two rewards")
    centered = r - r.mean()
    std = np.sqrt(np.mean(centered**2))
    # Relative threshold: floating noise in a constant group must not be amplified.
    if std <= 1e-12 * max(1.0, float(np.abs(r).max())):
        return np.zeros_like(r)
    return centered / std


def kl_penalty_per_token(cur_logprob, ref_logprob):
    """Unbiased, nonnegative KL estimator exp(d) - d - 1 with d = ref - cur."""
    d = np.asarray(ref_logprob, dtype=float) - np.asarray(cur_logprob, dtype=float)
    out = np.expm1(d) - d
    return float(out) if out.ndim == 0 else out


def grpo_loss_and_grad(
    group: CandidateGroup,
    new_logprobs: Sequence[np.ndarray],
    cfg: GrpoConfig,
) -> tuple[float, list[np.ndarray], float]:
    """Clipped-surrogate loss for one group, its gradient w.r.t. every new logprob, and mean KL."""
    G = len(group.completions)
    if len(new_logprobs) != G:
        raise GrpoError(f"group {group.prompt_id}: {len(new_logprobs)} logprob vectors for {G} completions")
    group.validate()
    eps, beta = cfg.clip_epsilon, cfg.kl_beta
    loss = 0.0
    grads = []
    kl_sum, kl_count = 0.0, 0
    for i in range(G):
        new = np.asarray(new_logprobs[i], dtype=float)
        old, ref = group.old_logprobs[i], group.ref_logprobs[i]
        if new.shape != old.shape:
            raise GrpoError(f"group {group.prompt_id}: completion {i} has {new.size} new logprobs, expected {old.size}")
        if new.size == 0:
            grads.append(new.copy())
            continue
        A = group.advantages[i]
        ratio = np.exp(new - old)
        unclipped = ratio * A
        clipped = np.clip(ratio, 1 - eps, 1 + eps) * A
        use_unclipped = unclipped <= clipped
        surrogate = np.where(use_unclipped, unclipped, clipped)
        diff = ref - new
        kl = np.expm1(diff) - diff
        per_token = surrogate - beta * kl
        d_per_token = np.where(use_unclipped, unclipped, 0.0) - beta * (-np.expm1(diff))
        scale = 1.0 / (G * new.size) if cfg.length_normalize else 1.0 / G
        loss -= scale * per_token.sum()
        grads.append(-scale * d_per_token)
        kl_sum += kl.sum()
        kl_count += kl.size
    return float(loss), grads, kl_sum / max(kl_count, 1)


def grpo_loss(group: CandidateGroup, new_logprobs: Sequence[np.ndarray], cfg: GrpoConfig) -> float:
    return grpo_loss_and_grad(group, new_logprobs, cfg)[0]


class Optimizer:
    """Gradient descent with optional momentum or Adam, updating arrays in place."""

    def __init__(self, cfg: GrpoConfig):
        self.cfg = cfg
        self.t = 0
        self.state: dict[str, dict[str, np.ndarray]] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            if cfg.optimizer == "sgd":
                p -= cfg.learning_rate * g
            elif cfg.optimizer == "momentum":
                buf = self.state.setdefault(name, {"v": np.zeros_like(p)})["v"]
                buf *= cfg.momentum
                buf += g
                p -= cfg.learning_rate * buf
            else:
                st = self.state.setdefault(name, {"m": np.zeros_like(p), "v": np.zeros_like(p)})
                b1, b2 = cfg.adam_betas
                st["m"] = b1 * st["m"] + (1 - b1) * g
                st["v"] = b2 * st["v"] + (1 - b2) * g * g
                m_hat = st["m"] / (1 - b1**self.t)
                v_hat = st["v"] / (1 - b2**self.t)
                p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "state": {
                name: {k: {"shape": list(v.shape), "values": v.ravel().tolist()} for k, v in slots.items()}
                for name, slots in self.state.items()
            },
        }

    def load_state_dict(self, d: dict) -> None:
        self.t = int(d["t"])
        self.state = {
            name: {k: np.array(v["values"], dtype=float).reshape(v["shape"]) for k, v in slots.items()}
            for name, slots in d["state"].items()
        }


@dataclass
class StepReport:
    step: int
    mean_reward: float
    mean_format_reward: float
    mean_abs_advantage: float
    loss: float
    grad_norm: float
    mean_kl: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _split(seq: Sequence, parts: int) -> list[Sequence]:
    size = math.ceil(len(seq) / parts)
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def _reward_parts(result) -> tuple[float, float]:
    if hasattr(result, "total"):
        return float(result.total), float(getattr(result, "format_reward", float("nan")))
    return float(result), float("nan")


def _train_temperature(cfg: GrpoConfig) -> float:
    return cfg.temperature if cfg.tempered_logprobs else 1.0


def build_groups(policy, ref_policy, batch: Sequence, reward_fn: Callable, cfg: GrpoConfig, rng) -> list[CandidateGroup]:
    """Sample, score and annotate one group per prompt."""
    G = cfg.group_size
    prompts = [list(p.prompt_tokens) for p in batch for _ in range(G)]
    completions = policy.sample(prompts, cfg.temperature, cfg.max_completion_tokens, rng)
    if len(completions) != len(prompts):
        raise GrpoError("policy returned the wrong number of completions")
    t = _train_temperature(cfg)
    old, _ = policy.forward(prompts, completions, t)
    ref, _ = ref_policy.forward(prompts, completions, t)
    groups = []
    for j, p in enumerate(batch):
        sl = slice(j * G, (j + 1) * G)
        pid = str(getattr(p, "id", j))
        for c in completions[sl]:
            if len(c) > cfg.max_completion_tokens:
                raise GrpoError(f"prompt {pid}: completion exceeds max_completion_tokens")
        try:
            parts = [_reward_parts(reward_fn(p, c)) for c in completions[sl]]
        except Exception as exc:
            raise GrpoError(f"prompt {pid}: reward function failed: {exc}") from exc
        rewards = np.array([r for r, _ in parts])
        groups.append(
            CandidateGroup(
                prompt_id=pid,
                prompt_tokens=list(p.prompt_tokens),
                completions=[list(c) for c in completions[sl]],
                rewards=rewards,
                old_logprobs=list(old[sl]),
                ref_logprobs=list(ref[sl]),
                advantages=compute_advantages(rewards),
                format_rewards=np.array([f for _, f in parts]),
            )
        )
    return groups


def train_step(
    policy,
    ref_policy,
    batch: Sequence,
    reward_fn: Callable,
    cfg: GrpoConfig,
    optimizer: Optimizer,
    rng: np.random.Generator,
    step: int = 0,
) -> StepReport:
    """One sampling round followed by ``cfg.inner_epochs`` parameter updates.

    The batch is split into ``cfg.grad_accum_steps`` micro-batches; their
    gradients are averaged before the update.
    """
    if not batch:
        raise GrpoError("empty batch")
    groups = build_groups(policy, ref_policy, batch, reward_fn, cfg, rng)
    micro = _split(groups, cfg.grad_accum_steps)
    params = policy.parameters()
    loss_total, kl_total, grad_norm = 0.0, 0.0, 0.0
    for _ in range(cfg.inner_epochs):
        acc = {k: np.zeros_like(v) for k, v in params.items()}
        loss_total, kl_total = 0.0, 0.0
        for mb in micro:
            prompts = [g.prompt_tokens for g in mb for _ in g.completions]
            completions = [c for g in mb for c in g.completions]
            new, tape = policy.forward(prompts, completions, _train_temperature(cfg))
            token_grads = []
            for gi, g in enumerate(mb):
                G = len(g.completions)
                l, dg, kl = grpo_loss_and_grad(g, new[gi * G : (gi + 1) * G], cfg)
                weight = 1.0 / (len(mb) * len(micro))
                loss_total += l * weight
                kl_total += kl * weight
                token_grads.extend(d * weight for d in dg)
            for k, v in policy.backward(tape, token_grads).items():
                acc[k] += v
        grad_norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in acc.values())))
        if not np.isfinite(grad_norm):
            raise GrpoError(f"non-finite gradient at step {step}")
        optimizer.step(params, acc)
    rewards = np.concatenate([g.rewards for g in groups])
    formats = np.concatenate([g.format_rewards for g in groups])
    advantages = np.concatenate([g.advantages for g in groups])
    return StepReport(
        step=step,
        mean_reward=float(rewards.mean()),
        mean_format_reward=float(formats.mean()),
        mean_abs_advantage=float(np.abs(advantages).mean()),
        loss=loss_total,
        grad_norm=grad_norm,
        mean_kl=kl_total,
    )


@dataclass
class EpochMetrics:
    epoch: int
    mean_reward: float
    mean_format_reward: float
    mean_loss: float
    steps: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Trainer:
    """Holds the mutable training state: policy, frozen reference, optimizer, PRNG."""

    policy: object
    cfg: GrpoConfig
    ref_policy: object = None
    optimizer: Optimizer = None
    rng: np.random.Generator = None
    epoch: int = 0
    step: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.ref_policy is None:
            self.ref_policy = self.policy.clone()
        if self.optimizer is None:
            self.optimizer = Optimizer(self.cfg)
        if self.rng is None:
            self.rng = np.random.default_rng(self.cfg.seed)

    def train_step(self, batch: Sequence, reward_fn: Callable) -> StepReport:
        self.step += 1
        report = train_step(self.policy, self.ref_policy, batch, reward_fn, self.cfg, self.optimizer, self.rng, self.step)
        self.history.append(report)
        return report

    def checkpoint(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.cfg.to_dict(),
            "epoch": self.epoch,
            "step": self.step,
            "policy": self.policy.state_dict(),
            "reference": self.ref_policy.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "rng_state": self.rng.bit_generator.state,
        }


def save_checkpoint(state: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(state, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> dict:
    state = json.loads(Path(path).read_text(encoding="utf-8"))
    if state.get("format") != CHECKPOINT_FORMAT:
        raise GrpoError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if state.get("version") != CHECKPOINT_VERSION:
        raise GrpoError(f"unsupported checkpoint version {state.get('version')}")
    return state


def train_loop(
    policy,
    prompts: Sequence,
    reward_fn: Callable,
    cfg: GrpoConfig,
    checkpoint_dir: Optional[str | Path] = None,
    metrics_path: Optional[str | Path] = None,
) -> tuple[object, list[EpochMetrics]]:
    """Run ``cfg.epochs`` epochs of GRPO over shuffled batches of ``prompts``.

    The reference policy is snapshotted once, before the first step. When
    ``checkpoint_dir`` is given, ``epoch-XXXX.json`` is written after every
    epoch and ``checkpoint.json`` holds the final state (the initial one
    when ``cfg.epochs`` is 0); step reports go to ``metrics_path`` as JSON Lines.
    """
    trainer = Trainer(policy, cfg)
    metrics: list[EpochMetrics] = []
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    sink = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = trainer.rng.permutation(len(prompts))
            shuffled = [prompts[i] for i in order]
            reports = []
            for start in range(0, len(shuffled), cfg.batch_size):
                report = trainer.train_step(shuffled[start : start + cfg.batch_size], reward_fn)
                reports.append(report)
                if sink:
                    sink.write(json.dumps({"epoch": epoch, **report.to_dict()}) + "\n")
            trainer.epoch = epoch
            m = EpochMetrics(
                epoch=epoch,
                mean_reward=float(np.mean([r.mean_reward for r in reports])),
                mean_format_reward=float(np.mean([r.mean_format_reward for r in reports])),
                mean_loss=float(np.mean([r.loss for r in reports])),
                steps=len(reports),
            )
            metrics.append(m)
            log.info("epoch %d: reward %.3f format %.3f loss %.4f", epoch, m.mean_reward, m.mean_format_reward, m.mean_loss)
            if checkpoint_dir is not None:
                save_checkpoint(trainer.checkpoint(), Path(checkpoint_dir) / f"epoch-{epoch:04d}.json")
        if checkpoint_dir is not None:
            save_checkpoint(trainer.checkpoint(), Path(checkpoint_dir) / "checkpoint.json")
    finally:
        if sink:
            sink.close()
    return trainer.policy, metrics
