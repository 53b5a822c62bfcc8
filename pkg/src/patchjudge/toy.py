"""A tiny autoregressive token policy with handwritten backprop.

The model reads a fixed window of the last ``window`` tokens (left-padded
with ``<pad>``), embeds each position, concatenates the embeddings with a
bag-of-tokens count vector of the window (a position-free summary) and
passes them through one tanh layer to vocabulary logits::

    x      = concat(embed[ctx_0], ..., embed[ctx_{W-1}], counts(ctx))   (W*d + V,)
    h      = tanh(x @ w_hidden + b_hidden)                    (H,)
    logits = h @ w_out + counts(ctx) @ w_skip + b_out         (V,)

The ``w_skip`` path lets a token seen anywhere in the window (the hint, in
the synthetic task) act on the logits directly, without having to survive
the tanh layer.

Initialization (seeded ``numpy.random.default_rng``):
``embed ~ N(0, 1)``, ``w_hidden ~ N(0, 1/(W*d + V))``, ``w_out ~ N(0, 0.25/H)``,
``w_skip`` and biases zero. Tanh keeps ``|h| < 1`` so initial logits stay small.

The synthetic task: a prompt starts with a hint token that gives away the
gold verdict, and the policy is rewarded by the real parser and reward
functions for emitting ``<think> ... </think> <answer> keyword </answer>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import Verdict
from .grpo import GrpoConfig, Trainer
from .parsing import parse
from .rewards import RewardBreakdown, total_reward

EOS = "<eos>"
PAD = "<pad>"
TAG_TOKENS = ("<think>", "</think>", "<answer>", "</answer>")
KEYWORD_TOKENS = ("correct", "fix", "fixed", "overfitting", "buggy", "incorrect", "wrong")
HINT_CORRECT = "HINT_C"
HINT_OVERFITTING = "HINT_O"
N_FILLER = 16
MAX_VOCAB = 64
MAX_PARAMS = 50_000

PARAM_NAMES = ("embed", "w_hidden", "b_hidden", "w_out", "w_skip", "b_out")


class VocabularyError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens):
            raise VocabularyError("tokens must be unique")
        if EOS not in tokens or PAD not in tokens:
            raise VocabularyError(f"vocabulary needs {EOS} and {PAD}")
        if len(tokens) > MAX_VOCAB:
            raise VocabularyError(f"vocabulary size {len(tokens)} exceeds {MAX_VOCAB}")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    @property
    def eos(self) -> int:
        return self.index[EOS]

    @property
    def pad(self) -> int:
        return self.index[PAD]

    def ids(self, tokens: Sequence[str]) -> list[int]:
        try:
            return [self.index[t] for t in tokens]
        except KeyError as exc:
            raise VocabularyError(f"out-of-vocabulary token {exc.args[0]!r}") from None

    def check_ids(self, ids: Sequence[int]) -> None:
        for i in ids:
            if not 0 <= int(i) < len(self.tokens):
                raise VocabularyError(f"out-of-vocabulary token id {i}")

    def to_json(self) -> str:
        return json.dumps(self.tokens)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        return cls(json.loads(text))


def default_vocabulary(n_filler: int = N_FILLER) -> Vocabulary:
    fillers = [f"w{i}" for i in range(n_filler)]
    return Vocabulary([EOS, PAD, *TAG_TOKENS, *KEYWORD_TOKENS, HINT_CORRECT, HINT_OVERFITTING, *fillers])


@dataclass
class PolicyParameters:
    embed: np.ndarray  # (V, d)
    w_hidden: np.ndarray  # (W*d + V, H)
    b_hidden: np.ndarray  # (H,)
    w_out: np.ndarray  # (H, V)
    w_skip: np.ndarray  # (V, V)
    b_out: np.ndarray  # (V,)
    window: int

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def count(self) -> int:
        return sum(a.size for a in self.arrays().values())

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(**{k: v.copy() for k, v in self.arrays().items()}, window=self.window)

    def zeros_like(self) -> "PolicyParameters":
        return PolicyParameters(**{k: np.zeros_like(v) for k, v in self.arrays().items()}, window=self.window)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def set_flat(self, vec: np.ndarray) -> None:
        pos = 0
        for a in self.arrays().values():
            a[...] = vec[pos : pos + a.size].reshape(a.shape)
            pos += a.size

    def validate(self) -> None:
        V, d = self.embed.shape
        H = self.b_hidden.shape[0]
        expected = {
            "w_hidden": (self.window * d + V, H),
            "w_out": (H, V),
            "w_skip": (V, V),
            "b_out": (V,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name, a in self.arrays().items():
            if not np.all(np.isfinite(a)):
                raise NonFiniteError(f"non-finite values in {name}")


def init_policy(
    seed: int,
    vocab: Vocabulary,
    embed_dim: int = 8,
    hidden: int = 32,
    window: int = 8,
) -> PolicyParameters:
    rng = np.random.default_rng(seed)
    V, d, H, W = len(vocab), embed_dim, hidden, window
    params = PolicyParameters(
        embed=rng.standard_normal((V, d)),
        w_hidden=rng.standard_normal((W * d + V, H)) / np.sqrt(W * d + V),
        b_hidden=np.zeros(H),
        w_out=rng.standard_normal((H, V)) * (0.5 / np.sqrt(H)),
        w_skip=np.zeros((V, V)),
        b_out=np.zeros(V),
        window=W,
    )
    if params.count() > MAX_PARAMS:
        raise ValueError(f"{params.count()} parameters exceeds the {MAX_PARAMS} limit")
    return params


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class Tape:
    """Activations recorded by a forward pass, consumed by ``backward``."""

    contexts: np.ndarray  # (N, W) int
    targets: np.ndarray  # (N,) int
    x: np.ndarray
    h: np.ndarray
    probs: np.ndarray
    temperature: float = 1.0
    segments: list[tuple[int, int]] = field(default_factory=list)


def forward_logits(params: PolicyParameters, contexts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, V = len(contexts), params.embed.shape[0]
    counts = np.zeros((n, V))
    np.add.at(counts, (np.repeat(np.arange(n), contexts.shape[1]), contexts.ravel()), 1.0)
    x = np.concatenate([params.embed[contexts].reshape(n, -1), counts], axis=1)
    h = np.tanh(x @ params.w_hidden + params.b_hidden)
    logits = h @ params.w_out + counts @ params.w_skip + params.b_out
    return x, h, logits


def contexts_for(prompt: Sequence[int], completion: Sequence[int], window: int, pad: int) -> np.ndarray:
    """Context windows used to predict each completion token."""
    seq = [pad] * window + list(prompt) + list(completion)
    start = window + len(prompt)
    return np.array([seq[t - window : t] for t in range(start, start + len(completion))], dtype=np.int64).reshape(
        len(completion), window
    )


def forward(
    params: PolicyParameters,
    vocab: Vocabulary,
    prompts: Sequence[Sequence[int]],
    completions: Sequence[Sequence[int]],
    temperature: float = 1.0,
) -> tuple[list[np.ndarray], Tape]:
    """Log-probabilities of each completion token under softmax(logits / temperature), batched."""
    if len(prompts) != len(completions):
        raise ValueError("prompts and completions must align")
    ctx_blocks, tgt_blocks, segments, pos = [], [], [], 0
    for p, c in zip(prompts, completions):
        vocab.check_ids(p)
        vocab.check_ids(c)
        ctx_blocks.append(contexts_for(p, c, params.window, vocab.pad))
        tgt_blocks.append(np.asarray(c, dtype=np.int64))
        segments.append((pos, pos + len(c)))
        pos += len(c)
    contexts = np.concatenate(ctx_blocks) if ctx_blocks else np.zeros((0, params.window), dtype=np.int64)
    targets = np.concatenate(tgt_blocks) if tgt_blocks else np.zeros(0, dtype=np.int64)
    x, h, logits = forward_logits(params, contexts)
    logp_all = _log_softmax(logits / temperature)
    logp = logp_all[np.arange(len(targets)), targets]
    tape = Tape(contexts, targets, x, h, np.exp(logp_all), temperature, segments)
    return [logp[a:b] for a, b in segments], tape


def logprobs(
    params: PolicyParameters,
    vocab: Vocabulary,
    prompt_tokens: Sequence[int],
    completion_tokens: Sequence[int],
) -> np.ndarray:
    return forward(params, vocab, [prompt_tokens], [completion_tokens])[0][0]


def backward(params: PolicyParameters, tape: Tape, grad_logprobs: Sequence[np.ndarray]) -> PolicyParameters:
    """Reverse-mode gradient given d(loss)/d(logprob) for every recorded token."""
    g = np.concatenate([np.asarray(a, dtype=float) for a in grad_logprobs]) if grad_logprobs else np.zeros(0)
    if g.shape != tape.targets.shape:
        raise ValueError(f"expected {tape.targets.shape[0]} token gradients, got {g.shape[0]}")
    grads = params.zeros_like()
    # d logp[target] / d logits = onehot(target) - softmax
    dlogits = -g[:, None] * tape.probs
    dlogits[np.arange(len(g)), tape.targets] += g
    dlogits /= tape.temperature
    _check_finite(dlogits, "output")
    grads.w_out = tape.h.T @ dlogits
    grads.w_skip = tape.x[:, -params.embed.shape[0] :].T @ dlogits
    grads.b_out = dlogits.sum(axis=0)
    dpre = (dlogits @ params.w_out.T) * (1.0 - tape.h**2)
    _check_finite(dpre, "hidden")
    grads.w_hidden = tape.x.T @ dpre
    grads.b_hidden = dpre.sum(axis=0)
    d = params.embed.shape[1]
    W = params.window
    # counts carry no parameters; only the embedding slice flows back
    de = (dpre @ params.w_hidden[: W * d].T).reshape(len(g), W, d)
    _check_finite(de, "embedding")
    np.add.at(grads.embed, tape.contexts, de)
    return grads


def _check_finite(a: np.ndarray, layer: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite gradient in {layer} layer")


def sample_batch(
    params: PolicyParameters,
    vocab: Vocabulary,
    prompts: Sequence[Sequence[int]],
    temperature: float,
    max_len: int,
    rng: np.random.Generator,
) -> tuple[list[list[int]], list[np.ndarray], list[np.ndarray]]:
    """Sample one completion per prompt, all sequences advanced together.

    Returns ``(completions, logprobs_at_temperature, logprobs_at_t1)``.
    A completion ends after ``<eos>`` (which is kept) or at ``max_len`` tokens.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    n, W = len(prompts), params.window
    buffers = [[vocab.pad] * W + list(p) for p in prompts]
    completions: list[list[int]] = [[] for _ in range(n)]
    lp_temp: list[list[float]] = [[] for _ in range(n)]
    lp_one: list[list[float]] = [[] for _ in range(n)]
    active = list(range(n))
    for _ in range(max_len):
        if not active:
            break
        contexts = np.array([buffers[i][-W:] for i in active], dtype=np.int64)
        _, _, logits = forward_logits(params, contexts)
        logp_t = _log_softmax(logits / temperature)
        logp_1 = _log_softmax(logits)
        u = rng.random(len(active))
        cdf = np.cumsum(np.exp(logp_t), axis=1)
        choice = np.minimum((cdf < u[:, None] * cdf[:, -1:]).sum(axis=1), len(vocab) - 1)
        still = []
        for row, i in enumerate(active):
            tok = int(choice[row])
            buffers[i].append(tok)
            completions[i].append(tok)
            lp_temp[i].append(logp_t[row, tok])
            lp_one[i].append(logp_1[row, tok])
            if tok != vocab.eos:
                still.append(i)
        active = still
    return completions, [np.array(a) for a in lp_temp], [np.array(a) for a in lp_one]


def sample(
    params: PolicyParameters,
    vocab: Vocabulary,
    prompt_tokens: Sequence[int],
    temperature: float,
    max_len: int,
    seed: int,
) -> tuple[list[int], np.ndarray, np.ndarray]:
    comps, lp_t, lp_1 = sample_batch(params, vocab, [prompt_tokens], temperature, max_len, np.random.default_rng(seed))
    return comps[0], lp_t[0], lp_1[0]


def detokenize(vocab: Vocabulary, completion: Sequence[int]) -> str:
    """Space-joined surface forms; ``<eos>`` ends the text."""
    words = []
    for tok in completion:
        if tok == vocab.eos:
            break
        words.append(vocab.tokens[tok])
    return " ".join(words)


@dataclass(frozen=True)
class EpisodeSpec:
    prompt_tokens: tuple[int, ...]
    gold: Verdict
    id: str = ""

    def __post_init__(self):
        if not self.prompt_tokens:
            raise ValueError("empty prompt")


def gen_episode(seed: int, vocab: Vocabulary, min_filler: int = 1, max_filler: int = 3) -> EpisodeSpec:
    rng = np.random.default_rng(seed)
    gold = Verdict.OVERFITTING if rng.random() < 0.5 else Verdict.CORRECT
    hint = HINT_OVERFITTING if gold is Verdict.OVERFITTING else HINT_CORRECT
    fillers = [t for t in vocab.tokens if t.startswith("w") and t[1:].isdigit()]
    n = int(rng.integers(min_filler, max_filler + 1))
    body = [fillers[i] for i in rng.integers(0, len(fillers), size=n)]
    return EpisodeSpec(tuple(vocab.ids([hint, *body])), gold, id=f"ep-{seed}")


def episode_reward(vocab: Vocabulary):
    """Reward function scoring a completion with the real parser and rewards."""

    def reward_fn(episode, completion: Sequence[int]) -> RewardBreakdown:
        return total_reward(parse(detokenize(vocab, completion)), episode.gold)

    return reward_fn


class ToyPolicy:
    """Parameters plus vocabulary behind the interface the GRPO trainer uses."""

    def __init__(self, params: PolicyParameters, vocab: Vocabulary):
        params.validate()
        self.params = params
        self.vocab = vocab

    @classmethod
    def initialize(cls, seed: int, vocab: Optional[Vocabulary] = None, **sizes) -> "ToyPolicy":
        vocab = vocab or default_vocabulary()
        return cls(init_policy(seed, vocab, **sizes), vocab)

    def clone(self) -> "ToyPolicy":
        return ToyPolicy(self.params.copy(), self.vocab)

    def parameters(self) -> dict[str, np.ndarray]:
        return self.params.arrays()

    def sample(self, prompts, temperature, max_len, rng):
        comps, _, _ = sample_batch(self.params, self.vocab, prompts, temperature, max_len, rng)
        return comps

    def forward(self, prompts, completions, temperature=1.0):
        return forward(self.params, self.vocab, prompts, completions, temperature)

    def backward(self, tape: Tape, grad_logprobs) -> dict[str, np.ndarray]:
        return backward(self.params, tape, grad_logprobs).arrays()

    def state_dict(self) -> dict:
        return {
            "vocab": self.vocab.tokens,
            "window": self.params.window,
            "params": {k: {"shape": list(v.shape), "values": v.ravel().tolist()} for k, v in self.parameters().items()},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "ToyPolicy":
        arrays = {
            k: np.array(state["params"][k]["values"], dtype=float).reshape(state["params"][k]["shape"])
            for k in PARAM_NAMES
        }
        return cls(PolicyParameters(**arrays, window=int(state["window"])), Vocabulary(state["vocab"]))


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_text(vocab.to_json() + "\n", encoding="utf-8")


# The reference learning rate is tuned for adapter fine-tuning of a
# billion-parameter model. The toy policy has ~5k parameters and trains with
# Adam, whose step size is roughly lr per parameter, so it needs a much larger
# rate; 200x lands it at 1e-2.
TOY_LR_SCALE = 200.0
TOY_MAX_COMPLETION = 12
TOY_EVAL_OFFSET = 10**8


def toy_config(seed: int = 0, **overrides) -> GrpoConfig:
    """Reference GRPO settings adapted to the synthetic task."""
    base = GrpoConfig()
    opts = dict(
        learning_rate=base.learning_rate * TOY_LR_SCALE,
        optimizer="adam",
        batch_size=16,
        max_completion_tokens=TOY_MAX_COMPLETION,
        tempered_logprobs=True,
        seed=seed,
    )
    opts.update(overrides)
    return replace(base, **opts)


@dataclass
class ToyEval:
    mean_total: float
    mean_format: float
    mean_accuracy: float

    def to_dict(self) -> dict:
        return {"mean_total": self.mean_total, "mean_format": self.mean_format, "mean_accuracy": self.mean_accuracy}


@dataclass
class ToyRun:
    seed: int
    initial: ToyEval
    final: ToyEval
    step_rewards: list[float]
    step_format_rewards: list[float]
    policy: "ToyPolicy"


def evaluation_episodes(n: int, vocab: Vocabulary) -> list[EpisodeSpec]:
    """Held-out episodes; their seeds never collide with training seeds."""
    return [gen_episode(TOY_EVAL_OFFSET + i, vocab) for i in range(n)]


def evaluate_toy(policy: "ToyPolicy", episodes: Sequence[EpisodeSpec], temperature: float, max_len: int, rng) -> ToyEval:
    reward_fn = episode_reward(policy.vocab)
    comps = policy.sample([list(e.prompt_tokens) for e in episodes], temperature, max_len, rng)
    rs = [reward_fn(e, c) for e, c in zip(episodes, comps)]
    return ToyEval(
        mean_total=float(np.mean([r.total for r in rs])),
        mean_format=float(np.mean([r.format_reward for r in rs])),
        mean_accuracy=float(np.mean([r.accuracy_reward for r in rs])),
    )


def run_toy_training(
    seed: int,
    steps: int = 500,
    cfg: Optional[GrpoConfig] = None,
    eval_episodes: int = 512,
    **sizes,
) -> ToyRun:
    """Online GRPO on fresh episodes, evaluated before and after on held-out ones."""
    cfg = cfg or toy_config(seed)
    vocab = default_vocabulary()
    policy = ToyPolicy.initialize(seed, vocab, **sizes)
    held_out = evaluation_episodes(eval_episodes, vocab)
    max_len = cfg.max_completion_tokens
    initial = evaluate_toy(policy, held_out, cfg.temperature, max_len, np.random.default_rng([seed, 1]))
    trainer = Trainer(policy, cfg)
    reward_fn = episode_reward(vocab)
    rewards, formats = [], []
    for step in range(steps):
        first = seed * 100_000 + step * cfg.batch_size
        batch = [gen_episode(first + i, vocab) for i in range(cfg.batch_size)]
        report = trainer.train_step(batch, reward_fn)
        rewards.append(report.mean_reward)
        formats.append(report.mean_format_reward)
    final = evaluate_toy(policy, held_out, cfg.temperature, max_len, np.random.default_rng(seed))
    return ToyRun(seed, initial, final, rewards, formats, policy)
