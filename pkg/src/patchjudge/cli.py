"""``patchjudge`` command line.

Exit codes: 0 success, 1 output written but some samples unresolved,
2 usage/configuration/load error, 3 transport failure.

Options may also come from a TOML file given with ``--config``. Top-level
keys use the flag names with underscores (``score_mode = "vote-5"``);
``[grpo]``, ``[toy]`` and ``[endpoint]`` tables configure training and the
endpoint. Flags given on the command line take precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import tomli

from . import client as client_mod
from .assessors import RecordsAssessor, ToyPolicyAssessor
from .corpus import DatasetError, FoldAssignment, dataset_stats, kfold_split, load_dataset
from .evaluation import (
    UNRESOLVED_POLICIES,
    EvaluationError,
    config_hash,
    cross_dataset_run,
    crossval_run,
    parse_score_mode,
)
from .grpo import GrpoConfig, GrpoError, load_checkpoint, train_loop
from .mock import MockServer, ScriptError, load_script
from .prompts import TemplateError, default_template, load_template
from .toy import ToyPolicy, default_vocabulary, episode_reward, evaluate_toy, evaluation_episodes, gen_episode, toy_config

log = logging.getLogger("patchjudge")

EXIT_OK, EXIT_UNRESOLVED, EXIT_USAGE, EXIT_TRANSPORT = 0, 1, 2, 3

DEFAULTS = {
    "k": 5,
    "seed": 0,
    "score_mode": "binary",
    "unresolved_policy": "predict-overfitting",
    "parallelism": 1,
    "port": 8000,
    "host": "127.0.0.1",
}

# Toy training defaults: 400 episodes at batch 16 is 25 steps per epoch,
# so the default 20 epochs make 500 steps.
TOY_DEFAULTS = {"episodes": 400, "embed_dim": 8, "hidden": 32, "window": 8, "eval_episodes": 512}


class UsageError(Exception):
    pass


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None


def _opt(args, conf: dict, name: str, required: bool = False):
    val = getattr(args, name, None)
    if val is None:
        val = conf.get(name, DEFAULTS.get(name))
    if required and val is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    return val


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _write(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_stats(args, conf) -> int:
    samples = load_dataset(_existing(_opt(args, conf, "dataset", True), "dataset"))
    print(*dataset_stats(samples))
    return EXIT_OK


def cmd_split(args, conf) -> int:
    samples = load_dataset(_existing(_opt(args, conf, "dataset", True), "dataset"))
    labels = [s.label for s in samples] if args.stratified else None
    folds = kfold_split([s.id for s in samples], int(_opt(args, conf, "k")), int(_opt(args, conf, "seed")), labels)
    _write(folds.to_json(), _opt(args, conf, "out"))
    return EXIT_OK


def _endpoint(args, conf) -> client_mod.EndpointConfig:
    path = _opt(args, conf, "endpoint_config")
    if path:
        return client_mod.load_endpoint_config(_existing(path, "endpoint config"))
    if "endpoint" in conf:
        return client_mod.EndpointConfig.from_dict(conf["endpoint"])
    raise UsageError("--endpoint-config is required")


def cmd_assess(args, conf) -> int:
    samples = load_dataset(_existing(_opt(args, conf, "dataset", True), "dataset"))
    template_path = _opt(args, conf, "template")
    template = load_template(_existing(template_path, "template")) if template_path else default_template()
    cfg = _endpoint(args, conf)
    parallelism = int(_opt(args, conf, "parallelism"))
    votes = parse_score_mode(_opt(args, conf, "score_mode")) or 0
    records = client_mod.assess_batch(cfg, samples, template, parallelism=parallelism, votes=votes)
    out = _opt(args, conf, "out", True)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    client_mod.save_records(records, out)
    unresolved = sum(r.unresolved for r in records)
    log.info("assessed %d samples, %d unresolved", len(records), unresolved)
    if client_mod.all_transport_failures(records):
        print(f"error: no request reached {cfg.url}: {records[0].errors[-1]}", file=sys.stderr)
        return EXIT_TRANSPORT
    return EXIT_UNRESOLVED if unresolved else EXIT_OK


def _toy_options(conf: dict, seed: int) -> tuple[GrpoConfig, dict]:
    toy = {**TOY_DEFAULTS, **conf.get("toy", {})}
    unknown = set(toy) - set(TOY_DEFAULTS)
    if unknown:
        raise UsageError(f"unknown [toy] options: {sorted(unknown)}")
    grpo_opts = dict(conf.get("grpo", {}))
    grpo_opts.setdefault("seed", seed)
    return toy_config(**grpo_opts), toy


def cmd_train_toy(args, conf) -> int:
    seed = int(_opt(args, conf, "seed"))
    cfg, toy = _toy_options(conf, seed)
    if args.epochs is not None:
        cfg = GrpoConfig.from_dict({**cfg.to_dict(), "epochs": args.epochs})
    out = Path(_opt(args, conf, "out", True))
    out.mkdir(parents=True, exist_ok=True)
    vocab = default_vocabulary()
    policy = ToyPolicy.initialize(cfg.seed, vocab, embed_dim=toy["embed_dim"], hidden=toy["hidden"], window=toy["window"])
    episodes = [gen_episode(cfg.seed * 100_000 + i, vocab) for i in range(toy["episodes"])]
    policy, epochs = train_loop(
        policy, episodes, episode_reward(vocab), cfg, checkpoint_dir=out, metrics_path=out / "metrics.jsonl"
    )
    held_out = evaluation_episodes(toy["eval_episodes"], vocab)
    final = evaluate_toy(policy, held_out, cfg.temperature, cfg.max_completion_tokens, np.random.default_rng(cfg.seed))
    summary = {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "toy": toy,
        "epochs": [m.to_dict() for m in epochs],
        "held_out": final.to_dict(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"held-out mean total reward {final.mean_total:.3f}, mean format reward {final.mean_format:.3f}")
    return EXIT_OK


def _eval_assessor(args, conf):
    records = _opt(args, conf, "records")
    checkpoint = _opt(args, conf, "checkpoint")
    if bool(records) == bool(checkpoint):
        raise UsageError("give exactly one of --records or --checkpoint")
    if records:
        return RecordsAssessor(client_mod.load_records(_existing(records, "records file"))), {"records": str(records)}
    state = load_checkpoint(_existing(checkpoint, "checkpoint"))
    cfg = GrpoConfig.from_dict(state["config"])
    assessor = ToyPolicyAssessor(cfg=cfg, seed=cfg.seed, trainable=False, policy=ToyPolicy.from_state_dict(state["policy"]))
    return assessor, {"checkpoint": str(checkpoint), "config_hash": config_hash(state["config"])}


def cmd_eval(args, conf) -> int:
    dataset = load_dataset(_existing(_opt(args, conf, "dataset", True), "dataset"))
    assessor, meta = _eval_assessor(args, conf)
    score_mode = _opt(args, conf, "score_mode")
    policy = _opt(args, conf, "unresolved_policy")
    seed = int(_opt(args, conf, "seed"))
    meta["seed"] = seed
    template_path = _opt(args, conf, "template")
    meta["template_id"] = (load_template(template_path) if template_path else default_template()).id
    train_path = _opt(args, conf, "train_dataset")
    if train_path:
        train = load_dataset(_existing(train_path, "train dataset"))
        report = cross_dataset_run(train, dataset, assessor, score_mode, policy, metadata=meta)
    else:
        folds_path = _opt(args, conf, "folds")
        if folds_path:
            folds = FoldAssignment.load(_existing(folds_path, "fold file"))
        else:
            folds = kfold_split([s.id for s in dataset], int(_opt(args, conf, "k")), seed)
        report = crossval_run(dataset, folds, assessor, score_mode, policy, metadata=meta)
    _write(report.to_json(), _opt(args, conf, "out"))
    return EXIT_UNRESOLVED if report.unresolved_count else EXIT_OK


def cmd_mock_serve(args, conf) -> int:
    script = load_script(_existing(_opt(args, conf, "script", True), "script"))
    server = MockServer(script, host=_opt(args, conf, "host"), port=int(_opt(args, conf, "port")))
    print(f"mock endpoint listening on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with default options")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="patchjudge", description="Assess patch correctness and evaluate assessors.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("stats", parents=[common], help="print correct/overfitting/total counts")
    s.add_argument("--dataset")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("split", parents=[common], help="write a k-fold assignment")
    s.add_argument("--dataset")
    s.add_argument("--k", type=int)
    s.add_argument("--stratified", action="store_true", help="keep class ratios per fold")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("assess", parents=[common], help="query an endpoint for every sample")
    s.add_argument("--dataset")
    s.add_argument("--template")
    s.add_argument("--endpoint-config", dest="endpoint_config")
    s.add_argument("--parallelism", type=int)
    s.add_argument("--score-mode", dest="score_mode", help="binary or vote-k (k votes per sample)")
    s.set_defaults(func=cmd_assess)

    s = sub.add_parser("train-toy", parents=[common], help="train the toy policy with GRPO")
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_train_toy)

    s = sub.add_parser("eval", parents=[common], help="cross-validation or cross-dataset report")
    s.add_argument("--dataset", help="evaluation (test) dataset")
    s.add_argument("--train-dataset", dest="train_dataset", help="switch to the cross-dataset protocol")
    s.add_argument("--records")
    s.add_argument("--checkpoint")
    s.add_argument("--template")
    s.add_argument("--folds")
    s.add_argument("--k", type=int)
    s.add_argument("--score-mode", dest="score_mode")
    s.add_argument("--unresolved-policy", dest="unresolved_policy", choices=UNRESOLVED_POLICIES)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("mock-serve", parents=[common], help="serve a scripted mock endpoint")
    s.add_argument("--script")
    s.add_argument("--port", type=int)
    s.add_argument("--host")
    s.set_defaults(func=cmd_mock_serve)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, _load_config(args.config))
    except client_mod.TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (UsageError, DatasetError, TemplateError, ScriptError, EvaluationError, GrpoError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
