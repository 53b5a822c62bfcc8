"""Train the toy policy with GRPO and watch the reward climb.

The toy task hides the gold verdict in a hint token at the start of the
prompt; the policy has to learn the tag grammar and to map the hint to the
right keyword. Run: python3 demos/toy_grpo_training.py [--steps 300] [--seed 0]
"""

import argparse

import numpy as np

from patchjudge.toy import run_toy_training, toy_config


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = toy_config(args.seed)
    print(f"optimizer {cfg.optimizer}, lr {cfg.learning_rate:g}, group {cfg.group_size}, temperature {cfg.temperature}")
    run = run_toy_training(args.seed, steps=args.steps, eval_episodes=256)
    rewards = np.asarray(run.step_rewards)
    for start in range(0, len(rewards), 25):
        chunk = rewards[start : start + 25]
        bar = "#" * int(round(chunk.mean() * 16))
        print(f"steps {start + 1:>4}-{start + len(chunk):<4} mean reward {chunk.mean():.2f} {bar}")
    print(f"\nheld-out before: {run.initial.mean_total:.3f} total, {run.initial.mean_format:.3f} format")
    print(f"held-out after:  {run.final.mean_total:.3f} total, {run.final.mean_format:.3f} format (max 2.5 total)")


if __name__ == "__main__":
    main()
