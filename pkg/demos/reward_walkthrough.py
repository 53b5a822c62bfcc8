"""Score a handful of model responses with the format and accuracy rewards.

Run: python3 demos/reward_walkthrough.py
"""

from patchjudge.corpus import Verdict
from patchjudge.rewards import score_text

RESPONSES = [
    ("well formed, right call", "<think>The guard hides the symptom.</think><answer>overfitting</answer>", Verdict.OVERFITTING),
    ("well formed, wrong call", "<think>Looks fine.</think><answer>correct</answer>", Verdict.OVERFITTING),
    ("substring trap", "<think>Off by one remains.</think><answer>incorrect</answer>", Verdict.OVERFITTING),
    ("no reasoning block", "<answer>correct</answer>", Verdict.CORRECT),
    ("both classes named", "<think>?</think><answer>correct or wrong</answer>", Verdict.CORRECT),
    ("free text only", "I think this patch is correct.", Verdict.CORRECT),
]


def main():
    print(f"{'case':<26}{'format':>8}{'accuracy':>10}{'total':>8}")
    for name, raw, gold in RESPONSES:
        r = score_text(raw, gold)
        print(f"{name:<26}{r.format_reward:>8.2f}{r.accuracy_reward:>10.2f}{r.total:>8.2f}")
    print("\nA correct Overfitting verdict earns twice the accuracy reward of a correct Correct verdict.")


if __name__ == "__main__":
    main()
