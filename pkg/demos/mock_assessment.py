"""Assess a small dataset against a scripted mock endpoint, then evaluate.

This is the hermetic path a real model endpoint would follow: prompts go out
over the chat-completions wire format, malformed replies are resampled, and
the resulting records feed a 5-fold report.
Run: python3 demos/mock_assessment.py
"""

import json
from pathlib import Path

from patchjudge.assessors import RecordsAssessor
from patchjudge.client import EndpointConfig, assess_batch
from patchjudge.corpus import kfold_split, load_dataset
from patchjudge.evaluation import crossval_run
from patchjudge.mock import MockServer
from patchjudge.prompts import default_template

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    samples = load_dataset(FIXTURES / "small_118.jsonl")
    script = json.loads((FIXTURES / "small_118_script.json").read_text())
    with MockServer(script) as server:
        cfg = EndpointConfig(server.url, "mock", backoff_seconds=0.0)
        records = assess_batch(cfg, samples, default_template(), parallelism=4)

    resampled = [r.sample_id for r in records if r.attempts > 1 and not r.unresolved]
    unresolved = [r.sample_id for r in records if r.unresolved]
    print(f"{len(records)} samples assessed")
    print(f"resolved after resampling: {', '.join(resampled)}")
    print(f"still unresolved after {cfg.max_resamples} attempts: {', '.join(unresolved)}")

    folds = kfold_split([s.id for s in samples], 5, seed=0)
    report = crossval_run(samples, folds, RecordsAssessor(records))
    for i, fold in enumerate(report.per_fold):
        print(f"fold {i}: accuracy {fold.accuracy:.3f} f1 {fold.f1:.3f}")
    print(f"pooled: accuracy {report.accuracy:.4f} precision {report.precision:.4f} "
          f"recall {report.recall:.4f} f1 {report.f1:.4f} auc {report.auc:.4f}")
    print(f"unresolved samples counted as Overfitting: {report.unresolved_count}")


if __name__ == "__main__":
    main()
