"""Cross-validation versus cross-dataset evaluation with reference assessors.

The oracle assessor reads the gold label and the constant assessor always
says one thing; they bracket what any real assessor can score. The toy
policy assessor trains on each training fold with GRPO, which shows the
wiring end to end but is not expected to beat chance on real code.
Run: python3 demos/protocols.py
"""

from pathlib import Path

from patchjudge.assessors import ConstantAssessor, OracleAssessor, ToyPolicyAssessor
from patchjudge.corpus import PatchSample, Verdict, kfold_split, load_dataset
from patchjudge.evaluation import cross_dataset_run, crossval_run
from patchjudge.toy import toy_config

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def show(name, report):
    auc = "n/a" if report.auc is None else f"{report.auc:.3f}"
    print(f"  {name:<22} acc {report.accuracy:.3f}  prec {report.precision:.3f}  rec {report.recall:.3f}  auc {auc}")


def main():
    small = load_dataset(FIXTURES / "small_118.jsonl")
    folds = kfold_split([s.id for s in small], 5, seed=0, labels=[s.label for s in small])
    print("5-fold cross-validation on the 118-sample fixture (stratified folds)")
    show("oracle", crossval_run(small, folds, OracleAssessor()))
    show("always Overfitting", crossval_run(small, folds, ConstantAssessor(Verdict.OVERFITTING)))
    show("toy policy (2 epochs)", crossval_run(small, folds, ToyPolicyAssessor(cfg=toy_config(epochs=2, batch_size=8))))

    large = [PatchSample(f"L{i}", f"x = {i};", f"x = {i} + 1;", Verdict.OVERFITTING if i % 5 < 3 else Verdict.CORRECT,
                         dataset_tag="large") for i in range(200)]
    print("\ncross-dataset: train on the fixture, test on a disjoint synthetic set (60% Overfitting)")
    show("oracle", cross_dataset_run(small, large, OracleAssessor()))
    show("always Correct", cross_dataset_run(small, large, ConstantAssessor(Verdict.CORRECT)))


if __name__ == "__main__":
    main()
