"""Patch correctness assessment with tagged reasoning outputs.

Modules:
    corpus      labeled buggy/fixed pairs, JSONL I/O, k-fold splits
    prompts     prompt template and rendering
    parsing     <think>/<answer> extraction and verdict classification
    rewards     format and accuracy rewards
    grpo        group relative policy optimization
    toy         tiny numpy policy and the synthetic tag-emission task
    client      chat-completion client with resampling
    mock        scripted mock endpoint
    evaluation  metrics, AUC, cross-validation, cross-dataset runs
    assessors   assessors for the evaluation protocols
    cli         ``patchjudge`` command line
"""

from .corpus import FoldAssignment, PatchSample, Verdict, dataset_stats, kfold_split, load_dataset
from .parsing import ParsedResponse, is_wellformed, parse
from .rewards import RewardBreakdown, accuracy_reward, format_reward, total_reward

__version__ = "0.1.0"

__all__ = [
    "FoldAssignment",
    "ParsedResponse",
    "PatchSample",
    "RewardBreakdown",
    "Verdict",
    "accuracy_reward",
    "dataset_stats",
    "format_reward",
    "is_wellformed",
    "kfold_split",
    "load_dataset",
    "parse",
    "total_reward",
]
