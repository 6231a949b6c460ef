"""Evaluation accuracy and diagnostic groupings.

Beyond plain accuracy, two partitions explain *why* joint training
helps and where the remaining errors live:

* improvement groups - among cases the joint model fixed, split by
  which model's prediction agrees with the generated translation;
* error groups - among the joint model's mistakes, split by whether
  the reference word even appears in the translation (backbone error)
  or not (translation error), with context-length statistics per group.

Correctness comparisons are case-folded exact string match by default;
pass ``case_sensitive=True`` to switch the policy everywhere.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import ParallelPair
from .datagen import WlacExample
from .decoding import HypothesisSet
from .stem import same_stem

__all__ = [
    "accuracy",
    "AnalysisCase",
    "GroupStats",
    "GroupReport",
    "improvement_groups",
    "error_groups",
    "same_stem",
    "frequency_misleading",
    "target_frequencies",
    "improvement_typology",
]


def metric_equal(a: str, b: str, case_sensitive: bool = False) -> bool:
    return a == b if case_sensitive else a.casefold() == b.casefold()


def accuracy(
    predictions: Sequence[str],
    labels: Sequence[str],
    case_sensitive: bool = False,
) -> float:
    if len(predictions) != len(labels):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels"
        )
    if not labels:
        raise ValueError("cannot score empty lists")
    hits = sum(metric_equal(p, l, case_sensitive) for p, l in zip(predictions, labels))
    return hits / len(labels)


@dataclass(frozen=True)
class AnalysisCase:
    """Predictions of both models plus the joint model's hypotheses."""

    example_id: str
    baseline_prediction: str  # backbone-only model
    joint_prediction: str  # jointly trained model
    label: str
    hyps: HypothesisSet
    context_len: int

    @property
    def zero_context(self) -> bool:
        return self.context_len == 0


@dataclass(frozen=True)
class GroupStats:
    count: int
    percentage: float
    avg_context: float | None
    zero_context_pct: float | None

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "percentage": self.percentage,
            "avg_context": self.avg_context,
            "zero_context_pct": self.zero_context_pct,
        }


@dataclass(frozen=True)
class GroupReport:
    groups: dict[str, GroupStats]
    partition: tuple[str, ...]  # group names whose percentages sum to 100
    total: int
    empty: bool = False

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "empty": self.empty,
            "partition": list(self.partition),
            "groups": {name: st.to_dict() for name, st in self.groups.items()},
        }


def _stats(cases: Sequence[AnalysisCase], total: int) -> GroupStats:
    if not cases:
        return GroupStats(0, 0.0, None, None)
    return GroupStats(
        count=len(cases),
        percentage=100.0 * len(cases) / total,
        avg_context=sum(c.context_len for c in cases) / len(cases),
        zero_context_pct=100.0 * sum(c.zero_context for c in cases) / len(cases),
    )


def improvement_groups(
    cases: Sequence[AnalysisCase], case_sensitive: bool = False
) -> GroupReport:
    """Partition the cases the joint model fixed by translation agreement.

    Keeps cases where the two predictions differ and the joint one is
    correct, then splits on which prediction the hypotheses contain:
    the baseline's (baseline-agree), only the joint one (only-joint),
    or neither (no-agree).
    """
    fixed = [
        c
        for c in cases
        if not metric_equal(c.baseline_prediction, c.joint_prediction, case_sensitive)
        and metric_equal(c.joint_prediction, c.label, case_sensitive)
    ]
    names = ("baseline-agree", "only-joint", "no-agree")
    if not fixed:
        return GroupReport(
            groups={n: _stats([], 1) for n in names},
            partition=names,
            total=0,
            empty=True,
        )
    buckets: dict[str, list[AnalysisCase]] = {n: [] for n in names}
    for c in fixed:
        if c.baseline_prediction.casefold() in c.hyps.word_set:
            buckets["baseline-agree"].append(c)
        elif c.joint_prediction.casefold() in c.hyps.word_set:
            buckets["only-joint"].append(c)
        else:
            buckets["no-agree"].append(c)
    groups = {n: _stats(buckets[n], len(fixed)) for n in names}
    return GroupReport(groups=groups, partition=names, total=len(fixed))


def error_groups(
    cases: Sequence[AnalysisCase], case_sensitive: bool = False
) -> GroupReport:
    """Partition the joint model's mistakes by label-in-translation.

    The "errors" group aggregates everything; "backbone-error" holds
    cases where the label appears in the hypotheses (the word head
    missed it), "translation-error" the rest.  Context statistics are
    attached per group.
    """
    wrong = [
        c for c in cases if not metric_equal(c.joint_prediction, c.label, case_sensitive)
    ]
    leaf_names = ("backbone-error", "translation-error")
    if not wrong:
        groups = {n: _stats([], 1) for n in ("errors",) + leaf_names}
        return GroupReport(groups=groups, partition=leaf_names, total=0, empty=True)
    backbone = [c for c in wrong if c.label.casefold() in c.hyps.word_set]
    translation = [c for c in wrong if c.label.casefold() not in c.hyps.word_set]
    groups = {
        "errors": _stats(wrong, len(wrong)),
        "backbone-error": _stats(backbone, len(wrong)),
        "translation-error": _stats(translation, len(wrong)),
    }
    return GroupReport(groups=groups, partition=leaf_names, total=len(wrong))


def frequency_misleading(
    baseline_prediction: str,
    joint_prediction: str,
    freq: Mapping[str, int],
) -> bool:
    """Did the baseline chase a strictly more frequent word?"""
    return freq.get(baseline_prediction, 0) > freq.get(joint_prediction, 0)


def target_frequencies(
    corpus: Iterable[ParallelPair] | Iterable[WlacExample],
) -> Counter[str]:
    """Word counts over training targets, for the frequency diagnostics."""
    counts: Counter[str] = Counter()
    for item in corpus:
        tokens = item.target if isinstance(item, ParallelPair) else item.full_target
        counts.update(tokens)
    return counts


def improvement_typology(
    cases: Sequence[AnalysisCase],
    freq: Mapping[str, int],
    case_sensitive: bool = False,
) -> dict:
    """Tense and frequency error rates within the baseline-agree group.

    Tense errors: baseline and label share a stem but differ as words.
    Frequency misleading: the baseline's word is strictly more frequent
    in the training targets than the joint model's.
    """
    report = improvement_groups(cases, case_sensitive)
    agree_cases = [
        c
        for c in cases
        if not metric_equal(c.baseline_prediction, c.joint_prediction, case_sensitive)
        and metric_equal(c.joint_prediction, c.label, case_sensitive)
        and c.baseline_prediction.casefold() in c.hyps.word_set
    ]
    n = len(agree_cases)
    tense = sum(
        1
        for c in agree_cases
        if not metric_equal(c.baseline_prediction, c.label, case_sensitive)
        and same_stem(c.baseline_prediction, c.label)
    )
    freq_misled = sum(
        1
        for c in agree_cases
        if frequency_misleading(c.baseline_prediction, c.joint_prediction, freq)
    )
    return {
        "improvement": report.to_dict(),
        "baseline_agree_n": n,
        "tense_error_pct": 100.0 * tense / n if n else None,
        "frequency_misleading_pct": 100.0 * freq_misled / n if n else None,
    }
