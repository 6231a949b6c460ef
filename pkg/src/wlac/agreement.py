"""Agreement between completion predictions and translation hypotheses.

A prediction *agrees* when it appears (case-folded) among the tokens of
the top translation hypotheses.  Joint inference promotes the first
agreeing candidate; aggregate reports split accuracy by agreement so
the gap between agreeing and disagreeing predictions is visible.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .datagen import RomanizationTable, typing_form
from .decoding import HypothesisSet, PredictionSet


def check_agreement(prediction: str, hyps: HypothesisSet) -> bool:
    """True iff the prediction occurs in any hypothesis (case-folded)."""
    if not prediction:
        raise ValueError("prediction must be nonempty")
    return prediction.casefold() in hyps.word_set


def joint_inference(preds: PredictionSet, hyps: HypothesisSet) -> str:
    """First ranked candidate present in the hypotheses.

    Falls back to the top candidate when none agrees, and to the empty
    string when there are no candidates at all.
    """
    if not preds.candidates:
        return ""
    for word, _ in preds.candidates:
        if word.casefold() in hyps.word_set:
            return word
    return preds.candidates[0][0]


def translation_upper_bound(label: str, hyps: HypothesisSet) -> bool:
    """Label membership in the hypotheses: the translation-only ceiling."""
    return label.casefold() in hyps.word_set


def prefix_match(
    typed: str,
    hyps: HypothesisSet,
    table: RomanizationTable | None = None,
) -> str | None:
    """Most frequent hypothesis token whose typing form extends *typed*.

    Counting and prefix matching are case-folded; ties break
    lexicographically.  Returns None when nothing matches.
    """
    if not typed:
        raise ValueError("typed must be nonempty")
    target = typed.casefold()
    counts: Counter[str] = Counter()
    for tokens, _ in hyps.hypotheses:
        for tok in tokens:
            folded = tok.casefold()
            if typing_form(folded, table).startswith(target):
                counts[folded] += 1
    if not counts:
        return None
    return min(counts, key=lambda w: (-counts[w], w))


@dataclass(frozen=True)
class AgreementRecord:
    example_id: str
    prediction: str
    label: str
    agrees: bool
    correct: bool


def make_record(
    example_id: str,
    prediction: str,
    label: str,
    hyps: HypothesisSet,
    case_sensitive: bool = False,
) -> AgreementRecord:
    if case_sensitive:
        correct = prediction == label
    else:
        correct = prediction.casefold() == label.casefold()
    return AgreementRecord(
        example_id=example_id,
        prediction=prediction,
        label=label,
        agrees=bool(prediction) and check_agreement(prediction, hyps),
        correct=correct,
    )


@dataclass(frozen=True)
class AgreementReport:
    """Accuracy decomposed by agreement.

    ``agr_acc`` / ``disagr_acc`` are None when the corresponding side is
    empty (no agreements or no disagreements), as is ``gap``.
    """

    n: int
    accuracy: float
    agreement_rate: float
    agr_acc: float | None
    disagr_acc: float | None

    @property
    def gap(self) -> float | None:
        if self.agr_acc is None or self.disagr_acc is None:
            return None
        return self.agr_acc - self.disagr_acc

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "agreement_rate": self.agreement_rate,
            "agr_acc": self.agr_acc,
            "disagr_acc": self.disagr_acc,
            "gap": self.gap,
        }


def aggregate_report(records: Sequence[AgreementRecord]) -> AgreementReport:
    if not records:
        raise ValueError("cannot aggregate an empty record sequence")
    n = len(records)
    n_agree = sum(r.agrees for r in records)
    n_correct = sum(r.correct for r in records)
    agree_correct = sum(r.correct for r in records if r.agrees)
    disagree_correct = n_correct - agree_correct
    n_disagree = n - n_agree
    return AgreementReport(
        n=n,
        accuracy=n_correct / n,
        agreement_rate=n_agree / n,
        agr_acc=agree_correct / n_agree if n_agree else None,
        disagr_acc=disagree_correct / n_disagree if n_disagree else None,
    )
