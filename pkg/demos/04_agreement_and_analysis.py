"""The agreement criterion, joint inference, and the diagnostic groups."""

from wlac import (
    aggregate_report, check_agreement, joint_inference, prefix_match,
    translation_upper_bound,
)
from wlac.agreement import make_record
from wlac.analysis import AnalysisCase, error_groups, improvement_groups
from wlac.decoding import HypothesisSet, PredictionSet

hyps = HypothesisSet.from_hypotheses([
    ("that's one small step for man".split(), -0.31),
    ("that is a small step for man".split(), -0.42),
])

# A prediction "agrees" when the translations contain it.
for word in ("step", "leap"):
    print(f"agreement({word!r}) = {check_agreement(word, hyps)}")

# Joint inference promotes the first candidate the translations confirm.
preds = PredictionSet(candidates=(("sat", 0.5), ("step", 0.3), ("so", 0.2)), k=3)
print("joint inference picks:", joint_inference(preds, hyps))

# Translation-only baselines.
print("upper bound for label 'step':", translation_upper_bound("step", hyps))
print("prefix match for 's':", prefix_match("s", hyps))

# Accuracy split by agreement: the gap is the whole story.
records = [
    make_record("0", "step", "step", hyps),   # agrees, correct
    make_record("1", "small", "small", hyps), # agrees, correct
    make_record("2", "sat", "step", hyps),    # disagrees, wrong
    make_record("3", "man", "step", hyps),    # agrees, wrong
]
report = aggregate_report(records)
print(f"\naccuracy {report.accuracy:.2f}, agreement rate {report.agreement_rate:.2f}")
print(f"agreeing accuracy {report.agr_acc:.2f} vs disagreeing {report.disagr_acc:.2f}")

# Why did the joint model win a case, and where do errors come from?
cases = [
    AnalysisCase("0", "sat", "step", "step", hyps, context_len=3),
    AnalysisCase("1", "small", "step", "step", hyps, context_len=0),
    AnalysisCase("2", "man", "moon", "moon", hyps, context_len=2),
    AnalysisCase("3", "for", "for", "leap", hyps, context_len=0),
]
imp = improvement_groups(cases)
for name in imp.partition:
    print(f"improvement {name:<15} {imp.groups[name].count}")
err = error_groups(cases)
for name in err.partition:
    st = err.groups[name]
    print(f"errors {name:<18} {st.count}  zero-context {st.zero_context_pct}%")
