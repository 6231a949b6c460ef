"""How completion examples are sampled from sentence pairs."""

from collections import Counter

from wlac import GenConfig, generate_dataset, generate_example, make_toy_corpus
from wlac.corpus import ParallelPair
from wlac.datagen import RomanizationTable, typing_form

pairs = make_toy_corpus(size=500, vocab_size=30, min_len=5, max_len=10, seed=2)
cfg = GenConfig(seed=7, max_context_len=3)

ex = generate_example(pairs[0], cfg, draw_index=0)
print("one example:")
print("  source       :", " ".join(ex.source))
print("  left context :", " ".join(ex.left_context) or "(empty)")
print("  typed so far :", ex.typed)
print("  right context:", " ".join(ex.right_context) or "(empty)")
print("  label        :", ex.label)
ex.validate()

# The generator is a pure function of (seed, pair id, draw index).
again = generate_example(pairs[0], cfg, draw_index=0)
assert again == ex, "same draw, same example"

# Over many draws all four context layouts appear.
examples = generate_dataset(pairs, per_pair=2, cfg=cfg)
print("\ncontext types over", len(examples), "examples:")
for kind, n in Counter(e.context_type for e in examples).most_common():
    print(f"  {kind:<7} {n}")

# Non-alphabetic scripts type through a romanization table.
table = RomanizationTable({"你": "ni", "好": "hao"})
zh = ParallelPair(id="zh", source=("hello",), target=("你", "好"))
zh_ex = generate_example(zh, cfg, table=table, draw_index=1)
print(f"\nromanized: label {zh_ex.label!r} is typed as "
      f"{typing_form(zh_ex.label, table)!r}, typed prefix {zh_ex.typed!r}")
