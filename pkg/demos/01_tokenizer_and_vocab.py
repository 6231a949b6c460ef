"""Vocabulary construction and the sub-word tokenizer, step by step."""

from wlac import build_vocab, learn_bpe, make_toy_corpus
from wlac.bpe import bpe_decode, bpe_encode

# A deterministic synthetic parallel corpus stands in for real data.
pairs = make_toy_corpus(size=200, vocab_size=40, min_len=4, max_len=9, seed=1)
print("first pair:")
print("  source:", " ".join(pairs[0].source))
print("  target:", " ".join(pairs[0].target))

# Word-level vocabulary: frequency-ranked with reserved specials.
vocab = build_vocab(pairs, side="joint", max_size=500)
print(f"\nvocabulary: {vocab.size} entries (+{len(vocab.chars)} typing characters)")
print("  most frequent tokens:", list(vocab.tokens[:5]))
print("  id round-trip:", vocab.token_of(vocab.id_of(vocab.tokens[0])))

# Byte-pair encoding learned from the same words.
words = {}
for pair in pairs:
    for tok in pair.source + pair.target:
        words[tok] = words.get(tok, 0) + 1
bpe = learn_bpe(words, num_merges=50)
print(f"\nBPE: {len(bpe.merges)} merges, first five: {bpe.merges[:5]}")

word = pairs[0].target[0]
pieces = bpe_encode(bpe, word)
print(f"encode {word!r:>12} -> {pieces}")
print(f"decode {pieces} -> {bpe_decode(bpe, pieces)!r}")
assert bpe_decode(bpe, pieces) == word
