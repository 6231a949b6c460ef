"""BPE learner and codec tests, checked against a brute-force reference."""

import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from wlac.bpe import END_MARKER, bpe_decode, bpe_encode, learn_bpe


def reference_merges(words: dict[str, int], num_merges: int) -> list[tuple[str, str]]:
    """Naive learner: recount every pair from scratch at each step."""
    seqs = {w: list(w) for w in words}
    merges = []
    for _ in range(num_merges):
        counts: Counter = Counter()
        for w, n in words.items():
            seq = seqs[w]
            for a, b in zip(seq, seq[1:]):
                counts[(a, b)] += n
        if not counts:
            break
        best = min(counts, key=lambda p: (-counts[p], p))
        merges.append(best)
        for w in words:
            seq = seqs[w]
            out, i = [], 0
            while i < len(seq):
                if i + 1 < len(seq) and (seq[i], seq[i + 1]) == best:
                    out.append(best[0] + best[1])
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[w] = out
    return merges


def test_first_merge_tie_breaks_lexicographically():
    # l-o and o-w both occur three times; the smaller pair wins.
    model = learn_bpe({"low": 1, "lower": 1, "lowest": 1}, 1)
    assert model.merges == (("l", "o"),)


def test_single_pair_word():
    model = learn_bpe(["aa"], 1)
    assert model.merges == (("a", "a"),)


def test_zero_merges_is_character_level():
    model = learn_bpe(["ab"], 0)
    assert bpe_encode(model, "ab") == ["a", "b" + END_MARKER]


def test_full_merge_chain():
    model = learn_bpe({"low": 10, "lot": 1}, 2)
    assert model.merges == (("l", "o"), ("lo", "w"))
    assert bpe_encode(model, "low") == ["low" + END_MARKER]


def test_stops_early_when_no_pairs_left():
    model = learn_bpe(["ab"], 100)
    assert len(model.merges) == 1


def test_decode_examples():
    model = learn_bpe(["step"], 2)
    assert bpe_decode(model, ["st", "ep" + END_MARKER]) == "step"
    assert bpe_decode(model, ["a" + END_MARKER]) == "a"
    assert bpe_decode(model, bpe_encode(model, "walking")) == "walking"


def test_unknown_characters_stay_single_symbols():
    model = learn_bpe(["abc"], 2)
    pieces = bpe_encode(model, "axq")
    assert pieces[-1].endswith(END_MARKER)
    assert bpe_decode(model, pieces) == "axq"


def test_merge_outputs_present_in_vocab():
    model = learn_bpe({"lower": 3, "slow": 2}, 4)
    for a, b in model.merges:
        assert a + b in model.vocab
        assert a + b + END_MARKER in model.vocab


def test_determinism():
    words = {"walk": 3, "walked": 2, "walking": 2, "talks": 1}
    m1 = learn_bpe(words, 8)
    m2 = learn_bpe(dict(reversed(list(words.items()))), 8)
    assert m1.merges == m2.merges


def test_matches_reference_on_random_corpus():
    rng = random.Random(13)
    words = {
        "".join(rng.choice("abcde") for _ in range(rng.randint(1, 8))): rng.randint(1, 5)
        for _ in range(120)
    }
    model = learn_bpe(words, 40)
    assert list(model.merges) == reference_merges(words, 40)


def test_merge_count_bound():
    # n characters yield at least one piece, so at most n-1 merges fire.
    model = learn_bpe({"banana": 5, "bandana": 3}, 12)
    for word in ("banana", "bandana", "ban"):
        pieces = bpe_encode(model, word)
        merges_performed = len(word) - len(pieces)
        assert merges_performed <= len(word) - 1


@settings(max_examples=150, deadline=None)
@given(st.text(alphabet="abcdefghij", min_size=1, max_size=14))
def test_roundtrip_property(word):
    model = learn_bpe({"bad": 2, "cage": 3, "hide": 1, "jiff": 2}, 6)
    assert bpe_decode(model, bpe_encode(model, word)) == word


def test_empty_word_rejected():
    model = learn_bpe(["ab"], 0)
    with pytest.raises(ValueError):
        bpe_encode(model, "")
    with pytest.raises(ValueError):
        learn_bpe([""], 1)
