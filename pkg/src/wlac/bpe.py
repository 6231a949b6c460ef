"""From-scratch Byte-Pair Encoding over whitespace-free words.

Each word is symbolized as its characters followed by a detached
end-of-word marker.  Merges are learned greedily on the most frequent
adjacent pair (lexicographic tie-break) and never touch the marker
itself; after applying merges, the marker is fused into the final
symbol, so the last piece of every encoding carries ``end_marker`` as
a suffix and decoding is a plain concatenate-and-strip.

Keeping the marker out of the merge alphabet bounds the work per word:
encoding a word of n characters performs at most n-1 merges.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Vocabulary

END_MARKER = "</w>"

_ASCII_LOWER = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class BpeModel:
    """Learned merge list plus the symbol vocabulary it induces."""

    merges: tuple[tuple[str, str], ...]
    vocab: Vocabulary
    end_marker: str = END_MARKER

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_ranks", {pair: i for i, pair in enumerate(self.merges)}
        )

    def encode(self, word: str) -> list[str]:
        return bpe_encode(self, word)

    def decode(self, pieces: Sequence[str]) -> str:
        return bpe_decode(self, pieces)


def _as_counts(words: Iterable[str] | Mapping[str, int]) -> Counter[str]:
    if isinstance(words, Mapping):
        return Counter(dict(words))
    return Counter(words)


def learn_bpe(words: Iterable[str] | Mapping[str, int], num_merges: int) -> BpeModel:
    """Learn ``num_merges`` greedy merges from a multiset of words.

    Stops early once no adjacent pair occurs anywhere.  Pair counts are
    maintained incrementally per unique word, weighted by word count.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    counts = _as_counts(words)
    for word in counts:
        if not word or END_MARKER in word:
            raise ValueError(f"unencodable word: {word!r}")

    # Symbol sequences exclude the end marker: it never merges.
    seqs: dict[str, list[str]] = {w: list(w) for w in counts}
    pair_counts: Counter[tuple[str, str]] = Counter()
    pair_words: dict[tuple[str, str], set[str]] = defaultdict(set)

    def add_pairs(word: str, delta: int) -> None:
        seq = seqs[word]
        for a, b in zip(seq, seq[1:]):
            pair_counts[(a, b)] += delta
            if delta > 0:
                pair_words[(a, b)].add(word)

    for word in counts:
        add_pairs(word, counts[word])

    alphabet = sorted({c for w in counts for c in w})
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        live = {p: n for p, n in pair_counts.items() if n > 0}
        if not live:
            break
        best = min(live, key=lambda p: (-live[p], p))
        merges.append(best)
        merged = best[0] + best[1]
        for word in sorted(pair_words[best]):
            seq = seqs[word]
            if len(seq) < 2:
                continue
            add_pairs(word, -counts[word])
            out: list[str] = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and (seq[i], seq[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[word] = out
            add_pairs(word, counts[word])
        pair_words.pop(best, None)

    return BpeModel(merges=tuple(merges), vocab=_symbol_vocab(alphabet, merges))


def _symbol_vocab(alphabet: Sequence[str], merges: Sequence[tuple[str, str]]) -> Vocabulary:
    """Vocabulary over every symbol an encoding can produce.

    Both bare and marker-suffixed variants of each base symbol are
    included: the trailing marker fuses into whatever symbol ends the
    word, which may be any character or merge output.
    """
    bases = list(dict.fromkeys(list(alphabet) + [a + b for a, b in merges]))
    symbols = sorted(bases) + [s + END_MARKER for s in sorted(bases)]
    chars = sorted(set(alphabet) | set(_ASCII_LOWER))
    return Vocabulary(tokens=tuple(symbols), chars=tuple(chars))


def bpe_encode(model: BpeModel, word: str) -> list[str]:
    """Split *word* into sub-word pieces, last piece marker-suffixed.

    Merges apply in learned priority order until fixpoint.  Characters
    outside the training alphabet stay as single symbols; they map to
    ``<unk>`` at id-lookup time.
    """
    if not word:
        raise ValueError("cannot encode the empty word")
    ranks: dict[tuple[str, str], int] = model._ranks  # type: ignore[attr-defined]
    seq = list(word)
    while len(seq) > 1:
        pairs = {(a, b) for a, b in zip(seq, seq[1:])}
        ranked = [p for p in pairs if p in ranks]
        if not ranked:
            break
        best = min(ranked, key=ranks.__getitem__)
        merged = best[0] + best[1]
        out: list[str] = []
        i = 0
        while i < len(seq):
            if i + 1 < len(seq) and (seq[i], seq[i + 1]) == best:
                out.append(merged)
                i += 2
            else:
                out.append(seq[i])
                i += 1
        seq = out
    seq[-1] = seq[-1] + model.end_marker
    return seq


def bpe_decode(model: BpeModel, pieces: Sequence[str]) -> str:
    """Concatenate pieces and strip the end marker."""
    if not pieces:
        raise ValueError("cannot decode an empty piece sequence")
    word = "".join(pieces)
    if word.endswith(model.end_marker):
        word = word[: -len(model.end_marker)]
    return word


def save_bpe(model: BpeModel, path: str | Path) -> None:
    """One merge per line, ``left<SPACE>right``, in priority order."""
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in model.merges:
            fh.write(f"{a} {b}\n")


def load_merges(path: str | Path) -> tuple[tuple[str, str], ...]:
    """Read a merge file: one ``left<SPACE>right`` pair per line."""
    merges: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            left, right = line.split(" ", 1)
            merges.append((left, right))
    return tuple(merges)


def load_bpe(path: str | Path, alphabet: Iterable[str] | None = None) -> BpeModel:
    """Rebuild a model from a merge file.

    The alphabet defaults to the characters appearing in the merges;
    pass the corpus alphabet to reconstruct the exact training-time
    vocabulary.
    """
    merges = load_merges(path)
    if alphabet is None:
        alphabet = sorted({c for pair in merges for part in pair for c in part})
    return BpeModel(merges=merges, vocab=_symbol_vocab(sorted(alphabet), merges))
