"""Synthesize word-completion examples from parallel pairs.

An example captures one moment of a translation session: the source
sentence, spans of the partial translation to the left and right of the
word being typed, the characters typed so far, and the word itself.
Examples are generated by sampling a target word, context spans around
it, and a typed-prefix length; every draw is keyed by
``(seed, pair_id, draw_index)`` so generation is order-independent and
reproducible.

Typing forms: an alphabetic word is typed as itself; characters with a
romanization-table entry are typed as their roman string; characters
that are neither (punctuation) contribute nothing.  Words whose typing
form is empty are never selected as labels.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import ParallelPair

logger = logging.getLogger(__name__)


class DatagenError(Exception):
    """Raised when a pair (or a whole corpus) yields no examples."""


@dataclass(frozen=True)
class RomanizationTable:
    """Character -> roman typing string, for non-alphabetic scripts."""

    mapping: dict[str, str]

    def __post_init__(self) -> None:
        for ch, roman in self.mapping.items():
            if not roman or not all("a" <= c <= "z" for c in roman):
                raise ValueError(
                    f"romanization of {ch!r} must be nonempty lowercase ASCII, got {roman!r}"
                )


def load_romanization(path: str | Path) -> RomanizationTable:
    """Read a ``character<TAB>roman`` TSV file."""
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            ch, roman = line.split("\t", 1)
            mapping[ch] = roman
    return RomanizationTable(mapping=mapping)


def typing_form(word: str, table: RomanizationTable | None = None) -> str:
    """The character string a user types to produce *word*.

    Table entries take precedence.  Letters and digits outside the
    wide/fullwidth East Asian range are typed as themselves; wide
    characters without a table entry, and punctuation, contribute
    nothing.  May be empty (e.g. for punctuation-only tokens or
    untabled CJK words).
    """
    parts = []
    for ch in word:
        if table is not None and ch in table.mapping:
            parts.append(table.mapping[ch])
        elif (ch.isalpha() or ch.isdigit()) and unicodedata.east_asian_width(ch) not in ("W", "F"):
            parts.append(ch)
    return "".join(parts)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    max_context_len: int = 4
    typed_len_policy: str = "uniform"
    context_adjacency: bool = False

    def __post_init__(self) -> None:
        if self.max_context_len < 0:
            raise ValueError("max_context_len must be >= 0")
        if self.typed_len_policy not in TYPED_LEN_POLICIES:
            raise ValueError(f"unknown typed_len_policy {self.typed_len_policy!r}")


def _uniform_typed_len(rng: random.Random, form_len: int) -> int:
    return rng.randint(1, form_len)


def _short_biased_typed_len(rng: random.Random, form_len: int) -> int:
    # Geometric-ish preference for short prefixes; still covers all lengths.
    return min(form_len, 1 + min(rng.randrange(form_len), rng.randrange(form_len)))


TYPED_LEN_POLICIES = {
    "uniform": _uniform_typed_len,
    "short": _short_biased_typed_len,
}


@dataclass(frozen=True)
class WlacExample:
    """One completion instance derived from a sentence pair."""

    source: tuple[str, ...]
    left_context: tuple[str, ...]
    right_context: tuple[str, ...]
    typed: str
    label: str
    full_target: tuple[str, ...]
    pair_id: str

    @property
    def context_type(self) -> str:
        if self.left_context and self.right_context:
            return "bi"
        if self.left_context:
            return "prefix"
        if self.right_context:
            return "suffix"
        return "zero"

    @property
    def context_len(self) -> int:
        return len(self.left_context) + len(self.right_context)

    def validate(self, table: RomanizationTable | None = None) -> None:
        """Raise ``AssertionError`` unless every structural invariant holds."""
        assert self.source, "source must be nonempty"
        assert self.typed, "typed must be nonempty"
        form = typing_form(self.label, table)
        assert form.startswith(self.typed) or form == self.typed, (
            f"typed {self.typed!r} is not a prefix of typing form {form!r}"
        )
        assert 1 <= len(self.typed) <= len(form)
        assert self.label in self.full_target, "label must occur in full_target"
        assert any(
            self.full_target[p] == self.label
            and _contiguous_in(self.left_context, self.full_target[:p])
            and _contiguous_in(self.right_context, self.full_target[p + 1 :])
            for p in range(len(self.full_target))
        ), "contexts must flank some occurrence of the label"

    def to_json(self) -> str:
        obj = {
            "source": list(self.source),
            "left_context": list(self.left_context),
            "right_context": list(self.right_context),
            "typed": self.typed,
            "label": self.label,
            "full_target": list(self.full_target),
            "pair_id": self.pair_id,
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

    @staticmethod
    def from_json(line: str) -> "WlacExample":
        obj = json.loads(line)
        return WlacExample(
            source=tuple(obj["source"]),
            left_context=tuple(obj["left_context"]),
            right_context=tuple(obj["right_context"]),
            typed=obj["typed"],
            label=obj["label"],
            full_target=tuple(obj["full_target"]),
            pair_id=obj["pair_id"],
        )


def _contiguous_in(span: Sequence[str], tokens: Sequence[str]) -> bool:
    if not span:
        return True
    n = len(span)
    return any(tuple(tokens[i : i + n]) == tuple(span) for i in range(len(tokens) - n + 1))


def _derive_rng(seed: int, pair_id: str, draw_index: int) -> random.Random:
    key = f"{seed}|{pair_id}|{draw_index}".encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return random.Random(int.from_bytes(digest[:8], "little"))


def generate_example(
    pair: ParallelPair,
    cfg: GenConfig,
    table: RomanizationTable | None = None,
    draw_index: int = 0,
) -> WlacExample:
    """Draw one example from *pair*, deterministic in (seed, pair id, draw).

    Draw order is fixed: label position, left span length and start,
    right span length and start, typed length.  Words with an empty
    typing form are excluded from the label draw; a pair with no
    typable word raises :class:`DatagenError`.
    """
    rng = _derive_rng(cfg.seed, pair.id, draw_index)
    candidates = [
        i for i, tok in enumerate(pair.target) if typing_form(tok, table)
    ]
    if not candidates:
        raise DatagenError(f"pair {pair.id} has no typable target word")
    pos = candidates[rng.randrange(len(candidates))]
    label = pair.target[pos]

    left_part = pair.target[:pos]
    right_part = pair.target[pos + 1 :]

    l_len = rng.randint(0, min(len(left_part), cfg.max_context_len))
    if cfg.context_adjacency:
        left = left_part[len(left_part) - l_len :] if l_len else ()
    else:
        l_start = rng.randint(0, len(left_part) - l_len)
        left = left_part[l_start : l_start + l_len]

    r_len = rng.randint(0, min(len(right_part), cfg.max_context_len))
    if cfg.context_adjacency:
        right = right_part[:r_len]
    else:
        r_start = rng.randint(0, len(right_part) - r_len)
        right = right_part[r_start : r_start + r_len]

    form = typing_form(label, table)
    typed_len = TYPED_LEN_POLICIES[cfg.typed_len_policy](rng, len(form))
    return WlacExample(
        source=pair.source,
        left_context=tuple(left),
        right_context=tuple(right),
        typed=form[:typed_len],
        label=label,
        full_target=pair.target,
        pair_id=pair.id,
    )


def generate_dataset(
    pairs: Sequence[ParallelPair],
    per_pair: int,
    cfg: GenConfig,
    table: RomanizationTable | None = None,
) -> list[WlacExample]:
    """``per_pair`` examples per usable pair, in (pair, draw) order."""
    if per_pair < 1:
        raise ValueError("per_pair must be >= 1")
    examples: list[WlacExample] = []
    failed = 0
    for pair in pairs:
        try:
            for j in range(per_pair):
                examples.append(generate_example(pair, cfg, table, draw_index=j))
        except DatagenError:
            failed += 1
    if failed:
        logger.warning("skipped %d pair(s) with no typable target word", failed)
    if not examples:
        raise DatagenError("no examples could be generated")
    return examples


def save_dataset(examples: Iterable[WlacExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(ex.to_json() + "\n")


def load_dataset(path: str | Path, limit: int | None = None) -> list[WlacExample]:
    examples: list[WlacExample] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if limit is not None and len(examples) >= limit:
                break
            line = line.strip()
            if line:
                examples.append(WlacExample.from_json(line))
    return examples


# -- deterministic toy translation task -------------------------------

_SRC_LETTERS = "klmnprstvz"
_TGT_LETTERS = "ab"


def _pseudo_words(rng: random.Random, count: int, letters: str, lo: int, hi: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < count:
        w = "".join(rng.choice(letters) for _ in range(rng.randint(lo, hi)))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def make_toy_corpus(
    size: int,
    vocab_size: int = 100,
    min_len: int = 5,
    max_len: int = 12,
    seed: int = 0,
) -> list[ParallelPair]:
    """A learnable-but-nontrivial synthetic translation corpus.

    Source sentences draw words (with a mild frequency skew) from a
    fixed pseudo-word alphabet; the target applies a per-word
    dictionary and then swaps every adjacent position pair (2i, 2i+1).
    Source and target alphabets use disjoint letter sets, and target
    words share first letters heavily, so short typed prefixes stay
    ambiguous.
    """
    if vocab_size < 10:
        raise ValueError("vocab_size must be >= 10")
    if not (1 <= min_len <= max_len):
        raise ValueError("need 1 <= min_len <= max_len")
    rng = random.Random(seed)
    src_words = _pseudo_words(rng, vocab_size, _SRC_LETTERS, 3, 6)
    tgt_words = _pseudo_words(rng, vocab_size, _TGT_LETTERS, 4, 8)
    mapping = dict(zip(src_words, tgt_words))
    weights = [1.0 / (i + 5) for i in range(vocab_size)]

    pairs: list[ParallelPair] = []
    for n in range(size):
        length = rng.randint(min_len, max_len)
        source = rng.choices(src_words, weights=weights, k=length)
        target = [mapping[w] for w in source]
        for i in range(0, length - 1, 2):
            target[i], target[i + 1] = target[i + 1], target[i]
        pairs.append(
            ParallelPair(id=f"toy-{n}", source=tuple(source), target=tuple(target))
        )
    return pairs


def toy_word_mapping(vocab_size: int = 100, seed: int = 0) -> dict[str, str]:
    """The source->target dictionary used by :func:`make_toy_corpus`."""
    rng = random.Random(seed)
    src_words = _pseudo_words(rng, vocab_size, _SRC_LETTERS, 3, 6)
    tgt_words = _pseudo_words(rng, vocab_size, _TGT_LETTERS, 4, 8)
    return dict(zip(src_words, tgt_words))
