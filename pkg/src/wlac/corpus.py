"""Parallel-corpus ingestion and vocabulary construction.

A corpus file is UTF-8 plain text, one ``source<TAB>target`` pair per
line, both sides whitespace-tokenized.  The vocabulary maps tokens to
integer ids with a fixed block layout::

    [ specials | tokens | chars ]

Specials occupy the lowest ids in the order of :data:`SPECIAL_TOKENS`.
Token ids follow in frequency order (ties broken lexicographically).
Character entries, used to embed typed sequences, form a third block
with their own id range so that a single-character word and the typed
character never collide.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
SEP = "<sep>"
TIP = "<tip>"
MASK = "<mask>"
BOS = "<bos>"
EOS = "<eos>"

#: Reserved tokens, in id order.  This order is part of the vocabulary
#: file format and must not change.
SPECIAL_TOKENS: tuple[str, ...] = (PAD, UNK, SEP, TIP, MASK, BOS, EOS)

_ASCII_LOWER = "abcdefghijklmnopqrstuvwxyz"


class CorpusError(Exception):
    """Raised when a corpus file yields no usable pairs."""


@dataclass(frozen=True)
class ParallelPair:
    """One sentence pair; both sides are nonempty token sequences."""

    id: str
    source: tuple[str, ...]
    target: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.source or not self.target:
            raise ValueError("both sides of a ParallelPair must be nonempty")


def load_parallel(path: str | Path, limit: int | None = None) -> list[ParallelPair]:
    """Read ``source<TAB>target`` pairs from *path* in file order.

    Lines with an empty side (or no tab) are skipped and counted; the
    skip count is logged as a warning.  Raises :class:`CorpusError` if
    nothing usable remains, and the usual ``OSError`` if the file
    cannot be read.
    """
    pairs: list[ParallelPair] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if limit is not None and len(pairs) >= limit:
                break
            line = line.rstrip("\n")
            if "\t" not in line:
                skipped += 1
                continue
            src_text, tgt_text = line.split("\t", 1)
            source = tuple(src_text.split())
            target = tuple(tgt_text.split())
            if not source or not target:
                skipped += 1
                continue
            pairs.append(ParallelPair(id=str(lineno), source=source, target=target))
    if skipped:
        logger.warning("skipped %d unusable line(s) in %s", skipped, path)
    if not pairs:
        raise CorpusError(f"no usable pairs in {path}")
    return pairs


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token<->id map with a reserved special block.

    ``tokens`` holds the ranked in-vocabulary tokens and ``chars`` the
    character inventory for typed sequences.  Lookup of an unknown
    token (or character) returns the ``<unk>`` id.
    """

    tokens: tuple[str, ...]
    chars: tuple[str, ...]
    specials: tuple[str, ...] = SPECIAL_TOKENS
    _token_ids: dict[str, int] = field(init=False, repr=False, compare=False)
    _char_ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        token_ids: dict[str, int] = {}
        for i, tok in enumerate(self.specials):
            token_ids[tok] = i
        base = len(self.specials)
        for i, tok in enumerate(self.tokens):
            if tok in token_ids:
                raise ValueError(f"duplicate token in vocabulary: {tok!r}")
            token_ids[tok] = base + i
        char_base = base + len(self.tokens)
        char_ids = {c: char_base + i for i, c in enumerate(self.chars)}
        if len(char_ids) != len(self.chars):
            raise ValueError("duplicate character entry in vocabulary")
        object.__setattr__(self, "_token_ids", token_ids)
        object.__setattr__(self, "_char_ids", char_ids)

    # -- sizes ---------------------------------------------------------
    @property
    def n_specials(self) -> int:
        return len(self.specials)

    @property
    def size(self) -> int:
        """Specials plus ranked tokens (the ``max_size`` budget)."""
        return len(self.specials) + len(self.tokens)

    @property
    def total_size(self) -> int:
        """Full id range, including the character block."""
        return self.size + len(self.chars)

    # -- lookups -------------------------------------------------------
    @property
    def pad_id(self) -> int:
        return self._token_ids[PAD]

    @property
    def unk_id(self) -> int:
        return self._token_ids[UNK]

    def id_of(self, token: str) -> int:
        return self._token_ids.get(token, self.unk_id)

    def char_id_of(self, char: str) -> int:
        return self._char_ids.get(char, self.unk_id)

    def token_of(self, idx: int) -> str:
        ns, nt = len(self.specials), len(self.tokens)
        if 0 <= idx < ns:
            return self.specials[idx]
        if idx < ns + nt:
            return self.tokens[idx - ns]
        if idx < self.total_size:
            return self.chars[idx - ns - nt]
        raise IndexError(f"id {idx} out of range for vocabulary of {self.total_size}")

    def __contains__(self, token: str) -> bool:
        return token in self._token_ids

    @property
    def token_id_range(self) -> range:
        """Ids of the ranked token block (excludes specials and chars)."""
        return range(len(self.specials), self.size)

    def sha256(self) -> str:
        """Content hash used for checkpoint/vocab compatibility checks."""
        h = hashlib.sha256()
        for block in (self.specials, self.tokens, self.chars):
            for item in block:
                h.update(item.encode("utf-8"))
                h.update(b"\x00")
            h.update(b"\x01")
        return h.hexdigest()


def build_vocab(
    pairs: Sequence[ParallelPair],
    side: str = "joint",
    max_size: int = 120_000,
    min_freq: int = 1,
) -> Vocabulary:
    """Build a vocabulary from one or both corpus sides.

    Tokens are ranked by descending frequency, then lexicographically,
    and kept while total size (specials + tokens) stays within
    ``max_size`` and frequency is at least ``min_freq``.  The character
    block collects every character of the kept side(s) plus ASCII
    lowercase, so romanized typed sequences always have embeddings.
    """
    if side not in ("source", "target", "joint"):
        raise ValueError(f"side must be source|target|joint, got {side!r}")
    if max_size <= len(SPECIAL_TOKENS):
        raise ValueError("max_size must exceed the number of special tokens")

    counts: Counter[str] = Counter()
    for pair in pairs:
        if side in ("source", "joint"):
            counts.update(pair.source)
        if side in ("target", "joint"):
            counts.update(pair.target)

    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    budget = max_size - len(SPECIAL_TOKENS)
    tokens = tuple(tok for tok, n in ranked[:budget] if n >= min_freq)

    chars = set(_ASCII_LOWER)
    for tok, _ in ranked:
        chars.update(tok)
    return Vocabulary(tokens=tokens, chars=tuple(sorted(chars)))


# -- vocabulary file format -------------------------------------------
# Header lines (all leading lines starting with "#"):
#   #wlac-vocab v1
#   #special <tok>     one per special, in id order
#   #char <c>          one per character entry, in id order
# Body: one token per line; body line i holds the token with id
# n_specials + i.  Character ids start at n_specials + n_tokens.

_MAGIC = "#wlac-vocab v1"


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    for tok in vocab.tokens:
        if tok.startswith(("#special ", "#char ")) or tok == _MAGIC:
            raise ValueError(f"token {tok!r} collides with the header grammar")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_MAGIC + "\n")
        for tok in vocab.specials:
            fh.write(f"#special {tok}\n")
        for c in vocab.chars:
            fh.write(f"#char {c}\n")
        for tok in vocab.tokens:
            fh.write(tok + "\n")


def load_vocab(path: str | Path) -> Vocabulary:
    specials: list[str] = []
    chars: list[str] = []
    tokens: list[str] = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path} is not a vocabulary file")
    in_header = True
    for line in lines[1:]:
        if in_header and line.startswith("#special "):
            specials.append(line[len("#special "):])
        elif in_header and line.startswith("#char "):
            chars.append(line[len("#char "):])
        else:
            in_header = False
            if line:
                tokens.append(line)
    vocab = Vocabulary(tokens=tuple(tokens), chars=tuple(chars), specials=tuple(specials))
    return vocab


def save_parallel(pairs: Iterable[ParallelPair], path: str | Path) -> None:
    """Write pairs in the ``source<TAB>target`` corpus format."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(" ".join(pair.source) + "\t" + " ".join(pair.target) + "\n")
