"""Inference-time prediction and hypothesis generation.

Word-level models rank the vocabulary tokens compatible with the typed
prefix by their mask-slot probability (hard masking before softmax).
Sub-word models beam-search the piece decoder and keep the beams whose
detokenized word still matches the prefix, falling back to the best
unfiltered beam rather than returning nothing.

Beam scores are length-normalized log-probabilities: the cumulative
log-probability of the generated pieces (including ``<eos>`` when the
hypothesis ends with it) divided by the piece count.  Candidate ties
break lexicographically so results are stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch

from .corpus import BOS, EOS, Vocabulary
from .datagen import RomanizationTable, WlacExample, typing_form
from .model import CapabilityError, EncodedMemory, JointModel


@dataclass(frozen=True)
class PredictionSet:
    """Ranked completion candidates for one example."""

    candidates: tuple[tuple[str, float], ...]
    k: int
    empty: bool = False
    fallback: bool = False

    def words(self) -> list[str]:
        return [w for w, _ in self.candidates]

    @property
    def top1(self) -> str | None:
        return self.candidates[0][0] if self.candidates else None


@dataclass(frozen=True)
class HypothesisSet:
    """Top translations plus the case-folded set of their tokens."""

    hypotheses: tuple[tuple[tuple[str, ...], float], ...]
    word_set: frozenset[str] = field(default=frozenset())

    @staticmethod
    def from_hypotheses(
        hypotheses: Sequence[tuple[Sequence[str], float]],
    ) -> "HypothesisSet":
        hyps = tuple((tuple(tokens), float(score)) for tokens, score in hypotheses)
        words = frozenset(tok.casefold() for tokens, _ in hyps for tok in tokens)
        return HypothesisSet(hypotheses=hyps, word_set=words)


def _ranked(pairs: dict[str, float], k: int) -> tuple[tuple[str, float], ...]:
    ordered = sorted(pairs.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(ordered[:k])


def predict_topk(
    model: JointModel,
    ex: WlacExample,
    k: int,
    vocab: Vocabulary | None = None,
    table: RomanizationTable | None = None,
    beam_width: int | None = None,
    max_pieces: int = 16,
) -> PredictionSet:
    """Top-k words whose typing form extends the typed prefix.

    ``vocab`` and ``table`` default to the model's own; passing them
    exists so callers can share one loaded resource across models.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    vocab = vocab or model.vocab
    table = table or model.table

    with torch.inference_mode():
        if model.config.arch == "aioe":
            candidates = model.prefix_candidates(ex.typed)
            if not candidates:
                return PredictionSet(candidates=(), k=k, empty=True)
            logits = model.forward_wlac(model.make_input(ex))
            idx = torch.tensor(candidates, dtype=torch.long, device=logits.device)
            probs = torch.softmax(logits[idx].double(), dim=-1)
            scored: dict[str, float] = {}
            for token_id, p in zip(candidates, probs.tolist()):
                word = vocab.token_of(token_id)
                if word not in scored or p > scored[word]:
                    scored[word] = p
            return PredictionSet(candidates=_ranked(scored, k), k=k)

        memory = model.encode(model.make_input(ex))
        width = beam_width if beam_width is not None else max(2 * k, 8)
        beams = beam_search(model, memory, width, max_pieces, head="wlac")
        eos = vocab.id_of(EOS)
        matched: dict[str, float] = {}
        unfiltered: dict[str, float] = {}
        for pieces, score in beams:
            symbols = [vocab.token_of(i) for i in pieces if i != eos]
            if not symbols:
                continue
            word = model.bpe.decode(symbols)
            if not word:
                continue
            if word not in unfiltered or score > unfiltered[word]:
                unfiltered[word] = score
            if typing_form(word, table).startswith(ex.typed):
                if word not in matched or score > matched[word]:
                    matched[word] = score
        if matched:
            return PredictionSet(candidates=_ranked(matched, k), k=k)
        if unfiltered:
            return PredictionSet(candidates=_ranked(unfiltered, 1), k=k, fallback=True)
        return PredictionSet(candidates=(), k=k, empty=True)


def predict_topk_batch(
    model: JointModel,
    examples: Sequence[WlacExample],
    k: int,
    batch_size: int = 256,
    **kwargs,
) -> list[PredictionSet]:
    """predict_topk over many examples; batches encoder passes for the
    word-level arch, falls back to per-example beams otherwise."""
    if model.config.arch != "aioe":
        return [predict_topk(model, ex, k, **kwargs) for ex in examples]
    out: list[PredictionSet] = []
    vocab = model.vocab
    with torch.inference_mode():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            inputs = [model.make_input(ex) for ex in chunk]
            logits = model.wlac_logits_batch(inputs)
            for row, ex in zip(logits, chunk):
                candidates = model.prefix_candidates(ex.typed)
                if not candidates:
                    out.append(PredictionSet(candidates=(), k=k, empty=True))
                    continue
                idx = torch.tensor(candidates, dtype=torch.long, device=row.device)
                probs = torch.softmax(row[idx].double(), dim=-1)
                scored = {
                    vocab.token_of(t): p for t, p in zip(candidates, probs.tolist())
                }
                out.append(PredictionSet(candidates=_ranked(scored, k), k=k))
    return out


def beam_search(
    model: JointModel,
    memory: EncodedMemory,
    width: int,
    max_pieces: int,
    head: str = "wlac",
) -> list[tuple[tuple[int, ...], float]]:
    """Length-normalized beam search over one encoder memory.

    Returns up to ``width`` finished hypotheses as (piece ids, score),
    best first.  A hypothesis finishes at ``<eos>`` (whose
    log-probability counts toward the score) or at ``max_pieces``.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if max_pieces < 1:
        raise ValueError("max_pieces must be >= 1")
    if head == "wlac":
        decoder = model.wlac_decoder
        if decoder is None:
            raise CapabilityError("word-level arch has no piece decoder")
    elif head == "mt":
        decoder = model.mt_decoder
        if decoder is None:
            raise CapabilityError("model has no MT decoder (stripped checkpoint?)")
    else:
        raise ValueError(f"unknown head {head!r}")

    device = memory.hidden.device
    bos = model.vocab.id_of(BOS)
    eos = model.vocab.id_of(EOS)
    allowed = model.generation_mask().to(device=device, dtype=torch.float64)

    # (prefix ids after <bos>, cumulative log-prob)
    active: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[int, ...], float]] = []

    with torch.inference_mode():
        for step in range(max_pieces):
            prefixes = torch.tensor(
                [(bos,) + pieces for pieces, _ in active], dtype=torch.long, device=device
            )
            mem = EncodedMemory(
                memory.hidden.expand(len(active), -1, -1),
                memory.padding_mask.expand(len(active), -1),
            )
            logits = decoder(prefixes, mem)[:, -1, :]
            logp = torch.log_softmax(logits.double(), dim=-1) + allowed

            expansions: list[tuple[float, tuple[int, ...], int]] = []
            per_beam = min(width + 1, logp.size(-1))
            top = torch.topk(logp, per_beam, dim=-1)
            for b, (pieces, cum) in enumerate(active):
                for token_id, token_lp in zip(top.indices[b].tolist(), top.values[b].tolist()):
                    if token_lp == float("-inf"):
                        continue
                    expansions.append((cum + token_lp, pieces, token_id))
            expansions.sort(key=lambda e: (-e[0], e[1], e[2]))

            next_active: list[tuple[tuple[int, ...], float]] = []
            for cum, pieces, token_id in expansions:
                seq = pieces + (token_id,)
                if token_id == eos:
                    finished.append((seq, cum / len(seq)))
                elif len(next_active) < width:
                    if len(seq) >= max_pieces:
                        finished.append((seq, cum / len(seq)))
                    else:
                        next_active.append((seq, cum))
            active = next_active
            if not active:
                break

    finished.sort(key=lambda h: (-h[1], h[0]))
    if not finished and active:
        # Defensive: cannot normally happen since max_pieces finishes beams.
        pieces, cum = active[0]
        finished = [(pieces, cum / max(1, len(pieces)))]
    return finished[:width]


def pieces_to_words(model: JointModel, pieces: Sequence[int]) -> list[str]:
    """Split generated sub-word ids into words at end-marker boundaries."""
    vocab = model.vocab
    eos = vocab.id_of(EOS)
    marker = model.bpe.end_marker
    words: list[str] = []
    current: list[str] = []
    for piece_id in pieces:
        if piece_id == eos:
            break
        symbol = vocab.token_of(piece_id)
        current.append(symbol)
        if symbol.endswith(marker):
            words.append(model.bpe.decode(current))
            current = []
    if current:  # trailing partial word (hit max_pieces before a marker)
        words.append(model.bpe.decode(current))
    return [w for w in words if w]


def translate(
    model: JointModel,
    ex: WlacExample,
    beams: int = 5,
    max_tokens: int | None = None,
) -> HypothesisSet:
    """Full-sentence hypotheses from the translation decoder.

    The decoder consumes the same encoded input as completion (source,
    contexts, and typed characters all condition the translation).
    """
    if not model.has_mt_decoder:
        raise CapabilityError("model has no MT decoder (stripped checkpoint?)")
    if max_tokens is None:
        max_tokens = min(model.config.max_len - 1, 4 * len(ex.source) + 8)
    memory = model.encode(model.make_input(ex))
    raw = beam_search(model, memory, beams, max_tokens, head="mt")
    eos = model.vocab.id_of(EOS)
    hyps: list[tuple[list[str], float]] = []
    for pieces, score in raw:
        if model.config.arch == "aioe":
            tokens = [model.vocab.token_of(i) for i in pieces if i != eos]
        else:
            tokens = pieces_to_words(model, pieces)
        hyps.append((tokens, score))
    return HypothesisSet.from_hypotheses(hyps)
