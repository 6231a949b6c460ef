"""Backbone models for word-level auto-completion.

Two architectures share one input format and one encoder:

* ``aioe`` - a Transformer encoder reads the flattened session
  ``[source] <sep> [left ctx] <tip> [typed chars] <mask> [right ctx]``
  and a linear head predicts the word at the ``<mask>`` slot.
* ``aioe_bpe`` - the same encoder over sub-word units, plus a causal
  Transformer decoder that generates the target word piece by piece.

Either backbone can carry an additional translation decoder that emits
the full target sentence from the same encoder memory; its output
projection may be shared with the completion head so that both tasks
write to one prediction layer.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, asdict
from typing import NamedTuple, Sequence

import torch
from torch import Tensor, nn

from .bpe import BpeModel
from .corpus import BOS, EOS, MASK, SEP, TIP, Vocabulary
from .datagen import RomanizationTable, WlacExample, typing_form


class EncodingError(Exception):
    """Input cannot fit max_len even after truncation."""


class CapabilityError(Exception):
    """Operation requires a component this model does not have."""


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "aioe"
    layers: int = 6
    decoder_layers: int = 6
    dim: int = 512
    heads: int = 8
    ffn_dim: int = 2048
    dropout: float = 0.1
    max_len: int = 256
    share_wlac_mt_projection: bool = True
    share_embeddings: bool = True
    vocab_size: int = 0  # filled in when the vocabulary is known

    def __post_init__(self) -> None:
        if self.arch not in ("aioe", "aioe_bpe"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.layers < 1 or self.decoder_layers < 1:
            raise ValueError("need at least one layer")


def desk_scale_config(arch: str = "aioe", vocab_size: int = 0) -> ModelConfig:
    """Small preset that keeps end-to-end runs in CPU-minutes."""
    return ModelConfig(
        arch=arch,
        layers=2,
        decoder_layers=2,
        dim=64,
        heads=4,
        ffn_dim=128,
        dropout=0.0,
        max_len=128,
        vocab_size=vocab_size,
    )


@dataclass(frozen=True)
class EncoderInput:
    """Flattened id sequence with the mask slot and segment spans."""

    ids: tuple[int, ...]
    mask_position: int
    segments: dict[str, tuple[int, int]] = field(compare=False, default_factory=dict)

    def __len__(self) -> int:
        return len(self.ids)


def encode_input(
    ex: WlacExample,
    vocab: Vocabulary,
    cfg: ModelConfig,
    bpe: BpeModel | None = None,
) -> EncoderInput:
    """Build ``[s] <sep> [c_l] <tip> [t chars] <mask> [c_r]`` ids.

    With a BPE model, source and context tokens expand to their pieces.
    Typed characters always use the character block.  When the sequence
    exceeds ``cfg.max_len``, source ids drop from the left, then left
    context from the left, then right context from the right; the typed
    block and structure tokens are never dropped.
    """

    def tok_ids(tokens: Sequence[str]) -> list[int]:
        out: list[int] = []
        for tok in tokens:
            if bpe is None:
                out.append(vocab.id_of(tok))
            else:
                out.extend(vocab.id_of(p) for p in bpe.encode(tok))
        return out

    src = tok_ids(ex.source)
    left = tok_ids(ex.left_context)
    right = tok_ids(ex.right_context)
    typed = [vocab.char_id_of(c) for c in ex.typed]

    sep_id, tip_id, mask_id = vocab.id_of(SEP), vocab.id_of(TIP), vocab.id_of(MASK)
    fixed = 3 + len(typed)  # <sep> <tip> <mask> and the typed block
    overflow = len(src) + len(left) + len(right) + fixed - cfg.max_len
    if overflow > 0:
        take = min(overflow, len(src))
        src = src[take:]
        overflow -= take
    if overflow > 0:
        take = min(overflow, len(left))
        left = left[take:]
        overflow -= take
    if overflow > 0:
        take = min(overflow, len(right))
        right = right[: len(right) - take]
        overflow -= take
    if overflow > 0:
        raise EncodingError(
            f"typed block of {len(typed)} chars cannot fit max_len={cfg.max_len}"
        )

    ids = src + [sep_id] + left + [tip_id] + typed + [mask_id] + right
    mask_position = len(src) + 1 + len(left) + 1 + len(typed)
    n = len(src)
    segments = {"source": (0, n)}
    segments["left_context"] = (n + 1, n + 1 + len(left))
    t0 = n + 1 + len(left) + 1
    segments["typed"] = (t0, t0 + len(typed))
    segments["right_context"] = (mask_position + 1, len(ids))
    return EncoderInput(ids=tuple(ids), mask_position=mask_position, segments=segments)


class EncodedMemory(NamedTuple):
    """Encoder output plus its padding mask, ready for cross-attention."""

    hidden: Tensor  # [B, L, D]
    padding_mask: Tensor  # [B, L] bool, True at padded slots


def collate_inputs(
    inputs: Sequence[EncoderInput], pad_id: int, device: torch.device | None = None
) -> tuple[Tensor, Tensor, Tensor]:
    """Pad a batch of inputs to (ids, padding_mask, mask_positions)."""
    max_len = max(len(inp) for inp in inputs)
    ids = torch.full((len(inputs), max_len), pad_id, dtype=torch.long, device=device)
    pad_mask = torch.ones(len(inputs), max_len, dtype=torch.bool, device=device)
    positions = torch.empty(len(inputs), dtype=torch.long, device=device)
    for i, inp in enumerate(inputs):
        ids[i, : len(inp)] = torch.tensor(inp.ids, dtype=torch.long)
        pad_mask[i, : len(inp)] = False
        positions[i] = inp.mask_position
    return ids, pad_mask, positions


class _FeedForward(nn.Module):
    def __init__(self, dim: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(dim, ffn_dim)
        self.fc2 = nn.Linear(ffn_dim, dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.dropout(torch.relu(self.fc1(x))))


class _EncoderLayer(nn.Module):
    """Pre-LN self-attention block."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.attn = nn.MultiheadAttention(
            cfg.dim, cfg.heads, dropout=cfg.dropout, batch_first=True
        )
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.ffn = _FeedForward(cfg.dim, cfg.ffn_dim, cfg.dropout)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: Tensor, pad_mask: Tensor) -> Tensor:
        h = self.ln1(x)
        a, _ = self.attn(h, h, h, key_padding_mask=pad_mask, need_weights=False)
        x = x + self.dropout(a)
        x = x + self.dropout(self.ffn(self.ln2(x)))
        return x


class _DecoderLayer(nn.Module):
    """Pre-LN causal self-attention + cross-attention block."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.dim)
        self.self_attn = nn.MultiheadAttention(
            cfg.dim, cfg.heads, dropout=cfg.dropout, batch_first=True
        )
        self.ln2 = nn.LayerNorm(cfg.dim)
        self.cross_attn = nn.MultiheadAttention(
            cfg.dim, cfg.heads, dropout=cfg.dropout, batch_first=True
        )
        self.ln3 = nn.LayerNorm(cfg.dim)
        self.ffn = _FeedForward(cfg.dim, cfg.ffn_dim, cfg.dropout)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: Tensor, memory: EncodedMemory, causal: Tensor) -> Tensor:
        h = self.ln1(x)
        a, _ = self.self_attn(h, h, h, attn_mask=causal, need_weights=False)
        x = x + self.dropout(a)
        h = self.ln2(x)
        a, _ = self.cross_attn(
            h,
            memory.hidden,
            memory.hidden,
            key_padding_mask=memory.padding_mask,
            need_weights=False,
        )
        x = x + self.dropout(a)
        x = x + self.dropout(self.ffn(self.ln3(x)))
        return x


class Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig, pad_id: int):
        super().__init__()
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.dim, padding_idx=pad_id)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.dim)
        self.dropout = nn.Dropout(cfg.dropout)
        self.layers = nn.ModuleList(_EncoderLayer(cfg) for _ in range(cfg.layers))
        self.ln_out = nn.LayerNorm(cfg.dim)

    def forward(self, ids: Tensor, pad_mask: Tensor) -> Tensor:
        positions = torch.arange(ids.size(1), device=ids.device)
        x = self.dropout(self.tok_emb(ids) + self.pos_emb(positions))
        for layer in self.layers:
            x = layer(x, pad_mask)
        return self.ln_out(x)


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig, pad_id: int):
        super().__init__()
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.dim, padding_idx=pad_id)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.dim)
        self.dropout = nn.Dropout(cfg.dropout)
        self.layers = nn.ModuleList(
            _DecoderLayer(cfg) for _ in range(cfg.decoder_layers)
        )
        self.ln_out = nn.LayerNorm(cfg.dim)
        self.proj = nn.Linear(cfg.dim, cfg.vocab_size, bias=False)

    def forward(self, prefix: Tensor, memory: EncodedMemory) -> Tensor:
        """Teacher-forced logits for every position, [B, T, V]."""
        t = prefix.size(1)
        causal = torch.triu(
            torch.ones(t, t, dtype=torch.bool, device=prefix.device), diagonal=1
        )
        positions = torch.arange(t, device=prefix.device)
        x = self.dropout(self.tok_emb(prefix) + self.pos_emb(positions))
        for layer in self.layers:
            x = layer(x, memory, causal)
        return self.proj(self.ln_out(x))


class JointModel(nn.Module):
    """Shared encoder with a completion head and an optional MT decoder.

    The model owns its vocabulary (and BPE model / romanization table
    when applicable), so a loaded checkpoint is self-contained for
    inference.  Immutable once built, except under the training loop.
    """

    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocabulary,
        bpe: BpeModel | None = None,
        table: RomanizationTable | None = None,
        with_mt_decoder: bool = True,
    ):
        super().__init__()
        if config.vocab_size != vocab.total_size:
            config = ModelConfig(**{**asdict(config), "vocab_size": vocab.total_size})
        if config.arch == "aioe_bpe" and bpe is None:
            raise ValueError("aioe_bpe requires a BPE model")
        self.config = config
        self.vocab = vocab
        self.bpe = bpe
        self.table = table
        pad = vocab.pad_id
        self.encoder = Encoder(config, pad)

        if config.arch == "aioe":
            self.wlac_proj = nn.Linear(config.dim, config.vocab_size, bias=False)
            self.wlac_decoder = None
        else:
            self.wlac_decoder = Decoder(config, pad)
            self.wlac_proj = None
            if config.share_embeddings:
                self.wlac_decoder.tok_emb = self.encoder.tok_emb

        self.mt_decoder = Decoder(config, pad) if with_mt_decoder else None
        if self.mt_decoder is not None:
            if config.arch == "aioe_bpe" and config.share_embeddings:
                self.mt_decoder.tok_emb = self.encoder.tok_emb
            if config.share_wlac_mt_projection:
                if config.arch == "aioe":
                    self.mt_decoder.proj = self.wlac_proj
                else:
                    self.mt_decoder.proj = self.wlac_decoder.proj

        self._prefix_index: list[tuple[str, int]] | None = None

    # -- construction helpers -----------------------------------------
    @property
    def has_mt_decoder(self) -> bool:
        return self.mt_decoder is not None

    def make_input(self, ex: WlacExample) -> EncoderInput:
        return encode_input(ex, self.vocab, self.config, self.bpe)

    # -- forward passes ------------------------------------------------
    def encode_batch(self, inputs: Sequence[EncoderInput]) -> tuple[EncodedMemory, Tensor]:
        device = next(self.parameters()).device
        ids, pad_mask, positions = collate_inputs(inputs, self.vocab.pad_id, device)
        hidden = self.encoder(ids, pad_mask)
        return EncodedMemory(hidden, pad_mask), positions

    def encode(self, inp: EncoderInput) -> EncodedMemory:
        memory, _ = self.encode_batch([inp])
        return memory

    def wlac_logits_batch(self, inputs: Sequence[EncoderInput]) -> Tensor:
        """Mask-slot logits for a batch, [B, V].  Word-level arch only."""
        if self.wlac_proj is None:
            raise CapabilityError("sub-word arch predicts via forward_bpe_step")
        memory, positions = self.encode_batch(inputs)
        rows = torch.arange(len(inputs), device=positions.device)
        return self.wlac_proj(memory.hidden[rows, positions])

    def forward_wlac(self, inp: EncoderInput) -> Tensor | EncodedMemory:
        """Completion forward pass for one input.

        Word-level arch: logits over the vocabulary, shape [V].
        Sub-word arch: the encoder memory to drive the piece decoder.
        """
        if self.config.arch == "aioe":
            return self.wlac_logits_batch([inp])[0]
        return self.encode(inp)

    def _decoder_step(self, decoder: Decoder, memory: EncodedMemory, prefix: Sequence[int]) -> Tensor:
        if not prefix or prefix[0] != self.vocab.id_of(BOS):
            raise ValueError("prefix must begin with <bos>")
        if len(prefix) > self.config.max_len:
            raise EncodingError(f"prefix of {len(prefix)} exceeds max_len")
        ids = torch.tensor([list(prefix)], dtype=torch.long, device=memory.hidden.device)
        return decoder(ids, memory)[0, -1]

    def forward_bpe_step(self, memory: EncodedMemory, prefix: Sequence[int]) -> Tensor:
        """Next-piece logits [V] for the completion decoder."""
        if self.wlac_decoder is None:
            raise CapabilityError("word-level arch has no piece decoder")
        return self._decoder_step(self.wlac_decoder, memory, prefix)

    def forward_mt_step(self, memory: EncodedMemory, prefix: Sequence[int]) -> Tensor:
        """Next-token logits [V] for the translation decoder."""
        if self.mt_decoder is None:
            raise CapabilityError("model has no MT decoder (stripped checkpoint?)")
        return self._decoder_step(self.mt_decoder, memory, prefix)

    # -- inference helpers ----------------------------------------------
    def prefix_candidates(self, typed: str) -> list[int]:
        """Vocabulary token ids whose typing form starts with *typed*."""
        if self._prefix_index is None:
            index = []
            for idx in self.vocab.token_id_range:
                form = typing_form(self.vocab.token_of(idx), self.table)
                if form:
                    index.append((form, idx))
            index.sort()
            self._prefix_index = index
        lo = bisect.bisect_left(self._prefix_index, (typed,))
        out = []
        for form, idx in self._prefix_index[lo:]:
            if not form.startswith(typed):
                break
            out.append(idx)
        return out

    def generation_mask(self) -> Tensor:
        """Additive logit mask allowing vocabulary tokens and <eos> only."""
        mask = torch.full((self.vocab.total_size,), float("-inf"))
        rng = self.vocab.token_id_range
        mask[rng.start : rng.stop] = 0.0
        mask[self.vocab.id_of(EOS)] = 0.0
        return mask


def build_model(
    config: ModelConfig,
    vocab: Vocabulary,
    bpe: BpeModel | None = None,
    table: RomanizationTable | None = None,
    with_mt_decoder: bool = True,
    seed: int = 0,
) -> JointModel:
    """Construct a model with reproducible parameter initialization."""
    torch.manual_seed(seed)
    model = JointModel(config, vocab, bpe, table, with_mt_decoder=with_mt_decoder)
    for name, param in model.named_parameters():
        if param.dim() >= 2:
            nn.init.normal_(param, mean=0.0, std=0.02)
        elif name.endswith("bias"):
            nn.init.zeros_(param)
    with torch.no_grad():
        model.encoder.tok_emb.weight[vocab.pad_id].zero_()
    return model
