"""Joint optimization of the completion and translation objectives.

The combined loss is ``alpha * L_wlac + (1 - alpha) * L_mt``:
cross-entropy of the masked word (or its sub-word pieces) plus
token-mean teacher-forced cross-entropy of the full target sentence.
Loss scalars are accumulated in float64 regardless of parameter
precision, so the reported breakdown satisfies the combination identity
exactly and the endpoint cases (alpha 0 and 1) are bit-exact.

At the endpoints the untouched task is skipped entirely: an alpha=1 run
never builds the translation graph, so decoder-exclusive parameters
receive no gradients and no optimizer updates.
"""

from __future__ import annotations

import json
import logging
import math
import random
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import torch
from torch import Tensor

from .corpus import BOS, EOS
from .datagen import WlacExample
from .model import CapabilityError, EncoderInput, JointModel

logger = logging.getLogger(__name__)


class TrainingDivergedError(Exception):
    """Loss became non-finite; diagnostic state was dumped if possible."""


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.75
    learning_rate: float = 5e-4
    warmup_steps: int = 400
    max_steps: int = 3000
    batch_tokens: int = 2000
    seed: int = 0
    checkpoint_every: int = 500
    mt_label_smoothing: float = 0.1
    wlac_label_smoothing: float = 0.0
    grad_clip: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    wlac_loss: float
    mt_loss: float
    combined: float


@dataclass(frozen=True)
class _Record:
    """Pre-encoded tensors-to-be for one example; static across epochs."""

    enc: EncoderInput
    wlac_label: int | None  # word-level arch
    wlac_pieces: tuple[int, ...] | None  # sub-word arch, eos-terminated
    mt_target: tuple[int, ...]  # eos-terminated

    @property
    def cost(self) -> int:
        return len(self.enc) + len(self.mt_target)


def _make_record(model: JointModel, ex: WlacExample) -> _Record:
    vocab = model.vocab
    eos = vocab.id_of(EOS)
    limit = model.config.max_len - 1
    if model.config.arch == "aioe":
        label: int | None = vocab.id_of(ex.label)
        pieces = None
        mt = [vocab.id_of(t) for t in ex.full_target]
    else:
        label = None
        pieces = tuple(
            [vocab.id_of(p) for p in model.bpe.encode(ex.label)][:limit] + [eos]
        )
        mt = [vocab.id_of(p) for t in ex.full_target for p in model.bpe.encode(t)]
    mt = mt[:limit] + [eos]
    return _Record(
        enc=model.make_input(ex),
        wlac_label=label,
        wlac_pieces=pieces,
        mt_target=tuple(mt),
    )


def _pad_targets(seqs: Sequence[Sequence[int]], bos: int, pad: int, device) -> tuple[Tensor, Tensor]:
    """(decoder input, decoder output) with teacher forcing and padding."""
    width = max(len(s) for s in seqs)
    dec_in = torch.full((len(seqs), width), pad, dtype=torch.long, device=device)
    dec_out = torch.full((len(seqs), width), pad, dtype=torch.long, device=device)
    for i, seq in enumerate(seqs):
        dec_in[i, 0] = bos
        if len(seq) > 1:
            dec_in[i, 1 : len(seq)] = torch.tensor(seq[:-1], dtype=torch.long)
        dec_out[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return dec_in, dec_out


def _token_ce(logits: Tensor, targets: Tensor, pad: int | None, smoothing: float) -> Tensor:
    """Token-mean cross-entropy, accumulated in float64."""
    logp = torch.log_softmax(logits.double(), dim=-1)
    nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    if smoothing > 0.0:
        nll = (1.0 - smoothing) * nll + smoothing * (-logp.mean(dim=-1))
    if pad is None:
        return nll.mean()
    keep = targets != pad
    return nll[keep].mean()


def _loss_tensors(
    model: JointModel,
    records: Sequence[_Record],
    *,
    need_wlac: bool,
    need_mt: bool,
    mt_label_smoothing: float = 0.0,
    wlac_label_smoothing: float = 0.0,
) -> tuple[Tensor | None, Tensor | None]:
    device = next(model.parameters()).device
    pad = model.vocab.pad_id
    bos = model.vocab.id_of(BOS)
    memory, positions = model.encode_batch([r.enc for r in records])

    wlac_t = None
    if need_wlac:
        if model.config.arch == "aioe":
            rows = torch.arange(len(records), device=device)
            logits = model.wlac_proj(memory.hidden[rows, positions])
            labels = torch.tensor([r.wlac_label for r in records], device=device)
            wlac_t = _token_ce(logits, labels, pad=None, smoothing=wlac_label_smoothing)
        else:
            dec_in, dec_out = _pad_targets(
                [r.wlac_pieces for r in records], bos, pad, device
            )
            logits = model.wlac_decoder(dec_in, memory)
            wlac_t = _token_ce(
                logits.flatten(0, 1), dec_out.flatten(), pad, wlac_label_smoothing
            )

    mt_t = None
    if need_mt:
        if model.mt_decoder is None:
            raise CapabilityError("translation loss requires the MT decoder")
        dec_in, dec_out = _pad_targets([r.mt_target for r in records], bos, pad, device)
        logits = model.mt_decoder(dec_in, memory)
        mt_t = _token_ce(
            logits.flatten(0, 1), dec_out.flatten(), pad, mt_label_smoothing
        )
    return wlac_t, mt_t


def compute_loss(
    model: JointModel,
    batch: Sequence[WlacExample],
    alpha: float,
    mt_label_smoothing: float = 0.0,
    wlac_label_smoothing: float = 0.0,
) -> LossBreakdown:
    """Loss breakdown on one batch; pure given model state."""
    if not batch:
        raise ValueError("batch must be nonempty")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    records = [_make_record(model, ex) for ex in batch]
    wlac_t, mt_t = _loss_tensors(
        model,
        records,
        need_wlac=True,
        need_mt=True,
        mt_label_smoothing=mt_label_smoothing,
        wlac_label_smoothing=wlac_label_smoothing,
    )
    wlac = wlac_t.item()
    mt = mt_t.item()
    return LossBreakdown(wlac_loss=wlac, mt_loss=mt, combined=alpha * wlac + (1.0 - alpha) * mt)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to the peak rate, then inverse-square-root decay."""
    warmup = max(1, cfg.warmup_steps)
    return cfg.learning_rate * min(step / warmup, math.sqrt(warmup / step))


def _epoch_batches(
    records: Sequence[_Record], cfg: TrainConfig, rng: random.Random
) -> list[list[_Record]]:
    """Token-budgeted batches with length-bucketed shuffling."""
    order = list(records)
    rng.shuffle(order)
    order.sort(key=lambda r: r.cost // 8)  # stable: keeps shuffle inside buckets
    batches: list[list[_Record]] = []
    current: list[_Record] = []
    budget = 0
    for rec in order:
        if current and budget + rec.cost > cfg.batch_tokens:
            batches.append(current)
            current, budget = [], 0
        current.append(rec)
        budget += rec.cost
    if current:
        batches.append(current)
    rng.shuffle(batches)
    return batches


EvalHook = Callable[[JointModel, int, dict], "bool | None"]


def train(
    model: JointModel,
    data: Sequence[WlacExample],
    cfg: TrainConfig,
    eval_hook: EvalHook | None = None,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Run the optimization loop; returns one metrics dict per eval point.

    Checkpoints and an append-only metrics log are written under
    ``out_dir`` when given.  ``eval_hook`` runs on the model in eval
    mode at every checkpoint cadence; returning True stops training
    early (the current state is still checkpointed).
    """
    from .checkpoint import save_checkpoint  # local import to avoid a cycle

    if not data:
        raise ValueError("training data must be nonempty")
    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    records = [_make_record(model, ex) for ex in data]

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        manifest = {
            "config": asdict(cfg),
            "model": asdict(model.config),
            "vocab_sha256": model.vocab.sha256(),
            "num_examples": len(data),
        }
        (out_path / "train_manifest.json").write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    need_wlac = cfg.alpha > 0.0
    need_mt = cfg.alpha < 1.0

    model.train()
    events: list[dict] = []
    window: list[LossBreakdown] = []
    step = 0
    stop = False
    t0 = time.monotonic()
    while step < cfg.max_steps and not stop:
        for batch in _epoch_batches(records, cfg, rng):
            step += 1
            lr = lr_at(step, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            wlac_t, mt_t = _loss_tensors(
                model,
                batch,
                need_wlac=need_wlac,
                need_mt=need_mt,
                mt_label_smoothing=cfg.mt_label_smoothing,
                wlac_label_smoothing=cfg.wlac_label_smoothing,
            )
            wlac = wlac_t.item() if wlac_t is not None else 0.0
            mt = mt_t.item() if mt_t is not None else 0.0
            if cfg.alpha == 1.0:
                combined_t = wlac_t
            elif cfg.alpha == 0.0:
                combined_t = mt_t
            else:
                combined_t = cfg.alpha * wlac_t + (1.0 - cfg.alpha) * mt_t
            combined = combined_t.item()
            if not math.isfinite(combined):
                _dump_divergence(out_path, step, wlac, mt, lr)
                raise TrainingDivergedError(f"non-finite loss at step {step}")
            optimizer.zero_grad(set_to_none=True)
            combined_t.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            window.append(LossBreakdown(wlac, mt, combined))

            at_eval = step % cfg.checkpoint_every == 0 or step >= cfg.max_steps
            if at_eval:
                event = {
                    "step": step,
                    "wlac_loss": sum(b.wlac_loss for b in window) / len(window),
                    "mt_loss": sum(b.mt_loss for b in window) / len(window),
                    "combined": sum(b.combined for b in window) / len(window),
                    "lr": lr,
                    "elapsed_s": round(time.monotonic() - t0, 3),
                }
                window.clear()
                model.eval()
                try:
                    if eval_hook is not None and eval_hook(model, step, event):
                        stop = True
                finally:
                    model.train()
                events.append(event)
                if out_path is not None:
                    with open(out_path / "metrics.jsonl", "a", encoding="utf-8") as fh:
                        fh.write(json.dumps(event) + "\n")
                    save_checkpoint(model, out_path / f"step-{step:06d}")
            if stop or step >= cfg.max_steps:
                break
    model.eval()
    if out_path is not None:
        save_checkpoint(model, out_path / "final")
    return events


def _dump_divergence(out_path: Path | None, step: int, wlac: float, mt: float, lr: float) -> None:
    if out_path is None:
        return
    payload = {"step": step, "wlac_loss": wlac, "mt_loss": mt, "lr": lr}
    try:
        (out_path / "diverged.json").write_text(json.dumps(payload) + "\n", encoding="utf-8")
    except OSError:  # diagnostics must not mask the real failure
        logger.exception("could not write divergence dump")


def strip_decoder(model: JointModel) -> JointModel:
    """Inference model with the MT decoder removed.

    Completion outputs are bitwise identical to the full model's; the
    translation entry points raise :class:`CapabilityError`.
    """
    stripped = JointModel(
        model.config,
        model.vocab,
        model.bpe,
        model.table,
        with_mt_decoder=False,
    )
    stripped.to(next(model.parameters()).dtype)
    state = {
        k: v for k, v in model.state_dict().items() if not k.startswith("mt_decoder.")
    }
    stripped.load_state_dict(state, strict=True)
    stripped.eval()
    return stripped
