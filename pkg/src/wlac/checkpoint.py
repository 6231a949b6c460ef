"""Self-describing checkpoint directories.

Layout (all files UTF-8 unless binary)::

    config.json        format tag, model configuration, component flags,
                       vocabulary/BPE hashes, and the model id
    params.npz         named parameter arrays (numpy .npy entries inside
                       a zip; dtypes are explicitly little-endian)
    vocab.txt          the vocabulary file (see corpus module format)
    bpe.txt            merge list, present for sub-word models
    romanization.tsv   typing table, present when the model carries one

The model id is the first 12 hex digits of sha256 over ``params.npz``
followed by the vocabulary hash, and identifies a checkpoint snapshot
for serving and compatibility checks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from .bpe import BpeModel, load_merges, save_bpe
from .corpus import load_vocab, save_vocab
from .datagen import RomanizationTable, load_romanization
from .model import JointModel, ModelConfig

FORMAT_TAG = "wlac-checkpoint/1"


class CheckpointError(Exception):
    """Malformed or incompatible checkpoint."""


def _little_endian(arr: np.ndarray) -> np.ndarray:
    dt = arr.dtype
    if dt.byteorder == ">" or (dt.byteorder == "=" and not np.little_endian):
        return arr.astype(dt.newbyteorder("<"))
    return arr


def save_checkpoint(model: JointModel, path: str | Path) -> str:
    """Write the model to *path* (a directory); returns the model id."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    arrays = {
        name: _little_endian(tensor.detach().cpu().numpy())
        for name, tensor in model.state_dict().items()
    }
    np.savez(path / "params.npz", **arrays)

    save_vocab(model.vocab, path / "vocab.txt")
    if model.bpe is not None:
        save_bpe(model.bpe, path / "bpe.txt")
    if model.table is not None:
        with open(path / "romanization.tsv", "w", encoding="utf-8") as fh:
            for ch, roman in sorted(model.table.mapping.items()):
                fh.write(f"{ch}\t{roman}\n")

    vocab_hash = model.vocab.sha256()
    digest = hashlib.sha256()
    digest.update((path / "params.npz").read_bytes())
    digest.update(vocab_hash.encode("ascii"))
    model_id = digest.hexdigest()[:12]

    config = {
        "format": FORMAT_TAG,
        "model": asdict(model.config),
        "with_mt_decoder": model.has_mt_decoder,
        "vocab_sha256": vocab_hash,
        "has_bpe": model.bpe is not None,
        "has_romanization": model.table is not None,
        "model_id": model_id,
        "byte_order": "little",
    }
    (path / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return model_id


def read_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        config = json.loads((path / "config.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CheckpointError(f"{path} is not a checkpoint directory") from exc
    if config.get("format") != FORMAT_TAG:
        raise CheckpointError(f"unsupported checkpoint format in {path}")
    return config


def load_checkpoint(path: str | Path) -> JointModel:
    """Rebuild a model in eval mode from a checkpoint directory."""
    path = Path(path)
    config = read_config(path)
    model_cfg = ModelConfig(**config["model"])

    vocab = load_vocab(path / "vocab.txt")
    if vocab.sha256() != config["vocab_sha256"]:
        raise CheckpointError(f"vocabulary hash mismatch in {path}")

    bpe = None
    if config.get("has_bpe") and (path / "bpe.txt").exists():
        # The saved vocabulary already covers the symbol inventory.
        bpe = BpeModel(merges=load_merges(path / "bpe.txt"), vocab=vocab)
    table = None
    if config.get("has_romanization") and (path / "romanization.tsv").exists():
        table = load_romanization(path / "romanization.tsv")

    model = JointModel(
        model_cfg, vocab, bpe, table, with_mt_decoder=config["with_mt_decoder"]
    )
    with np.load(path / "params.npz", allow_pickle=False) as arrays:
        state = {name: torch.from_numpy(arrays[name].copy()) for name in arrays.files}
    model.load_state_dict(state, strict=True)
    model.eval()
    return model


def checkpoint_model_id(path: str | Path) -> str:
    return read_config(path)["model_id"]
