"""Train a small joint model, complete words, and strip the decoder.

Takes a couple of minutes on a laptop CPU; shrink --steps to go faster.
"""

import tempfile
from pathlib import Path

from wlac import (
    GenConfig, TrainConfig, build_vocab, compute_loss, generate_dataset,
    load_checkpoint, make_toy_corpus, predict_topk, save_checkpoint,
    strip_decoder, train, translate,
)
from wlac.model import build_model, desk_scale_config

pairs = make_toy_corpus(size=800, vocab_size=40, min_len=5, max_len=10, seed=3)
train_ex = generate_dataset(pairs[:700], per_pair=2, cfg=GenConfig(seed=1))
test_ex = generate_dataset(pairs[700:], per_pair=1, cfg=GenConfig(seed=2))

vocab = build_vocab(pairs[:700], side="joint", max_size=2000)
model = build_model(desk_scale_config("aioe", vocab.total_size), vocab, seed=0)

# One loss, two tasks: completion at the mask slot plus full translation.
before = compute_loss(model, test_ex[:32], alpha=0.75)
print(f"loss before training: completion {before.wlac_loss:.2f}, "
      f"translation {before.mt_loss:.2f}")

cfg = TrainConfig(alpha=0.75, max_steps=600, warmup_steps=100,
                  batch_tokens=1500, seed=0, checkpoint_every=200)
events = train(model, train_ex, cfg)
print("training trace:", [(e["step"], round(e["combined"], 2)) for e in events])

ex = test_ex[0]
preds = predict_topk(model, ex, k=3)
print(f"\ntyped {ex.typed!r} (label {ex.label!r}) ->",
      [(w, round(s, 3)) for w, s in preds.candidates])

hyps = translate(model, ex, beams=3)
print("top hypothesis:", " ".join(hyps.hypotheses[0][0]))

# Inference needs only the encoder and the completion head.
lean = strip_decoder(model)
assert predict_topk(lean, ex, k=3).candidates == preds.candidates
with tempfile.TemporaryDirectory() as tmp:
    model_id = save_checkpoint(lean, Path(tmp) / "ckpt")
    reloaded = load_checkpoint(Path(tmp) / "ckpt")
    print(f"\nstripped checkpoint {model_id} reloads; "
          f"{sum(p.numel() for p in reloaded.parameters())} parameters")
