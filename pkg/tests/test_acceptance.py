"""Acceptance suite: one test per exit criterion, each printing a
PASS/FAIL line (run with -s to stream them).

The joint-training runs dominate the runtime: three seeds of the
baseline (completion loss only) against three seeds of the joint model
on the fixed toy translation task, all on the small preset.  Everything
downstream (agreement reports, baselines, the served model) reuses
those checkpoints.
"""

import concurrent.futures
import contextlib
import json
import math
import random
import statistics
import threading
import time

import pytest
import torch

from conftest import micro_config
from wlac.agreement import joint_inference, prefix_match, translation_upper_bound
from wlac.analysis import accuracy
from wlac.bpe import learn_bpe
from wlac.checkpoint import save_checkpoint
from wlac.cli import main as cli_main
from wlac.corpus import build_vocab
from wlac.datagen import GenConfig, generate_dataset, make_toy_corpus, save_dataset
from wlac.decoding import HypothesisSet, PredictionSet, beam_search, predict_topk_batch
from wlac.model import build_model, desk_scale_config
from wlac.training import TrainConfig, compute_loss, strip_decoder, train


@contextlib.contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}", flush=True)
        raise
    print(f"[PASS] {name}", flush=True)


# -- shared toy task and training runs ---------------------------------

TOY_SEED = 11
GEN_TRAIN = GenConfig(seed=101, max_context_len=4)
GEN_TEST = GenConfig(seed=202, max_context_len=4)
TRAIN_SEEDS = (0, 1, 2)


def _train_config(alpha: float, seed: int, max_steps: int = 3000) -> TrainConfig:
    return TrainConfig(
        alpha=alpha,
        learning_rate=5e-4,
        warmup_steps=200,
        max_steps=max_steps,
        batch_tokens=1500,
        seed=seed,
        checkpoint_every=max_steps,
    )


@pytest.fixture(scope="session")
def toy_task():
    pairs = make_toy_corpus(5000, vocab_size=100, min_len=5, max_len=12, seed=TOY_SEED)
    train_pairs, test_pairs = pairs[:4500], pairs[4500:]
    train_ex = generate_dataset(train_pairs, per_pair=1, cfg=GEN_TRAIN)
    test_ex = generate_dataset(test_pairs, per_pair=2, cfg=GEN_TEST)
    vocab = build_vocab(train_pairs, side="joint", max_size=5000)
    return pairs, train_ex, test_ex, vocab


@pytest.fixture(scope="session")
def trained_runs(toy_task, tmp_path_factory):
    """Three seeds x {baseline, joint}; returns accuracies and artifacts."""
    _, train_ex, test_ex, vocab = toy_task
    root = tmp_path_factory.mktemp("runs")
    labels = [ex.label for ex in test_ex]
    result = {"acc": {}, "elapsed": 0.0, "root": root, "models": {}}
    t0 = time.monotonic()
    for seed in TRAIN_SEEDS:
        for alpha, tag in ((1.0, "base"), (0.75, "joint")):
            model = build_model(desk_scale_config("aioe", vocab.total_size), vocab, seed=seed)
            train(model, train_ex, _train_config(alpha, seed))
            preds = predict_topk_batch(model, test_ex, k=1)
            result["acc"][(tag, seed)] = accuracy([p.top1 or "" for p in preds], labels)
            result["models"][(tag, seed)] = model
    result["elapsed"] = time.monotonic() - t0
    save_checkpoint(result["models"][("joint", 0)], root / "joint-ckpt")
    save_checkpoint(result["models"][("base", 0)], root / "base-ckpt")
    save_dataset(test_ex, root / "test.jsonl")
    return result


class TestC01JointTrainingBenefit:
    def test_joint_beats_baseline_by_two_points(self, trained_runs):
        with criterion("C01 joint training beats the pure backbone by >= 2 points"):
            gaps = [
                100.0 * (
                    trained_runs["acc"][("joint", s)] - trained_runs["acc"][("base", s)]
                )
                for s in TRAIN_SEEDS
            ]
            med = statistics.median(gaps)
            print(f"  gaps per seed: {[round(g, 2) for g in gaps]}, median {med:.2f}")
            assert med >= 2.0
            assert trained_runs["elapsed"] < 900, "training exceeded 15 CPU-minutes"


@pytest.fixture(scope="session")
def word_eval_report(trained_runs):
    """The `evaluate` CLI run on the joint word-level checkpoint."""
    root = trained_runs["root"]
    out = root / "report.json"
    rc = cli_main([
        "evaluate",
        "--checkpoint", str(root / "joint-ckpt"),
        "--data", str(root / "test.jsonl"),
        "--limit", "500",
        "--agreement", "--joint-inference", "--baseline", "upper-bound",
        "--out", str(out),
    ])
    assert rc == 0
    return json.loads(out.read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def bpe_eval_report(toy_task, tmp_path_factory):
    """A joint sub-word backbone trained and evaluated the same way."""
    pairs, train_ex, test_ex, _ = toy_task
    words = {t: 1 for p in pairs[:4500] for t in p.source + p.target}
    bpe = learn_bpe(words, 200)
    model = build_model(
        desk_scale_config("aioe_bpe", bpe.vocab.total_size), bpe.vocab, bpe, seed=0
    )
    train(model, train_ex, _train_config(0.75, seed=0, max_steps=1200))
    root = tmp_path_factory.mktemp("bpe")
    save_checkpoint(model, root / "ckpt")
    save_dataset(test_ex[:300], root / "test.jsonl")
    out = root / "report.json"
    rc = cli_main([
        "evaluate",
        "--checkpoint", str(root / "ckpt"),
        "--data", str(root / "test.jsonl"),
        "--agreement",
        "--out", str(out),
    ])
    assert rc == 0
    return json.loads(out.read_text(encoding="utf-8"))


class TestC02AgreementGap:
    def test_word_level_backbone(self, word_eval_report):
        with criterion("C02a agreement gap positive (word-level backbone)"):
            gap = word_eval_report["agr_acc"] - word_eval_report["disagr_acc"]
            print(f"  agr_acc {word_eval_report['agr_acc']:.3f} "
                  f"disagr_acc {word_eval_report['disagr_acc']:.3f}")
            assert gap > 0

    def test_subword_backbone(self, bpe_eval_report):
        with criterion("C02b agreement gap positive (sub-word backbone)"):
            gap = bpe_eval_report["agr_acc"] - bpe_eval_report["disagr_acc"]
            print(f"  agr_acc {bpe_eval_report['agr_acc']:.3f} "
                  f"disagr_acc {bpe_eval_report['disagr_acc']:.3f}")
            assert gap > 0


class TestC03LossCombination:
    def test_endpoints_and_affinity(self, toy_task):
        with criterion("C03 loss endpoints bit-exact; affine in alpha at 1e-9"):
            _, train_ex, _, vocab = toy_task
            model = build_model(micro_config("aioe", vocab.total_size), vocab, seed=3)
            batch = train_ex[:8]
            at1 = compute_loss(model, batch, alpha=1.0)
            at0 = compute_loss(model, batch, alpha=0.0)
            assert at1.combined == at1.wlac_loss
            assert at0.combined == at0.mt_loss
            w, m = at1.wlac_loss, at0.mt_loss
            for a in (0.0, 0.25, 0.5, 0.75, 1.0):
                lb = compute_loss(model, batch, alpha=a)
                expected = a * w + (1 - a) * m
                assert abs(lb.combined - expected) <= 1e-9 * abs(expected)


class TestC04GradientSanity:
    def test_finite_differences(self, toy_task):
        with criterion("C04 analytic gradients match finite differences (<1e-3 rel)"):
            t0 = time.monotonic()
            _, train_ex, _, vocab = toy_task
            cfg = micro_config("aioe", vocab.total_size, dim=8, heads=2, ffn_dim=16)
            model = build_model(cfg, vocab, seed=4).double()
            batch = train_ex[:3]
            alpha = 0.6
            from wlac.training import _loss_tensors, _make_record

            records = [_make_record(model, ex) for ex in batch]
            wlac_t, mt_t = _loss_tensors(model, records, need_wlac=True, need_mt=True)
            (alpha * wlac_t + (1 - alpha) * mt_t).backward()

            params = [(n, p) for n, p in model.named_parameters() if p.grad is not None]
            rng = random.Random(17)
            h = 1e-5
            checked = 0
            while checked < 50:
                name, param = rng.choice(params)
                flat = param.detach().view(-1)
                idx = rng.randrange(flat.numel())
                orig = flat[idx].item()
                with torch.no_grad():
                    flat[idx] = orig + h
                    up = compute_loss(model, batch, alpha).combined
                    flat[idx] = orig - h
                    down = compute_loss(model, batch, alpha).combined
                    flat[idx] = orig
                numeric = (up - down) / (2 * h)
                analytic = param.grad.view(-1)[idx].item()
                if abs(numeric) < 1e-8 and abs(analytic) < 1e-8:
                    continue
                assert abs(analytic - numeric) <= 1e-3 * max(abs(numeric), 1e-8), name
                checked += 1
            elapsed = time.monotonic() - t0
            print(f"  checked {checked} parameters in {elapsed:.1f}s")
            assert elapsed < 60


class TestC05OverfitContract:
    def test_memorizes_64_examples(self, toy_task):
        with criterion("C05 overfit: completion loss < 0.1 on 64 examples in 2000 steps"):
            _, train_ex, _, vocab = toy_task
            subset = train_ex[:64]
            model = build_model(desk_scale_config("aioe", vocab.total_size), vocab, seed=0)
            cfg = TrainConfig(
                alpha=1.0, learning_rate=1e-3, warmup_steps=100, max_steps=2000,
                batch_tokens=2500, seed=0, checkpoint_every=50,
            )
            history = []

            def hook(m, step, event):
                loss = compute_loss(m, subset, alpha=1.0).wlac_loss
                history.append((step, loss))
                return loss < 0.1

            train(model, subset, cfg, eval_hook=hook)
            steps, losses = zip(*history)
            print(f"  reached {losses[-1]:.4f} at step {steps[-1]}")
            assert losses[-1] < 0.1
            assert steps[-1] <= 2000
            # monotone overfit: median training loss per window never rises
            window_medians = [
                statistics.median(l for s, l in history if lo < s <= lo + 200)
                for lo in range(0, steps[-1], 200)
                if any(lo < s <= lo + 200 for s, _ in history)
            ]
            assert all(b <= a + 1e-6 for a, b in zip(window_medians, window_medians[1:]))


class TestC06DecoderStripEquivalence:
    def test_bitwise_identical_logits(self, trained_runs, toy_task):
        with criterion("C06 stripping the MT decoder leaves completion logits bit-identical"):
            _, _, test_ex, _ = toy_task
            model = trained_runs["models"][("joint", 0)]
            stripped = strip_decoder(model)
            rng = random.Random(5)
            sample = rng.sample(test_ex, 100)
            for ex in sample:
                a = model.forward_wlac(model.make_input(ex))
                b = stripped.forward_wlac(stripped.make_input(ex))
                assert torch.equal(a, b)


class TestC07JointInferenceOracle:
    def test_thousand_randomized_cases(self):
        with criterion("C07 joint inference equals brute-force first-match on 1000 cases"):
            rng = random.Random(23)
            vocab = [f"w{i}" for i in range(40)]
            agree = 0
            for _ in range(1000):
                words = rng.sample(vocab, rng.randint(1, 6))
                preds = PredictionSet(
                    candidates=tuple((w, 1.0 - 0.01 * i) for i, w in enumerate(words)),
                    k=len(words),
                )
                hyps = HypothesisSet.from_hypotheses(
                    [(rng.choices(vocab, k=rng.randint(1, 8)), -i) for i in range(3)]
                )
                expected = next(
                    (w for w in words if w.casefold() in hyps.word_set), words[0]
                )
                agree += joint_inference(preds, hyps) == expected
            assert agree == 1000


class TestC08BpeConformance:
    def test_merges_match_reference_and_roundtrip(self):
        with criterion("C08 BPE merges equal brute-force reference; round-trip holds"):
            from test_bpe import reference_merges

            rng = random.Random(29)
            words = {}
            while len(words) < 1000:
                w = "".join(rng.choice("abcdefgh") for _ in range(rng.randint(1, 10)))
                words[w] = rng.randint(1, 9)
            model = learn_bpe(words, 60)
            assert list(model.merges) == reference_merges(words, 60)
            for _ in range(1000):
                w = "".join(rng.choice("abcdefghij") for _ in range(rng.randint(1, 12)))
                assert model.decode(model.encode(w)) == w


class TestC09BeamSearchOracle:
    def test_width3_equals_enumeration(self):
        with criterion("C09 width-3 beam equals exhaustive enumeration (max 4 pieces)"):
            from test_decoding import _micro_decoder_model, exhaustive_hypotheses

            model, memory = _micro_decoder_model()
            for max_pieces in (1, 2, 3, 4):
                got = beam_search(model, memory, width=3, max_pieces=max_pieces, head="wlac")
                expected = exhaustive_hypotheses(model, memory, max_pieces)[:3]
                assert [seq for seq, _ in got] == [seq for seq, _ in expected]
                for (_, a), (_, b) in zip(got, expected):
                    assert a == pytest.approx(b, rel=1e-9)


class TestC10DatagenProperties:
    def test_ten_thousand_examples(self, toy_task, tmp_path):
        with criterion("C10 datagen: 10k examples keep invariants; regeneration identical"):
            pairs, _, _, _ = toy_task
            cfg = GenConfig(seed=77, max_context_len=4)
            examples = generate_dataset(pairs, per_pair=2, cfg=cfg)
            assert len(examples) == 10_000
            for ex in examples:
                ex.validate()
            types = {ex.context_type for ex in examples}
            assert types == {"zero", "prefix", "suffix", "bi"}
            save_dataset(examples, tmp_path / "a.jsonl")
            save_dataset(generate_dataset(pairs, per_pair=2, cfg=cfg), tmp_path / "b.jsonl")
            assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


class TestC11BaselineWiring:
    def test_rates_match_naive_recomputation(self):
        with criterion("C11a baseline rates equal naive recomputation on 500 cases"):
            rng = random.Random(31)
            vocab = [f"w{i}" for i in range(25)]
            ub_flags, ub_naive, pm_hits, pm_naive = [], [], [], []
            for _ in range(500):
                label = rng.choice(vocab)
                sentences = [rng.choices(vocab, k=rng.randint(2, 7)) for _ in range(3)]
                hyps = HypothesisSet.from_hypotheses([(s, -i) for i, s in enumerate(sentences)])
                ub_flags.append(translation_upper_bound(label, hyps))
                ub_naive.append(any(label in s for s in sentences))
                typed = label[:2]
                got = prefix_match(typed, hyps)
                counts = {}
                for s in sentences:
                    for tok in s:
                        if tok.startswith(typed):
                            counts[tok] = counts.get(tok, 0) + 1
                want = min(counts, key=lambda w: (-counts[w], w)) if counts else None
                pm_hits.append(got)
                pm_naive.append(want)
            assert ub_flags == ub_naive
            assert pm_hits == pm_naive
            assert sum(ub_flags) / 500 == sum(ub_naive) / 500

    def test_upper_bound_dominates_joint_inference(self, word_eval_report):
        with criterion("C11b toy upper-bound rate >= joint-inference accuracy"):
            ub = word_eval_report["baseline"]["accuracy"]
            ji = word_eval_report["joint_inference_accuracy"]
            print(f"  upper bound {ub:.3f} vs joint inference {ji:.3f}")
            assert ub >= ji


class TestC12ServiceLatency:
    def test_p95_under_200ms(self, trained_runs):
        with criterion("C12 /v1/complete p95 < 200 ms (8 clients, 1000 requests)"):
            import socket
            import httpx
            import uvicorn
            from wlac.service import CompletionEngine, create_app

            engine = CompletionEngine.from_checkpoint(trained_runs["root"] / "joint-ckpt")
            app = create_app(engine)
            with socket.socket() as s:
                s.bind(("127.0.0.1", 0))
                port = s.getsockname()[1]
            config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
            server = uvicorn.Server(config)
            thread = threading.Thread(target=server.run, daemon=True)
            thread.start()
            base = f"http://127.0.0.1:{port}"
            for _ in range(100):
                try:
                    httpx.get(base + "/v1/health", timeout=1.0)
                    break
                except httpx.HTTPError:
                    time.sleep(0.1)

            payload = {
                "source": "tpn skvn rkk mlr vzrmr",
                "left_context": "",
                "right_context": "",
                "typed": "a",
                "k": 5,
            }
            latencies = []
            lock = threading.Lock()

            def worker(n):
                with httpx.Client(timeout=5.0) as client:
                    for _ in range(n):
                        t0 = time.perf_counter()
                        resp = client.post(base + "/v1/complete", json=payload)
                        dt = (time.perf_counter() - t0) * 1e3
                        assert resp.status_code == 200
                        with lock:
                            latencies.append(dt)

            with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
                list(pool.map(worker, [125] * 8))
            server.should_exit = True
            thread.join(timeout=5)

            latencies.sort()
            p50 = latencies[len(latencies) // 2]
            p95 = latencies[int(len(latencies) * 0.95)]
            print(f"  n={len(latencies)} p50={p50:.1f}ms p95={p95:.1f}ms")
            assert len(latencies) == 1000
            assert p95 < 200.0
