"""Service contract tests over the in-process ASGI app."""

import concurrent.futures

import pytest
from fastapi.testclient import TestClient

from conftest import micro_config
from wlac.checkpoint import save_checkpoint
from wlac.model import build_model
from wlac.service import CompletionEngine, create_app
from wlac.training import strip_decoder


@pytest.fixture(scope="module")
def client(tiny_task, tmp_path_factory):
    _, vocab, _ = tiny_task
    model = build_model(micro_config("aioe", vocab.total_size), vocab, seed=1)
    ckpt = tmp_path_factory.mktemp("svc") / "ck"
    save_checkpoint(model, ckpt)
    engine = CompletionEngine.from_checkpoint(ckpt)
    return TestClient(create_app(engine), raise_server_exceptions=False)


@pytest.fixture(scope="module")
def sample_request(tiny_task):
    _, _, examples = tiny_task
    ex = examples[0]
    return {
        "source": " ".join(ex.source),
        "left_context": " ".join(ex.left_context),
        "right_context": " ".join(ex.right_context),
        "typed": ex.typed[:1],
        "k": 5,
    }


class TestComplete:
    def test_prefix_contract(self, client, sample_request):
        body = client.post("/v1/complete", json=sample_request).json()
        assert body["candidates"]
        for cand in body["candidates"]:
            assert cand["word"].startswith(sample_request["typed"])
        scores = [c["score"] for c in body["candidates"]]
        assert scores == sorted(scores, reverse=True)
        assert body["latency_ms"] > 0

    def test_k1_returns_exactly_one(self, client, sample_request):
        body = client.post("/v1/complete", json={**sample_request, "k": 1}).json()
        assert len(body["candidates"]) == 1

    def test_malformed_json_is_400(self, client):
        resp = client.post(
            "/v1/complete", content="{oops", headers={"content-type": "application/json"}
        )
        assert resp.status_code == 400
        assert resp.json()["error"] == "malformed-json"

    def test_empty_typed_is_422(self, client, sample_request):
        resp = client.post("/v1/complete", json={**sample_request, "typed": ""})
        assert resp.status_code == 422

    def test_missing_field_is_422(self, client):
        resp = client.post("/v1/complete", json={"typed": "a"})
        assert resp.status_code == 422

    def test_concurrent_identical_requests_agree(self, client, sample_request):
        def call(_):
            return client.post("/v1/complete", json=sample_request).json()["candidates"]

        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(call, range(16)))
        assert all(r == results[0] for r in results)


class TestTranslate:
    def test_hypotheses_ordering(self, client, sample_request):
        req = {k: v for k, v in sample_request.items() if k != "k"}
        body = client.post("/v1/translate", json={**req, "beams": 4}).json()
        assert 0 < len(body["hypotheses"]) <= 4
        scores = [h["score"] for h in body["hypotheses"]]
        assert scores == sorted(scores, reverse=True)

    def test_default_beams_cap(self, client, sample_request):
        req = {k: v for k, v in sample_request.items() if k != "k"}
        body = client.post("/v1/translate", json=req).json()
        assert len(body["hypotheses"]) <= 5

    def test_stripped_model_is_409(self, tiny_task, tmp_path, sample_request):
        _, vocab, _ = tiny_task
        model = build_model(micro_config("aioe", vocab.total_size), vocab, seed=1)
        ckpt = tmp_path / "stripped"
        save_checkpoint(strip_decoder(model), ckpt)
        client = TestClient(
            create_app(CompletionEngine.from_checkpoint(ckpt)),
            raise_server_exceptions=False,
        )
        req = {k: v for k, v in sample_request.items() if k != "k"}
        resp = client.post("/v1/translate", json=req)
        assert resp.status_code == 409
        assert resp.json()["error"] == "no-mt-decoder"
        # completion still works on the stripped model
        assert client.post("/v1/complete", json=sample_request).status_code == 200


class TestHealth:
    def test_ready_with_model_id(self, client, tiny_task, tmp_path_factory):
        body = client.get("/v1/health").json()
        assert body["status"] == "ready"
        assert len(body["model_id"]) == 12
        assert body["uptime_s"] >= 0

    def test_model_id_matches_checkpoint(self, tiny_task, tmp_path):
        _, vocab, _ = tiny_task
        model = build_model(micro_config("aioe", vocab.total_size), vocab, seed=2)
        model_id = save_checkpoint(model, tmp_path / "ck")
        engine = CompletionEngine.from_checkpoint(tmp_path / "ck")
        client = TestClient(create_app(engine))
        assert client.get("/v1/health").json()["model_id"] == model_id


def test_e2e_learned_session_suggests_the_word(tmp_path):
    """A model fine-tuned on one session pattern serves it back."""
    from wlac.corpus import ParallelPair, build_vocab
    from wlac.datagen import GenConfig, generate_dataset
    from wlac.training import TrainConfig, train

    pair = ParallelPair(
        id="fig",
        source=("这", "是", "一", "小", "步"),
        target=("that's", "one", "small", "step", "for", "man"),
    )
    distractors = [
        ParallelPair(id=str(i), source=("x", "y"), target=("stop", "sign"))
        for i in range(3)
    ]
    vocab = build_vocab([pair] + distractors, side="joint", max_size=100)
    examples = generate_dataset(
        [pair] * 8 + distractors, per_pair=6, cfg=GenConfig(seed=1, max_context_len=3)
    )
    model = build_model(micro_config("aioe", vocab.total_size, dim=32), vocab, seed=0)
    train(model, examples, TrainConfig(
        alpha=1.0, learning_rate=2e-3, warmup_steps=20, max_steps=150,
        batch_tokens=2000, seed=0, checkpoint_every=150,
    ))
    ckpt = tmp_path / "fig"
    save_checkpoint(model, ckpt)
    client = TestClient(create_app(CompletionEngine.from_checkpoint(ckpt)))
    body = client.post("/v1/complete", json={
        "source": "这 是 一 小 步",
        "left_context": "that's one small",
        "right_context": "",
        "typed": "s",
        "k": 5,
    }).json()
    words = [c["word"] for c in body["candidates"]]
    assert "step" in words
    assert all(w.startswith("s") for w in words)


def test_cors_allow_list(tiny_task, tmp_path):
    _, vocab, _ = tiny_task
    model = build_model(micro_config("aioe", vocab.total_size), vocab, seed=1)
    save_checkpoint(model, tmp_path / "ck")
    engine = CompletionEngine.from_checkpoint(tmp_path / "ck")
    client = TestClient(create_app(engine, allow_origins=["http://demo.local"]))
    resp = client.get("/v1/health", headers={"Origin": "http://demo.local"})
    assert resp.headers.get("access-control-allow-origin") == "http://demo.local"
    resp = client.get("/v1/health", headers={"Origin": "http://evil.local"})
    assert "access-control-allow-origin" not in resp.headers
