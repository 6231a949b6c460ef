"""Command-line entry point: one tool, git-style subcommands.

Every stage writes a run manifest (resolved configuration, input
hashes, seed) next to its output before doing any work, so a completed
run documents how to reproduce itself.  Errors exit nonzero with a
machine-readable category prefix.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from collections import Counter
from dataclasses import asdict
from pathlib import Path

from . import analysis as analysis_mod
from .agreement import aggregate_report, joint_inference, make_record, prefix_match, translation_upper_bound
from .bpe import learn_bpe
from .checkpoint import CheckpointError, load_checkpoint, read_config
from .corpus import CorpusError, ParallelPair, build_vocab, load_parallel, save_parallel
from .datagen import (
    DatagenError,
    GenConfig,
    WlacExample,
    generate_dataset,
    load_dataset,
    load_romanization,
    make_toy_corpus,
    save_dataset,
    typing_form,
)
from .decoding import HypothesisSet, predict_topk_batch, translate
from .model import CapabilityError, ModelConfig, build_model, desk_scale_config
from .training import TrainConfig, TrainingDivergedError, train

_ERROR_CATEGORIES = {
    CorpusError: "empty-corpus",
    DatagenError: "datagen-error",
    CheckpointError: "integrity-error",
    CapabilityError: "capability-error",
    TrainingDivergedError: "training-diverged",
    FileNotFoundError: "io-error",
    OSError: "io-error",
    ValueError: "config-error",
}


def _file_hash(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:12]


def _write_manifest(out: Path, subcommand: str, args: argparse.Namespace, inputs: list[Path]) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": {k: str(v) if isinstance(v, Path) else v for k, v in vars(args).items() if k != "func"},
        "inputs": {str(p): _file_hash(p) for p in inputs if p and p.exists()},
        "output": str(out),
    }
    target = out / "manifest.json" if out.suffix == "" and (out.is_dir() or subcommand == "train") else Path(str(out) + ".manifest.json")
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- datagen -----------------------------------------------------------

def cmd_datagen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    _write_manifest(out, "datagen", args, [Path(p) for p in (args.corpus, args.table) if p])
    table = load_romanization(args.table) if args.table else None
    if args.toy:
        # Skipping keeps one toy language (same seed) while carving out
        # disjoint sentences, so train/test splits share the vocabulary.
        pairs = make_toy_corpus(
            args.toy_skip + args.size, vocab_size=args.vocab_size,
            min_len=args.min_len, max_len=args.max_len, seed=args.seed,
        )[args.toy_skip:]
        if args.corpus_out:
            save_parallel(pairs, args.corpus_out)
    else:
        if not args.corpus:
            raise ValueError("either --toy or --corpus is required")
        pairs = load_parallel(args.corpus, limit=args.limit)
        _check_typability(pairs, table)
    cfg = GenConfig(
        seed=args.seed,
        max_context_len=args.max_context_len,
        typed_len_policy=args.typed_len_policy,
        context_adjacency=args.context_adjacency,
    )
    examples = generate_dataset(pairs, per_pair=args.per_pair, cfg=cfg, table=table)
    save_dataset(examples, out)
    print(f"wrote {len(examples)} examples to {out}")
    return 0


def _check_typability(pairs: list[ParallelPair], table) -> None:
    sample = [tok for pair in pairs[:50] for tok in pair.target]
    untypable = sum(1 for tok in sample if not typing_form(tok, table))
    if sample and untypable / len(sample) > 0.5:
        raise ValueError(
            "most target words have no typing form; a non-alphabetic corpus "
            "needs a romanization table (--table character<TAB>roman)"
        )


# -- train -------------------------------------------------------------

def _dedup_pairs(examples: list[WlacExample]) -> list[ParallelPair]:
    seen: dict[str, ParallelPair] = {}
    for i, ex in enumerate(examples):
        key = ex.pair_id
        if key not in seen:
            seen[key] = ParallelPair(id=key, source=ex.source, target=ex.full_target)
    return list(seen.values())


def cmd_train(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, "train", args, [Path(args.data)])
    examples = load_dataset(args.data)
    pairs = _dedup_pairs(examples)
    table = load_romanization(args.table) if args.table else None

    arch = args.arch.replace("-", "_")
    bpe = None
    if arch == "aioe_bpe":
        words = Counter(t for p in pairs for t in p.source) + Counter(
            t for p in pairs for t in p.target
        )
        bpe = learn_bpe(words, num_merges=args.merges)
        vocab = bpe.vocab
    else:
        vocab = build_vocab(pairs, side="joint", max_size=args.max_vocab, min_freq=args.min_freq)

    if args.desk_scale:
        mcfg = desk_scale_config(arch, vocab.total_size)
    else:
        mcfg = ModelConfig(
            arch=arch, layers=args.layers, decoder_layers=args.layers,
            dim=args.dim, heads=args.heads, ffn_dim=args.ffn_dim,
            dropout=args.dropout, max_len=args.max_len, vocab_size=vocab.total_size,
        )
    model = build_model(mcfg, vocab, bpe, table, seed=args.seed)

    tcfg = TrainConfig(
        alpha=args.alpha, learning_rate=args.lr, warmup_steps=args.warmup,
        max_steps=args.steps, batch_tokens=args.batch_tokens, seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )

    eval_hook = None
    if args.eval_data:
        eval_examples = load_dataset(args.eval_data, limit=args.eval_limit)

        def eval_hook(m, step, event):
            preds = predict_topk_batch(m, eval_examples, k=1)
            labels = [ex.label for ex in eval_examples]
            event["eval_accuracy"] = analysis_mod.accuracy(
                [p.top1 or "" for p in preds], labels
            )

    events = train(model, examples, tcfg, eval_hook=eval_hook, out_dir=out)
    last = events[-1] if events else {}
    print(f"trained {tcfg.max_steps} steps; final checkpoint at {out / 'final'}")
    if last:
        print(json.dumps(last))
    return 0


# -- predict -----------------------------------------------------------

def _load_hyp_model(args: argparse.Namespace, main_ckpt: Path):
    """Model used to generate hypotheses, with a vocab-hash integrity check."""
    hyp_ckpt = Path(args.hyp_checkpoint) if getattr(args, "hyp_checkpoint", None) else main_ckpt
    main_hash = read_config(main_ckpt)["vocab_sha256"]
    hyp_cfg = read_config(hyp_ckpt)
    if hyp_cfg["vocab_sha256"] != main_hash:
        raise CheckpointError(
            f"vocabulary hash mismatch between {main_ckpt} and {hyp_ckpt}"
        )
    if hyp_ckpt == main_ckpt:
        return None  # caller reuses the main model
    return load_checkpoint(hyp_ckpt)


def cmd_predict(args: argparse.Namespace) -> int:
    out = Path(args.out)
    ckpt = Path(args.checkpoint)
    _write_manifest(out, "predict", args, [Path(args.data), ckpt / "params.npz"])
    model = load_checkpoint(ckpt)
    examples = load_dataset(args.data, limit=args.limit)
    preds = predict_topk_batch(model, examples, k=args.k)
    hyp_model = model if args.with_hypotheses else None
    with open(out, "w", encoding="utf-8") as fh:
        for i, (ex, ps) in enumerate(zip(examples, preds)):
            row = {
                "id": str(i),
                "candidates": [{"word": w, "score": s} for w, s in ps.candidates],
            }
            if hyp_model is not None:
                hyps = translate(hyp_model, ex, beams=args.beams)
                row["hypotheses"] = [
                    {"tokens": list(tokens), "score": score}
                    for tokens, score in hyps.hypotheses
                ]
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"wrote {len(examples)} prediction rows to {out}")
    return 0


# -- evaluate ----------------------------------------------------------

def cmd_evaluate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    ckpt = Path(args.checkpoint)
    _write_manifest(out, "evaluate", args, [Path(args.data), ckpt / "params.npz"])
    model = load_checkpoint(ckpt)
    examples = load_dataset(args.data, limit=args.limit)
    labels = [ex.label for ex in examples]

    preds = predict_topk_batch(model, examples, k=args.k)
    top1 = [p.top1 or "" for p in preds]
    report: dict = {
        "n": len(examples),
        "model_id": read_config(ckpt)["model_id"],
        "accuracy": analysis_mod.accuracy(top1, labels),
    }

    needs_hyps = args.joint_inference or args.baseline or args.agreement
    if needs_hyps:
        hyp_model = _load_hyp_model(args, ckpt) or model
        if not hyp_model.has_mt_decoder:
            raise CapabilityError(
                "agreement metrics need translation hypotheses; use a joint "
                "checkpoint or pass --hyp-checkpoint"
            )
        all_hyps = [translate(hyp_model, ex, beams=args.beams) for ex in examples]
        records = [
            make_record(str(i), w, label, hyps)
            for i, (w, label, hyps) in enumerate(zip(top1, labels, all_hyps))
        ]
        report.update(aggregate_report(records).to_dict())
        if args.records_out:
            with open(args.records_out, "w", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(json.dumps(asdict(rec), ensure_ascii=False) + "\n")
        if args.joint_inference:
            joint = [joint_inference(ps, hyps) for ps, hyps in zip(preds, all_hyps)]
            report["joint_inference_accuracy"] = analysis_mod.accuracy(joint, labels)
        if args.baseline:
            if args.baseline == "upper-bound":
                flags = [
                    translation_upper_bound(label, hyps)
                    for label, hyps in zip(labels, all_hyps)
                ]
                report["baseline"] = {
                    "name": "upper-bound",
                    "accuracy": sum(flags) / len(flags),
                }
            else:
                matched = [
                    prefix_match(ex.typed, hyps, model.table) or ""
                    for ex, hyps in zip(examples, all_hyps)
                ]
                report["baseline"] = {
                    "name": "prefix-match",
                    "accuracy": analysis_mod.accuracy(matched, labels),
                }

    out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    _print_report(report)
    return 0


def _fmt_pct(x) -> str:
    return "-" if x is None else f"{100 * x:6.2f}"


def _print_report(report: dict) -> None:
    print(f"{'n':>8}  {'Acc.':>6}  {'Agr.':>6}  {'Agr.Acc.':>8}  {'Disagr.Acc.':>11}")
    print(
        f"{report['n']:>8}  {_fmt_pct(report.get('accuracy'))}  "
        f"{_fmt_pct(report.get('agreement_rate'))}  {_fmt_pct(report.get('agr_acc')):>8}  "
        f"{_fmt_pct(report.get('disagr_acc')):>11}"
    )
    if "joint_inference_accuracy" in report:
        print(f"joint-inference accuracy: {_fmt_pct(report['joint_inference_accuracy'])}")
    if "baseline" in report:
        b = report["baseline"]
        print(f"baseline {b['name']}: {_fmt_pct(b['accuracy'])}")


# -- analyze -----------------------------------------------------------

def _load_predictions(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def cmd_analyze(args: argparse.Namespace) -> int:
    out = Path(args.out)
    _write_manifest(out, "analyze", args, [Path(args.base_preds), Path(args.joint_preds), Path(args.data)])
    base_rows = _load_predictions(Path(args.base_preds))
    joint_rows = _load_predictions(Path(args.joint_preds))
    examples = load_dataset(args.data)
    if not (len(base_rows) == len(joint_rows) == len(examples)):
        raise ValueError(
            f"row mismatch: {len(base_rows)} baseline, {len(joint_rows)} joint, "
            f"{len(examples)} examples"
        )
    cases = []
    for i, (b, j, ex) in enumerate(zip(base_rows, joint_rows, examples)):
        if "hypotheses" not in j:
            raise ValueError(
                "joint predictions need hypotheses; rerun predict --with-hypotheses"
            )
        hyps = HypothesisSet.from_hypotheses(
            [(row["tokens"], row["score"]) for row in j["hypotheses"]]
        )
        cases.append(
            analysis_mod.AnalysisCase(
                example_id=str(i),
                baseline_prediction=(b["candidates"][0]["word"] if b["candidates"] else ""),
                joint_prediction=(j["candidates"][0]["word"] if j["candidates"] else ""),
                label=ex.label,
                hyps=hyps,
                context_len=ex.context_len,
            )
        )
    freq_source = load_dataset(args.freq_data) if args.freq_data else examples
    freq = analysis_mod.target_frequencies(freq_source)
    result = {
        "n": len(cases),
        "improvement": analysis_mod.improvement_groups(cases).to_dict(),
        "errors": analysis_mod.error_groups(cases).to_dict(),
        "typology": analysis_mod.improvement_typology(cases, freq),
    }
    out.write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    _print_groups("improvement", result["improvement"])
    _print_groups("errors", result["errors"])
    return 0


def _print_groups(title: str, report: dict) -> None:
    print(f"{title}  (n={report['total']})")
    print(f"  {'group':<18} {'count':>6} {'pct':>7} {'avg ctx':>8} {'zero ctx%':>9}")
    for name, st in report["groups"].items():
        avg = "-" if st["avg_context"] is None else f"{st['avg_context']:.2f}"
        zero = "-" if st["zero_context_pct"] is None else f"{st['zero_context_pct']:.2f}"
        print(f"  {name:<18} {st['count']:>6} {st['percentage']:>7.2f} {avg:>8} {zero:>9}")


# -- serve -------------------------------------------------------------

def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(
        args.checkpoint,
        host=args.host,
        port=args.port,
        allow_origins=args.allow_origin or None,
    )
    return 0


# -- parser ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wlac", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("datagen", help="generate completion examples")
    p.add_argument("--toy", action="store_true", help="use the synthetic toy corpus")
    p.add_argument("--corpus", help="parallel corpus (source<TAB>target per line)")
    p.add_argument("--table", help="romanization table TSV")
    p.add_argument("--size", type=int, default=5000, help="toy corpus pairs")
    p.add_argument("--toy-skip", type=int, default=0,
                   help="skip this many toy pairs first (disjoint split, same language)")
    p.add_argument("--vocab-size", type=int, default=100)
    p.add_argument("--min-len", type=int, default=5)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--limit", type=int, default=None, help="max corpus pairs to read")
    p.add_argument("--per-pair", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-context-len", type=int, default=4)
    p.add_argument("--typed-len-policy", default="uniform", choices=["uniform", "short"])
    p.add_argument("--context-adjacency", action="store_true")
    p.add_argument("--corpus-out", help="also write the (toy) corpus TSV here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train a completion model")
    p.add_argument("--data", required=True, help="training dataset (jsonl)")
    p.add_argument("--arch", default="aioe", choices=["aioe", "aioe-bpe"])
    p.add_argument("--alpha", type=float, default=0.75, help="completion-loss weight")
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--warmup", type=int, default=200)
    p.add_argument("--batch-tokens", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=500)
    p.add_argument("--desk-scale", action="store_true",
                   help="small preset: 2 layers, dim 64, 4 heads, ffn 128")
    p.add_argument("--layers", type=int, default=6)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--ffn-dim", type=int, default=2048)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--max-vocab", type=int, default=120000)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--merges", type=int, default=1000, help="BPE merges (aioe-bpe)")
    p.add_argument("--table", help="romanization table TSV")
    p.add_argument("--eval-data", help="held-out dataset for accuracy during training")
    p.add_argument("--eval-limit", type=int, default=200)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write top-k predictions for a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--with-hypotheses", action="store_true")
    p.add_argument("--beams", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy and agreement report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--beams", type=int, default=5)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--agreement", action="store_true",
                   help="emit agreement metrics (needs an MT-capable checkpoint)")
    p.add_argument("--joint-inference", action="store_true",
                   help="also score hypothesis-reranked predictions")
    p.add_argument("--hyp-checkpoint", help="separate checkpoint for hypotheses")
    p.add_argument("--baseline", choices=["upper-bound", "prefix-match"])
    p.add_argument("--records-out", help="per-record agreement audit dump (jsonl)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="improvement and error group analysis")
    p.add_argument("--base-preds", required=True, help="baseline predictions jsonl")
    p.add_argument("--joint-preds", required=True,
                   help="joint predictions jsonl (with hypotheses)")
    p.add_argument("--data", required=True)
    p.add_argument("--freq-data", help="dataset for word frequencies (default: --data)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="run the HTTP completion service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--allow-origin", action="append",
                   help="CORS origin allow-list entry (repeatable)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        for etype, category in _ERROR_CATEGORIES.items():
            if isinstance(exc, etype):
                print(f"error [{category}]: {exc}", file=sys.stderr)
                return 1
        raise


if __name__ == "__main__":
    raise SystemExit(main())
