"""Command-line pipeline: toy data, annotation, training, decoding, serving.

Every artifact-producing run writes a manifest recording the resolved
configuration and seeds next to its outputs. Ablation flags mirror the
standard variants: --no-understanding / --no-planning drop the corresponding
semantic spans from linearization and decoding; --no-repetition-constraint and
--no-topical-min-length relax the topic-planning constraints.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

# Bare --ckpt/--vocab filenames are resolved against this directory when they
# do not exist relative to the working directory.
CHECKPOINT_DIR_ENV = "SEMCHAT_CHECKPOINT_DIR"

from . import __version__
from .annotate import (
    SentenceClassifier,
    annotate_corpus,
    build_topical_vocabulary,
    train_classifier,
)
from .corpus import (
    DA_LABELS,
    EMOTION_LABELS,
    derive_training_views,
    load_corpus,
    save_corpus,
)
from .decode import DecodingPolicy, HistoryTurn, ablated_policy, default_policy, respond
from .linearize import LinearizationScheme, Linearizer
from .metrics import GOLD_VARIABLES, PLANNED, evaluate_generation, evaluate_understanding
from .model import ModelCheckpoint, ModelConfig, TrainSchedule, TransformerBackend, train
from .tokenizer import Tokenizer
from .toydata import classifier_training_pairs, corpus_texts, make_toy_corpus


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    import numpy
    import torch

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "arguments": {
            k: v for k, v in sorted(vars(args).items()) if k != "func"
        },
        "versions": {
            "semchat": __version__,
            "python": sys.version.split()[0],
            "torch": torch.__version__,
            "numpy": numpy.__version__,
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8"
    )


def _add_ablation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--no-understanding", action="store_true")
    parser.add_argument("--no-planning", action="store_true")
    parser.add_argument("--no-repetition-constraint", action="store_true")
    parser.add_argument("--no-topical-min-length", action="store_true")


def _scheme_from_args(args: argparse.Namespace, max_len: int) -> LinearizationScheme:
    return LinearizationScheme(
        include_understanding=not args.no_understanding,
        include_planning=not args.no_planning,
        max_sequence_length=max_len,
    )


def _policy_from_args(args: argparse.Namespace) -> DecodingPolicy:
    base = DecodingPolicy.load(args.policy) if getattr(args, "policy", None) else None
    return ablated_policy(
        base,
        no_understanding=args.no_understanding,
        no_planning=args.no_planning,
        no_repetition_constraint=args.no_repetition_constraint,
        no_topical_min_length=args.no_topical_min_length,
    )


def _resolve_artifact(path: str) -> Path:
    candidate = Path(path)
    if candidate.exists():
        return candidate
    cache_dir = os.environ.get(CHECKPOINT_DIR_ENV)
    if cache_dir and (Path(cache_dir) / path).exists():
        return Path(cache_dir) / path
    return candidate


def _load_backend(args: argparse.Namespace):
    tokenizer = Tokenizer.load(_resolve_artifact(args.vocab))
    ckpt = ModelCheckpoint.load(_resolve_artifact(args.ckpt))
    if ckpt.tokenizer_fingerprint and ckpt.tokenizer_fingerprint != tokenizer.fingerprint():
        raise SystemExit(
            "vocabulary file does not match the checkpoint's tokenizer fingerprint"
        )
    backend = TransformerBackend(ckpt)
    scheme = _scheme_from_args(args, ckpt.config.max_positions)
    return backend, Linearizer(tokenizer, scheme)


def _cmd_make_toy(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = {
        "train": (args.train, args.seed),
        "valid": (args.valid, args.seed + 1),
        "test": (args.test, args.seed + 2),
    }
    for name, (count, seed) in splits.items():
        sessions = make_toy_corpus(count, seed=seed, id_prefix=f"{name}")
        save_corpus(sessions, out_dir / f"{name}.jsonl")
        print(f"wrote {count} sessions to {out_dir / (name + '.jsonl')}")
    _write_manifest(out_dir, "make-toy", args)
    return 0


def _cmd_train_classifiers(args: argparse.Namespace) -> int:
    sessions = load_corpus(args.corpus)
    da_pairs, emo_pairs = classifier_training_pairs(sessions)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    da_clf = train_classifier(da_pairs, list(DA_LABELS))
    emo_clf = train_classifier(emo_pairs, list(EMOTION_LABELS))
    da_clf.save(out_dir / "da_clf.pkl")
    emo_clf.save(out_dir / "emo_clf.pkl")
    print(
        f"DA classifier training accuracy: {da_clf.metadata['training_accuracy']:.4f}; "
        f"emotion: {emo_clf.metadata['training_accuracy']:.4f}"
    )
    _write_manifest(out_dir, "train-classifiers", args)
    return 0


def _cmd_annotate(args: argparse.Namespace) -> int:
    sessions = load_corpus(args.corpus)
    stoplist = None
    if args.stoplist:
        stoplist = frozenset(Path(args.stoplist).read_text(encoding="utf-8").split())
    if stoplist is None:
        from .annotate import DEFAULT_STOPLIST as stoplist
    vocab = build_topical_vocabulary(sessions, args.vocab_size, stoplist=stoplist)
    da_clf = SentenceClassifier.load(args.da_clf)
    emo_clf = SentenceClassifier.load(args.emo_clf)
    annotated = annotate_corpus(sessions, vocab, da_clf, emo_clf)
    save_corpus(annotated, args.out)
    if args.vocab_out:
        vocab.save(args.vocab_out)
    print(f"annotated {len(annotated)} sessions -> {args.out}")
    _write_manifest(Path(args.out).parent, "annotate", args)
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_sessions = load_corpus(args.corpus)
    valid_sessions = load_corpus(args.valid) if args.valid else []
    tokenizer = Tokenizer.build(corpus_texts(train_sessions))
    tokenizer.save(out_dir / "vocab.txt")
    scheme = _scheme_from_args(args, args.max_positions)
    linearizer = Linearizer(tokenizer, scheme)
    train_examples = [
        linearizer.linearize_session(view)
        for session in train_sessions
        for view in derive_training_views(session)
    ]
    valid_examples = [
        linearizer.linearize_session(view)
        for session in valid_sessions
        for view in derive_training_views(session)
    ]
    config = ModelConfig(
        vocab_size=tokenizer.vocab_size,
        layers=args.layers,
        heads=args.heads,
        hidden_dim=args.hidden_dim,
        max_positions=args.max_positions,
        dropout=args.dropout,
        seed=args.seed,
    )
    schedule = TrainSchedule(
        batch_size=args.batch_size,
        learning_rate=args.lr,
        validate_every=args.validate_every,
        lr_halving_patience=args.patience,
        max_halvings=args.max_halvings,
        max_steps=args.max_steps,
        log_path=str(out_dir / "train_log.jsonl"),
    )
    ckpt = train(
        train_examples,
        valid_examples,
        config,
        schedule,
        tokenizer_fingerprint=tokenizer.fingerprint(),
        pad_id=tokenizer.pad_id,
    )
    ckpt.save(out_dir / "checkpoint.pt")
    _write_manifest(out_dir, "train", args)
    print(
        f"trained {ckpt.metadata['steps']} steps, "
        f"best valid PPL {ckpt.metadata['best_valid_ppl']:.4f} -> {out_dir / 'checkpoint.pt'}"
    )
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    backend, linearizer = _load_backend(args)
    policy = _policy_from_args(args)
    sessions = load_corpus(args.corpus)
    mode = GOLD_VARIABLES if args.mode == "gold" else PLANNED
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    from .corpus import Speaker

    n = 0
    with out_path.open("w", encoding="utf-8") as fh:
        for session in sessions:
            for i, utt in enumerate(session.utterances):
                if utt.speaker is not Speaker.MACHINE:
                    continue
                history = [
                    HistoryTurn(u.speaker, u.text, u.annotation)
                    for u in session.utterances[:i]
                ]
                override = utt.annotation if mode == GOLD_VARIABLES else None
                trace = respond(
                    backend,
                    linearizer,
                    session.context,
                    history,
                    policy,
                    plan_override=override,
                    seed=args.seed + n,
                )
                record = trace.to_dict(linearizer.tokenizer)
                record["session_id"] = session.session_id
                record["turn"] = i
                record["reference"] = utt.text
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                n += 1
    _write_manifest(out_path.parent, "generate", args)
    print(f"wrote {n} traces -> {out_path}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    backend, linearizer = _load_backend(args)
    policy = _policy_from_args(args)
    sessions = load_corpus(args.corpus)
    mode = GOLD_VARIABLES if args.mode == "gold" else PLANNED
    if args.da_clf and args.emo_clf:
        da_clf = SentenceClassifier.load(args.da_clf)
        emo_clf = SentenceClassifier.load(args.emo_clf)
    else:
        print("no classifier checkpoints given; fitting them on this corpus's gold labels")
        da_pairs, emo_pairs = classifier_training_pairs(sessions)
        da_clf = train_classifier(da_pairs, sorted({l for _, l in da_pairs}))
        emo_clf = train_classifier(emo_pairs, sorted({l for _, l in emo_pairs}))
    report = evaluate_generation(
        backend,
        linearizer,
        sessions,
        policy,
        mode=mode,
        da_clf=da_clf,
        emo_clf=emo_clf,
        unit=args.unit,
        seed=args.seed,
    )
    if mode == GOLD_VARIABLES:
        from .model import evaluate_ppl

        examples = [
            linearizer.linearize_session(view)
            for session in sessions
            for view in derive_training_views(session)[:1]
        ]
        report.ppl = evaluate_ppl(
            backend.checkpoint, examples, "MACHINE_UTT_ONLY",
            pad_id=linearizer.tokenizer.pad_id,
        )
    if args.with_understanding:
        report.topical_f1 = evaluate_understanding(
            backend, linearizer, sessions, policy
        ).topical_f1
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    report.save(out_path)
    _write_manifest(out_path.parent, "eval", args)
    summary = {
        k: v
        for k, v in report.to_dict().items()
        if k != "per_sample"
    }
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ChatEngine, create_app

    backend, linearizer = _load_backend(args)
    policy = _policy_from_args(args)
    engine = ChatEngine(backend, linearizer, policy)
    app = create_app(engine, cors_origins=args.cors_origin or None)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semchat",
        description="Semantic understand/plan/generate dialogue toolkit.",
    )
    parser.add_argument(
        "--show-policy",
        action="store_true",
        help="print the default decoding policy as JSON and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("make-toy", help="generate the synthetic toy corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train", type=int, default=120)
    p.add_argument("--valid", type=int, default=20)
    p.add_argument("--test", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_make_toy)

    p = sub.add_parser("train-classifiers", help="fit DA/emotion sentence classifiers")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train_classifiers)

    p = sub.add_parser("annotate", help="annotate a corpus with semantic variables")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, default=6000)
    p.add_argument("--da-clf", required=True)
    p.add_argument("--emo-clf", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-out")
    p.add_argument("--stoplist")
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("train", help="finetune the dialogue model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--valid")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--hidden-dim", type=int, default=256)
    p.add_argument("--max-positions", type=int, default=512)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=24)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--validate-every", type=int, default=5000)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-halvings", type=int, default=3)
    p.add_argument("--max-steps", type=int)
    _add_ablation_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="decode traces for every machine turn")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["planned", "gold"], default="planned")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy")
    _add_ablation_flags(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("eval", help="run the automatic evaluation suite")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["planned", "gold"], default="planned")
    p.add_argument("--unit", choices=["char", "word"], default="word")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--da-clf")
    p.add_argument("--emo-clf")
    p.add_argument("--policy")
    p.add_argument("--with-understanding", action="store_true")
    _add_ablation_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--policy")
    p.add_argument("--cors-origin", action="append")
    _add_ablation_flags(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.show_policy:
        print(json.dumps(default_policy().to_dict(), indent=2))
        return 0
    if not getattr(args, "command", None):
        parser.print_usage()
        return 2
    return args.func(args)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
