"""Train the small dialogue transformer on the toy corpus until it memorizes.

Writes reusable artifacts for the later demos into demos/_artifacts/:
vocab.txt, checkpoint.pt, and train/test corpora. Takes a few minutes on CPU.

Run:  python3 demos/03_train_toy_model.py
"""

import time
from pathlib import Path

from semchat import (
    LinearizationScheme,
    Linearizer,
    ModelConfig,
    Tokenizer,
    TrainSchedule,
    derive_training_views,
    evaluate_ppl,
    make_toy_corpus,
    save_corpus,
    train,
)
from semchat.toydata import corpus_texts

ARTIFACTS = Path(__file__).parent / "_artifacts"
ARTIFACTS.mkdir(exist_ok=True)

print("Generating corpora ...")
train_sessions = make_toy_corpus(120, seed=0, id_prefix="train")
test_sessions = make_toy_corpus(30, seed=2, id_prefix="test")
save_corpus(train_sessions, ARTIFACTS / "train.jsonl")
save_corpus(test_sessions, ARTIFACTS / "test.jsonl")

tokenizer = Tokenizer.build(corpus_texts(train_sessions))
tokenizer.save(ARTIFACTS / "vocab.txt")
linearizer = Linearizer(tokenizer, LinearizationScheme(max_sequence_length=256))
examples = [
    linearizer.linearize_session(view)
    for session in train_sessions
    for view in derive_training_views(session)
]
print(f"{len(examples)} training views, vocabulary of {tokenizer.vocab_size} tokens")

config = ModelConfig(
    vocab_size=tokenizer.vocab_size,
    layers=2,
    heads=4,
    hidden_dim=128,
    max_positions=256,
    dropout=0.0,
    seed=7,
)
schedule = TrainSchedule(
    batch_size=24,
    learning_rate=1e-3,
    validate_every=200,
    lr_halving_patience=3,
    max_halvings=1,
    max_steps=1200,
    log_path=str(ARTIFACTS / "train_log.jsonl"),
)

print("Training (about 3 minutes on CPU) ...")
start = time.monotonic()
ckpt = train(
    examples,
    examples,
    config,
    schedule,
    tokenizer_fingerprint=tokenizer.fingerprint(),
    pad_id=tokenizer.pad_id,
)
elapsed = time.monotonic() - start
ckpt.save(ARTIFACTS / "checkpoint.pt")

print(f"\nDone in {elapsed:.0f}s after {ckpt.metadata['steps']} steps.")
print("Validation log:")
for entry in ckpt.metadata["log"]:
    print(
        f"  step {entry['step']:>5}  train_loss {entry['train_loss']:.4f}  "
        f"valid_ppl {entry['valid_ppl']:.4f}  lr {entry['lr']:g}"
    )

ppl_all = evaluate_ppl(ckpt, examples, "ALL_MASKED", pad_id=tokenizer.pad_id)
ppl_machine = evaluate_ppl(ckpt, examples, "MACHINE_UTT_ONLY", pad_id=tokenizer.pad_id)
print(f"\ntraining PPL over all supervised positions: {ppl_all:.4f}")
print(f"training PPL over Machine utterances only (gold variables): {ppl_machine:.4f}")
print(f"\nArtifacts saved under {ARTIFACTS}/")
