"""Build a toy dialogue corpus and annotate it with semantic variables.

Walks the annotation pipeline end to end: generate synthetic sessions, look
at dataset statistics, build the topical-word vocabulary, train the sentence
classifiers, annotate a raw corpus, and inspect label-transition matrices.

Run:  python3 demos/01_corpus_and_annotation.py
"""

import numpy as np

from semchat import (
    DA_LABELS,
    EMOTION_LABELS,
    annotate_corpus,
    build_topical_vocabulary,
    corpus_stats,
    make_toy_corpus,
    split_sentences,
    train_classifier,
    transition_matrix,
)
from semchat.corpus import AnnotatedSession, Speaker, Utterance
from semchat.toydata import TOY_STOPLIST, classifier_training_pairs

print("=" * 70)
print("1. Generate a toy corpus (gold annotations come from the templates)")
print("=" * 70)
sessions = make_toy_corpus(60, seed=0)
first = sessions[0]
for utt in first.utterances:
    print(f"  {utt.speaker.value:>7}: {utt.text}")
    print(f"           {utt.annotation.to_dict()}")

print()
print("Dataset statistics (same schema as the dataset summary table):")
stats = corpus_stats(sessions)
for key, value in stats.to_dict().items():
    print(f"  {key:>24}: {value:.2f}" if isinstance(value, float) else f"  {key:>24}: {value}")

print()
print("=" * 70)
print("2. Sentence splitting keeps terminators attached")
print("=" * 70)
for text in ["Fine. You?", "What?! Really.", "你好。你呢？", "no terminator here"]:
    print(f"  {text!r} -> {split_sentences(text)}")

print()
print("=" * 70)
print("3. Topical vocabulary: session frequency x background rarity")
print("=" * 70)
vocab = build_topical_vocabulary(sessions, size_limit=15, stoplist=TOY_STOPLIST)
for phrase, score in vocab.phrases:
    print(f"  {' '.join(phrase):>12}  score={score:.1f}")

print()
print("=" * 70)
print("4. Train the bundled DA / emotion sentence classifiers")
print("=" * 70)
da_pairs, emo_pairs = classifier_training_pairs(sessions)
da_clf = train_classifier(da_pairs, list(DA_LABELS))
emo_clf = train_classifier(emo_pairs, list(EMOTION_LABELS))
print(f"  DA training accuracy:      {da_clf.metadata['training_accuracy']:.3f}")
print(f"  emotion training accuracy: {emo_clf.metadata['training_accuracy']:.3f}")

print()
print("=" * 70)
print("5. Annotate a raw, unannotated session")
print("=" * 70)
raw = AnnotatedSession(
    session_id="raw-demo",
    context="",
    utterances=(
        Utterance(Speaker.HUMAN, "my favorite thing is coffee . what about you ?"),
        Utterance(Speaker.MACHINE, "i really love jazz it is great ."),
    ),
)
annotated = annotate_corpus([raw], vocab, da_clf, emo_clf)[0]
for utt in annotated.utterances:
    print(f"  {utt.speaker.value:>7}: {utt.text}")
    print(f"           sentences: {list(utt.sentences)}")
    print(f"           {utt.annotation.to_dict()}")

print()
print("=" * 70)
print("6. Label transitions between consecutive utterances")
print("=" * 70)
for variable in ("DA", "EMOTION"):
    tm = transition_matrix(sessions, variable)
    print(f"\n  {variable} transition probabilities (rows = previous utterance):")
    header = "".join(f"{label[:6]:>8}" for label in tm.labels)
    print(f"  {'':>10}{header}")
    for label, row in zip(tm.labels, tm.probabilities):
        cells = "".join(f"{p:8.2f}" for p in row)
        print(f"  {label:>10}{cells}")
