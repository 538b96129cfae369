"""Automatic semantic annotation.

Builds the topical-word vocabulary from a corpus, aligns vocabulary phrases to
utterances, splits utterances into sentences on end-of-sentence punctuation,
classifies each sentence's dialogue act and emotion with a bundled
bag-of-character-ngrams linear classifier, and derives label-transition
statistics between consecutive utterances.
"""

from __future__ import annotations

import hashlib
import pickle
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import Pipeline

from .corpus import (
    DA_LABELS,
    EMOTION_LABELS,
    AnnotatedSession,
    SemanticAnnotation,
    Utterance,
    ValidationError,
)
from .tokenizer import content_tokens

# Full-width and ASCII end-of-sentence punctuation.
DEFAULT_TERMINATORS = ".?!。？！．"

# Function words excluded from the topical vocabulary by default; callers with
# a real corpus should pass their own stoplist.
DEFAULT_STOPLIST = frozenset(
    "a an and are but did do does for i in is it me my no not of on or so "
    "that the then there this to was we what when who why you your yes hey "
    "how really very much too about am be been they he she him her its".split()
)


def split_sentences(text: str, terminators: str = DEFAULT_TERMINATORS) -> list[str]:
    """Split on end-of-sentence punctuation, keeping terminators attached.

    Runs of terminators close a single segment ("What?!" stays whole); a
    trailing segment without a terminator is kept; surrounding whitespace is
    trimmed from each segment.
    """
    segments: list[str] = []
    buf: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        buf.append(ch)
        if ch in terminators:
            while i + 1 < len(text) and text[i + 1] in terminators:
                i += 1
                buf.append(text[i])
            segment = "".join(buf).strip()
            if segment:
                segments.append(segment)
            buf = []
        i += 1
    tail = "".join(buf).strip()
    if tail:
        segments.append(tail)
    return segments


@dataclass
class TopicalVocabulary:
    """Ranked topical phrases; scores are non-increasing."""

    phrases: list[tuple[tuple[str, ...], float]]
    size_limit: int

    def __post_init__(self) -> None:
        if len(self.phrases) > self.size_limit:
            raise ValueError("vocabulary exceeds its size limit")
        self._phrase_set = {p for p, _ in self.phrases}
        self._max_len = max((len(p) for p, _ in self.phrases), default=0)

    def __len__(self) -> int:
        return len(self.phrases)

    def __contains__(self, phrase: tuple[str, ...]) -> bool:
        return tuple(phrase) in self._phrase_set

    @property
    def max_phrase_len(self) -> int:
        return self._max_len

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for phrase, score in self.phrases:
                fh.write(f"{' '.join(phrase)}\t{score!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> "TopicalVocabulary":
        phrases: list[tuple[tuple[str, ...], float]] = []
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                surface, score = line.rsplit("\t", 1)
                phrases.append((tuple(surface.split(" ")), float(score)))
        return cls(phrases=phrases, size_limit=max(len(phrases), 1))


def _informative(token: str) -> bool:
    return any(ch.isalnum() for ch in token)


def build_topical_vocabulary(
    sessions: list[AnnotatedSession],
    size_limit: int,
    stoplist: frozenset[str] | set[str] = DEFAULT_STOPLIST,
    background_counts: dict[tuple[str, ...], int] | None = None,
    max_phrase_len: int = 1,
) -> TopicalVocabulary:
    """Rank candidate phrases by session frequency times background rarity.

    Each session counts once per phrase (document frequency); an optional
    background frequency table downweights phrases that are merely common
    everywhere. Ties break lexicographically so the ranking is deterministic.
    """
    if size_limit < 1:
        raise ValueError("size_limit must be >= 1")
    df: dict[tuple[str, ...], int] = {}
    for session in sessions:
        in_session: set[tuple[str, ...]] = set()
        for utt in session.utterances:
            tokens = [t for t in content_tokens(utt.text) if _informative(t)]
            for n in range(1, max_phrase_len + 1):
                for i in range(len(tokens) - n + 1):
                    phrase = tuple(tokens[i : i + n])
                    if any(tok.lower() in stoplist for tok in phrase):
                        continue
                    in_session.add(phrase)
        for phrase in in_session:
            df[phrase] = df.get(phrase, 0) + 1
    if not df:
        return TopicalVocabulary(phrases=[], size_limit=size_limit)
    bg = background_counts or {}
    bg_total = sum(bg.values())
    scored = []
    for phrase, count in df.items():
        rarity = np.log((1.0 + bg_total) / (1.0 + bg.get(phrase, 0))) + 1.0
        scored.append((phrase, float(count * rarity)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return TopicalVocabulary(phrases=scored[:size_limit], size_limit=size_limit)


def align_topical_words(
    utterance: Utterance, vocab: TopicalVocabulary
) -> list[tuple[str, ...]]:
    """Vocabulary phrases occurring in the utterance, deduplicated, in order
    of first occurrence (token-boundary matching)."""
    tokens = content_tokens(utterance.text)
    found: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens)):
        for n in range(1, min(vocab.max_phrase_len, len(tokens) - i) + 1):
            phrase = tuple(tokens[i : i + n])
            if phrase in vocab and phrase not in found:
                found[phrase] = i
    ordered = sorted(found.items(), key=lambda kv: (kv[1], len(kv[0]), kv[0]))
    return [phrase for phrase, _ in ordered]


class _ConstantModel:
    """Degenerate classifier for single-label training sets."""

    def __init__(self, label: str):
        self.label = label

    def predict(self, X) -> np.ndarray:
        n = X.shape[0] if hasattr(X, "shape") else len(X)
        return np.array([self.label] * n, dtype=object)


@dataclass
class SentenceClassifier:
    """Sentence-level label predictor with a pluggable backbone.

    The bundled backbone is character n-gram counts feeding a multinomial
    logistic regression; anything exposing ``predict(list_of_str)`` over the
    same label set can be swapped in behind the checkpoint format.
    """

    label_set: list[str]
    model: object
    metadata: dict = field(default_factory=dict)

    def predict(self, sentences: list[str]) -> list[str]:
        if not sentences:
            return []
        return [str(label) for label in self.model.predict(list(sentences))]

    def save(self, path: str | Path) -> None:
        payload = {
            "format": "semchat-classifier",
            "version": 1,
            "label_set": self.label_set,
            "metadata": self.metadata,
            "model": self.model,
        }
        with Path(path).open("wb") as fh:
            pickle.dump(payload, fh)

    @classmethod
    def load(cls, path: str | Path) -> "SentenceClassifier":
        with Path(path).open("rb") as fh:
            payload = pickle.load(fh)
        if payload.get("format") != "semchat-classifier":
            raise ValueError(f"not a classifier checkpoint: {path}")
        return cls(
            label_set=payload["label_set"],
            model=payload["model"],
            metadata=payload.get("metadata", {}),
        )


def train_classifier(
    labeled: list[tuple[str, str]], label_set: list[str]
) -> SentenceClassifier:
    """Fit the bundled sentence classifier on (sentence, label) pairs."""
    label_pool = set(label_set)
    for sentence, label in labeled:
        if label not in label_pool:
            raise ValueError(f"label {label!r} not in label set")
    present = {label for _, label in labeled}
    missing = [label for label in label_set if label not in present]
    if missing:
        raise ValueError(f"no training examples for labels: {missing}")
    sentences = [s for s, _ in labeled]
    labels = [l for _, l in labeled]
    if len(present) == 1:
        model: object = _ConstantModel(labels[0])
        accuracy = 1.0
    else:
        pipeline = Pipeline(
            [
                ("counts", CountVectorizer(analyzer="char_wb", ngram_range=(1, 2))),
                ("logreg", LogisticRegression(max_iter=2000)),
            ]
        )
        pipeline.fit(sentences, labels)
        accuracy = float(np.mean(pipeline.predict(sentences) == np.array(labels)))
        model = pipeline
    fingerprint = hashlib.sha256(
        "\n".join(f"{l}\t{s}" for s, l in sorted(labeled)).encode("utf-8")
    ).hexdigest()
    return SentenceClassifier(
        label_set=list(label_set),
        model=model,
        metadata={
            "training_fingerprint": fingerprint,
            "training_accuracy": accuracy,
            "n_examples": len(labeled),
        },
    )


def classify_sentences(clf: SentenceClassifier, sentences: list[str]) -> list[str]:
    """One label per sentence; deterministic for fixed parameters."""
    return clf.predict(sentences)


def annotate_corpus(
    sessions: list[AnnotatedSession],
    vocab: TopicalVocabulary,
    da_clf: SentenceClassifier,
    emo_clf: SentenceClassifier,
) -> list[AnnotatedSession]:
    """Attach sentences, per-sentence DA/emotion labels, and topical words.

    Text is preserved verbatim; re-running on already annotated sessions
    reproduces the same result.
    """
    if set(da_clf.label_set) - set(DA_LABELS):
        raise ValidationError("DA classifier label set is not the DA scheme")
    if set(emo_clf.label_set) - set(EMOTION_LABELS):
        raise ValidationError("emotion classifier label set is not the emotion scheme")
    # One batched prediction per classifier over all sentences in the corpus.
    per_utt_sentences: list[list[str]] = []
    flat: list[str] = []
    for session in sessions:
        for utt in session.utterances:
            sentences = split_sentences(utt.text)
            per_utt_sentences.append(sentences)
            flat.extend(sentences)
    das = classify_sentences(da_clf, flat)
    emos = classify_sentences(emo_clf, flat)

    out: list[AnnotatedSession] = []
    cursor = 0
    utt_index = 0
    for session in sessions:
        new_utts = []
        for utt in session.utterances:
            sentences = per_utt_sentences[utt_index]
            utt_index += 1
            n = len(sentences)
            annotation = SemanticAnnotation.make(
                emotions=emos[cursor : cursor + n],
                dialogue_acts=das[cursor : cursor + n],
                topical_words=[list(p) for p in align_topical_words(utt, vocab)],
            )
            cursor += n
            new_utts.append(
                replace(utt, sentences=tuple(sentences), annotation=annotation)
            )
        annotated = replace(session, utterances=tuple(new_utts))
        annotated.validate()
        out.append(annotated)
    return out


@dataclass
class TransitionMatrix:
    """Counts of label transitions between consecutive utterances."""

    labels: list[str]
    counts: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        """Row-normalized counts; all-zero rows stay all-zero."""
        totals = self.counts.sum(axis=1, keepdims=True).astype(float)
        safe = np.where(totals == 0, 1.0, totals)
        probs = self.counts / safe
        return np.where(totals == 0, 0.0, probs)


def transition_matrix(
    sessions: list[AnnotatedSession], variable: str
) -> TransitionMatrix:
    """Utterance-level label transitions, flattened pairwise.

    Every label of utterance t is paired with every label of utterance t+1;
    the per-sentence label lists are used as-is, without deduplication.
    """
    if variable == "DA":
        labels = list(DA_LABELS)
        pick = lambda ann: [d.value for d in ann.dialogue_acts]
    elif variable == "EMOTION":
        labels = list(EMOTION_LABELS)
        pick = lambda ann: [e.value for e in ann.emotions]
    else:
        raise ValueError(f"variable must be 'DA' or 'EMOTION', got {variable!r}")
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for session in sessions:
        for prev, cur in zip(session.utterances, session.utterances[1:]):
            if prev.annotation is None or cur.annotation is None:
                raise ValidationError(
                    f"session {session.session_id} is not fully annotated"
                )
            for a in pick(prev.annotation):
                for b in pick(cur.annotation):
                    counts[index[a], index[b]] += 1
    return TransitionMatrix(labels=labels, counts=counts)
