"""Automatic evaluation: token, embedding, diversity, and semantic metrics.

Sentence-level smoothed BLEU-n, embedding average/extreme similarity over a
pluggable phrase-embedding table, distinct-n diversity, topical recall against
gold phrases, prevalence-weighted multilabel F1 for dialogue acts and
emotions, per-sample set F1 for topical words, and the batch evaluation loops
that generate responses (with planned or gold semantic variables) and score
them.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .annotate import SentenceClassifier, classify_sentences, split_sentences
from .corpus import AnnotatedSession, Speaker
from .decode import DecodingPolicy, HistoryTurn, LanguageModel, respond, understand, build_decoder
from .linearize import Linearizer
from .tokenizer import content_tokens

CHAR = "char"
WORD = "word"

Segmenter = Callable[[str], list[str]]


def _units(text: str, unit: str) -> list[str]:
    if unit == CHAR:
        return [ch for ch in text if not ch.isspace()]
    if unit == WORD:
        return content_tokens(text)
    raise ValueError(f"unit must be {CHAR!r} or {WORD!r}")


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(hypothesis: str, reference: str, n: int, unit: str = CHAR) -> float:
    """Smoothed sentence BLEU-n with brevity penalty.

    Unigram precision is unsmoothed (so disjoint token sets score 0);
    higher-order precisions get add-one smoothing.
    """
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2, or 3")
    hyp = _units(hypothesis, unit)
    ref = _units(reference, unit)
    if not hyp:
        return 0.0
    log_precisions = []
    for k in range(1, n + 1):
        hyp_grams = _ngrams(hyp, k)
        ref_grams = _ngrams(ref, k)
        matches = sum(min(count, ref_grams[g]) for g, count in hyp_grams.items())
        total = sum(hyp_grams.values())
        if k == 1:
            if matches == 0:
                return 0.0
            precision = matches / total
        else:
            precision = (matches + 1) / (total + 1)
        log_precisions.append(math.log(precision))
    brevity = 1.0 if len(hyp) >= len(ref) else math.exp(1 - len(ref) / len(hyp))
    return brevity * math.exp(sum(log_precisions) / n)


def corpus_bleu_n(
    pairs: list[tuple[str, str]], n: int, unit: str = CHAR
) -> float:
    """Mean sentence-level BLEU-n over (hypothesis, reference) pairs."""
    if not pairs:
        return 0.0
    return float(np.mean([bleu_n(h, r, n, unit) for h, r in pairs]))


@dataclass
class EmbeddingTable:
    """Phrase -> dense vector map; out-of-vocabulary phrases are zero vectors."""

    vectors: dict[str, np.ndarray]
    dimension: int

    def __post_init__(self) -> None:
        for phrase, vec in self.vectors.items():
            if vec.shape != (self.dimension,):
                raise ValueError(f"vector for {phrase!r} has shape {vec.shape}")

    def lookup(self, phrase: str) -> np.ndarray:
        return self.vectors.get(phrase, np.zeros(self.dimension))

    @classmethod
    def random(cls, phrases: list[str], dimension: int = 16, seed: int = 0) -> "EmbeddingTable":
        """Deterministic random table; the default test/demo embedding source."""
        rng = np.random.default_rng(seed)
        return cls(
            vectors={p: rng.standard_normal(dimension) for p in sorted(set(phrases))},
            dimension=dimension,
        )

    @classmethod
    def load_text(cls, path: str | Path) -> "EmbeddingTable":
        """Load 'phrase v1 v2 ...' lines (word2vec text format, no header)."""
        vectors: dict[str, np.ndarray] = {}
        dim = None
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                vec = np.array([float(x) for x in parts[1:]])
                if dim is None:
                    dim = vec.size
                vectors[parts[0]] = vec
        if dim is None:
            raise ValueError(f"empty embedding file: {path}")
        return cls(vectors=vectors, dimension=dim)


@dataclass
class EmbeddingScores:
    average: float
    extreme: float
    all_oov: bool = False


def _cosine01(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float((1.0 + a.dot(b) / (na * nb)) / 2.0)


def _extreme_vector(vectors: np.ndarray) -> np.ndarray:
    """Per-dimension entry of largest magnitude (sign preserved)."""
    idx = np.argmax(np.abs(vectors), axis=0)
    return vectors[idx, np.arange(vectors.shape[1])]


def embedding_metrics(
    hypothesis: str,
    reference: str,
    table: EmbeddingTable,
    segmenter: Segmenter = content_tokens,
) -> EmbeddingScores:
    """Cosine of mean vectors and of max-magnitude extrema, mapped to [0, 1]."""
    hyp_vecs = [table.lookup(p) for p in segmenter(hypothesis)]
    ref_vecs = [table.lookup(p) for p in segmenter(reference)]
    hyp_mat = np.array(hyp_vecs) if hyp_vecs else np.zeros((1, table.dimension))
    ref_mat = np.array(ref_vecs) if ref_vecs else np.zeros((1, table.dimension))
    all_oov = not hyp_mat.any() or not ref_mat.any()
    if all_oov:
        return EmbeddingScores(average=0.0, extreme=0.0, all_oov=True)
    average = _cosine01(hyp_mat.mean(axis=0), ref_mat.mean(axis=0))
    extreme = _cosine01(_extreme_vector(hyp_mat), _extreme_vector(ref_mat))
    return EmbeddingScores(average=average, extreme=extreme)


def dist_n(hypotheses: list[str], n: int, segmenter: Segmenter = content_tokens) -> float:
    """Distinct n-grams over total n-grams across the hypothesis set."""
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    seen: set[tuple[str, ...]] = set()
    total = 0
    for hyp in hypotheses:
        tokens = segmenter(hyp)
        for i in range(len(tokens) - n + 1):
            seen.add(tuple(tokens[i : i + n]))
            total += 1
    return len(seen) / total if total else 0.0


def _phrase_in_tokens(phrase: tuple[str, ...], tokens: list[str]) -> bool:
    k = len(phrase)
    return any(tuple(tokens[i : i + k]) == phrase for i in range(len(tokens) - k + 1))


def topical_recall(response: str, gold_topical: list[tuple[str, ...]]) -> float | None:
    """Fraction of gold phrases present in the response (token-boundary match).

    Returns None when there are no gold phrases; corpus averages skip such
    samples.
    """
    if not gold_topical:
        return None
    tokens = content_tokens(response)
    hit = sum(1 for p in gold_topical if _phrase_in_tokens(tuple(p), tokens))
    return hit / len(gold_topical)


def label_f1(
    pred_labels: list[list[str]],
    gold_labels: list[list[str]],
    label_set: list[str],
) -> float:
    """Prevalence-weighted macro F1 on multilabel presence.

    A label counts once per sample however often it appears in the sample's
    list; weights are proportional to the number of gold samples carrying the
    label.
    """
    if not gold_labels:
        raise ValueError("empty gold labels")
    if len(pred_labels) != len(gold_labels):
        raise ValueError("pred and gold must align")
    weighted = 0.0
    total_weight = 0
    for label in label_set:
        tp = fp = fn = 0
        support = 0
        for pred, gold in zip(pred_labels, gold_labels):
            p = label in pred
            g = label in gold
            support += g
            tp += p and g
            fp += p and not g
            fn += g and not p
        if support == 0:
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        weighted += support * f1
        total_weight += support
    if total_weight == 0:
        raise ValueError("gold labels carry no label from the label set")
    return weighted / total_weight


def topical_f1(
    pred_phrases: list[tuple[str, ...]], gold_phrases: list[tuple[str, ...]]
) -> float:
    """Set F1 between predicted and gold phrases; both-empty scores 1."""
    pred = {tuple(p) for p in pred_phrases}
    gold = {tuple(p) for p in gold_phrases}
    if not pred and not gold:
        return 1.0
    inter = len(pred & gold)
    precision = inter / len(pred) if pred else 0.0
    recall = inter / len(gold) if gold else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# -- batch evaluation ---------------------------------------------------------

PLANNED = "PLANNED"
GOLD_VARIABLES = "GOLD_VARIABLES"


@dataclass
class MetricReport:
    bleu_1: float
    bleu_2: float
    bleu_3: float
    emb_average: float
    emb_extreme: float
    dist_1: float
    dist_2: float
    topical_recall: float
    das_f1: float
    emotions_f1: float
    topical_f1: float | None = None
    ppl: float | None = None
    mode: str = PLANNED
    per_sample: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "bleu_1": self.bleu_1,
            "bleu_2": self.bleu_2,
            "bleu_3": self.bleu_3,
            "emb_average": self.emb_average,
            "emb_extreme": self.emb_extreme,
            "dist_1": self.dist_1,
            "dist_2": self.dist_2,
            "topical_recall": self.topical_recall,
            "das_f1": self.das_f1,
            "emotions_f1": self.emotions_f1,
            "topical_f1": self.topical_f1,
            "ppl": self.ppl,
            "per_sample": self.per_sample,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )


def _machine_turn_samples(session: AnnotatedSession):
    """(history, pending human index, machine utterance) per Machine turn."""
    for i, utt in enumerate(session.utterances):
        if utt.speaker is Speaker.MACHINE:
            yield i, session.utterances[:i], utt


def evaluate_generation(
    lm: LanguageModel,
    linearizer: Linearizer,
    sessions: list[AnnotatedSession],
    policy: DecodingPolicy,
    mode: str = PLANNED,
    da_clf: SentenceClassifier | None = None,
    emo_clf: SentenceClassifier | None = None,
    table: EmbeddingTable | None = None,
    unit: str = WORD,
    seed: int = 0,
) -> MetricReport:
    """Generate every Machine turn and score it against the gold response.

    History turns are teacher-forced with their gold annotations. In
    GOLD_VARIABLES mode the gold plan of the reference response overrides the
    planning stage (the controllability protocol); PLANNED mode lets the model
    plan. DAs/emotions of generated responses come from sentence splitting
    plus the supplied classifiers.
    """
    if mode not in (PLANNED, GOLD_VARIABLES):
        raise ValueError(f"mode must be {PLANNED} or {GOLD_VARIABLES}")
    if not sessions:
        raise ValueError("empty test set")
    pairs: list[tuple[str, str]] = []
    recalls: list[float] = []
    emb_avg: list[float] = []
    emb_ext: list[float] = []
    pred_das: list[list[str]] = []
    gold_das: list[list[str]] = []
    pred_emos: list[list[str]] = []
    gold_emos: list[list[str]] = []
    per_sample: list[dict] = []

    if table is None:
        phrases = sorted(
            {tok for s in sessions for u in s.utterances for tok in content_tokens(u.text)}
        )
        table = EmbeddingTable.random(phrases)

    sample_index = 0
    for session in sessions:
        for i, history_utts, machine_utt in _machine_turn_samples(session):
            history = [
                HistoryTurn(u.speaker, u.text, u.annotation) for u in history_utts
            ]
            override = machine_utt.annotation if mode == GOLD_VARIABLES else None
            trace = respond(
                lm,
                linearizer,
                session.context,
                history,
                policy,
                plan_override=override,
                seed=seed + sample_index,
            )
            sample_index += 1
            hyp, ref = trace.response, machine_utt.text
            pairs.append((hyp, ref))
            gold_topical = list(machine_utt.annotation.topical_words)
            recall = topical_recall(hyp, gold_topical)
            if recall is not None:
                recalls.append(recall)
            scores = embedding_metrics(hyp, ref, table)
            emb_avg.append(scores.average)
            emb_ext.append(scores.extreme)
            if da_clf is not None and emo_clf is not None:
                sentences = split_sentences(hyp)
                pred_das.append(classify_sentences(da_clf, sentences))
                pred_emos.append(classify_sentences(emo_clf, sentences))
                gold_das.append([d.value for d in machine_utt.annotation.dialogue_acts])
                gold_emos.append([e.value for e in machine_utt.annotation.emotions])
            per_sample.append(
                {
                    "session_id": session.session_id,
                    "turn": i,
                    "response": hyp,
                    "reference": ref,
                    "topical_recall": recall,
                    "planned": trace.planned.to_dict() if trace.planned else None,
                    "plan_overridden": trace.plan_overridden,
                }
            )

    hyps = [h for h, _ in pairs]
    das_f1 = label_f1(pred_das, gold_das, [l for l in _da_label_set()]) if pred_das else 0.0
    emos_f1 = (
        label_f1(pred_emos, gold_emos, [l for l in _emo_label_set()]) if pred_emos else 0.0
    )
    return MetricReport(
        bleu_1=corpus_bleu_n(pairs, 1, unit),
        bleu_2=corpus_bleu_n(pairs, 2, unit),
        bleu_3=corpus_bleu_n(pairs, 3, unit),
        emb_average=float(np.mean(emb_avg)) if emb_avg else 0.0,
        emb_extreme=float(np.mean(emb_ext)) if emb_ext else 0.0,
        dist_1=dist_n(hyps, 1),
        dist_2=dist_n(hyps, 2),
        topical_recall=float(np.mean(recalls)) if recalls else 0.0,
        das_f1=das_f1,
        emotions_f1=emos_f1,
        mode=mode,
        per_sample=per_sample,
    )


def _da_label_set() -> list[str]:
    from .corpus import DA_LABELS

    return list(DA_LABELS)


def _emo_label_set() -> list[str]:
    from .corpus import EMOTION_LABELS

    return list(EMOTION_LABELS)


@dataclass
class UnderstandingReport:
    """Accuracy of the understanding stage against gold annotations."""

    topical_f1: float
    das_f1: float
    emotions_f1: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "topical_f1": self.topical_f1,
            "das_f1": self.das_f1,
            "emotions_f1": self.emotions_f1,
            "n_samples": self.n_samples,
        }


def evaluate_understanding(
    lm: LanguageModel,
    linearizer: Linearizer,
    sessions: list[AnnotatedSession],
    policy: DecodingPolicy,
) -> UnderstandingReport:
    """Decode the understanding span for every Human turn and compare to gold."""
    topical_scores: list[float] = []
    pred_das: list[list[str]] = []
    gold_das: list[list[str]] = []
    pred_emos: list[list[str]] = []
    gold_emos: list[list[str]] = []
    for session in sessions:
        for i, utt in enumerate(session.utterances):
            if utt.speaker is not Speaker.HUMAN:
                continue
            history = [
                HistoryTurn(u.speaker, u.text, u.annotation)
                for u in session.utterances[: i + 1]
            ]
            dec = build_decoder(lm, linearizer, session.context, history)
            parsed, _ = understand(dec, policy)
            gold = utt.annotation
            topical_scores.append(
                topical_f1(
                    [tuple(p) for p in parsed.annotation.topical_words],
                    [tuple(p) for p in gold.topical_words],
                )
            )
            pred_das.append([d.value for d in parsed.annotation.dialogue_acts])
            gold_das.append([d.value for d in gold.dialogue_acts])
            pred_emos.append([e.value for e in parsed.annotation.emotions])
            gold_emos.append([e.value for e in gold.emotions])
    if not topical_scores:
        raise ValueError("no Human turns to evaluate")
    return UnderstandingReport(
        topical_f1=float(np.mean(topical_scores)),
        das_f1=label_f1(pred_das, gold_das, _da_label_set()),
        emotions_f1=label_f1(pred_emos, gold_emos, _emo_label_set()),
        n_samples=len(topical_scores),
    )
