"""Data model for annotated dialogue sessions.

A session is an alternating Human/Machine utterance list, optionally grounded
on a non-conversational context string. Each utterance may carry a semantic
annotation: one emotion and one dialogue-act label per sentence, plus the
deduplicated topical phrases found in the utterance. Sessions are stored as
UTF-8 JSON lines with a fixed field order so that save -> load -> save is
byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path


class Speaker(str, Enum):
    HUMAN = "human"
    MACHINE = "machine"

    def flipped(self) -> "Speaker":
        return Speaker.MACHINE if self is Speaker.HUMAN else Speaker.HUMAN


class EmotionLabel(str, Enum):
    FEAR = "Fear"
    SURPRISE = "Surprise"
    ANGER = "Anger"
    DISGUST = "Disgust"
    LIKE = "Like"
    HAPPINESS = "Happiness"
    SADNESS = "Sadness"
    NONE = "None"


class DALabel(str, Enum):
    INFORM = "Inform"
    QUESTION = "Question"
    DIRECTIVE = "Directive"
    COMMISSIVE = "Commissive"


EMOTION_LABELS = [label.value for label in EmotionLabel]
DA_LABELS = [label.value for label in DALabel]

# A topical phrase is an ordered list of surface tokens.
Phrase = list[str]


class CorpusError(Exception):
    """Base error for corpus loading and validation."""


class ParseError(CorpusError):
    """Malformed record in a corpus file."""


class ValidationError(CorpusError):
    """A session violates a data-model invariant."""


@dataclass(frozen=True)
class SemanticAnnotation:
    """Per-utterance semantic record: emotions, dialogue acts, topical words.

    ``emotions`` and ``dialogue_acts`` are parallel to the utterance's
    sentences; ``topical_words`` holds deduplicated phrases in order of first
    occurrence.
    """

    emotions: tuple[EmotionLabel, ...] = ()
    dialogue_acts: tuple[DALabel, ...] = ()
    topical_words: tuple[tuple[str, ...], ...] = ()

    @staticmethod
    def make(
        emotions: list[EmotionLabel | str],
        dialogue_acts: list[DALabel | str],
        topical_words: list[list[str]],
    ) -> "SemanticAnnotation":
        return SemanticAnnotation(
            emotions=tuple(EmotionLabel(e) for e in emotions),
            dialogue_acts=tuple(DALabel(d) for d in dialogue_acts),
            topical_words=tuple(tuple(p) for p in topical_words),
        )

    def validate(self, n_sentences: int | None = None) -> None:
        if len(self.emotions) != len(self.dialogue_acts):
            raise ValidationError(
                f"emotions ({len(self.emotions)}) and dialogue_acts "
                f"({len(self.dialogue_acts)}) must be parallel"
            )
        if n_sentences is not None and len(self.emotions) != n_sentences:
            raise ValidationError(
                f"annotation has {len(self.emotions)} labels for "
                f"{n_sentences} sentences"
            )
        if len(set(self.topical_words)) != len(self.topical_words):
            raise ValidationError("topical_words contains duplicate phrases")

    def to_dict(self) -> dict:
        return {
            "emotions": [e.value for e in self.emotions],
            "dialogue_acts": [d.value for d in self.dialogue_acts],
            "topical_words": [list(p) for p in self.topical_words],
        }

    @staticmethod
    def from_dict(d: dict) -> "SemanticAnnotation":
        try:
            return SemanticAnnotation.make(
                d.get("emotions", []),
                d.get("dialogue_acts", []),
                d.get("topical_words", []),
            )
        except ValueError as exc:
            raise ValidationError(f"unknown label in annotation: {exc}") from exc


@dataclass(frozen=True)
class Utterance:
    speaker: Speaker
    text: str
    sentences: tuple[str, ...] | None = None
    annotation: SemanticAnnotation | None = None

    def validate(self) -> None:
        if self.sentences is not None:
            # Sentence segments keep their terminators but shed surrounding
            # whitespace, so compare the non-whitespace character stream.
            joined = "".join(self.sentences)
            if _squash(joined) != _squash(self.text):
                raise ValidationError(
                    f"sentences do not reassemble utterance text: {self.text!r}"
                )
        if self.annotation is not None:
            n = len(self.sentences) if self.sentences is not None else None
            self.annotation.validate(n)

    def to_dict(self) -> dict:
        d: dict = {"speaker": self.speaker.value, "text": self.text}
        if self.sentences is not None:
            d["sentences"] = list(self.sentences)
        if self.annotation is not None:
            d["annotation"] = self.annotation.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "Utterance":
        try:
            speaker = Speaker(d["speaker"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad speaker field: {exc}") from exc
        sentences = tuple(d["sentences"]) if "sentences" in d else None
        annotation = (
            SemanticAnnotation.from_dict(d["annotation"]) if "annotation" in d else None
        )
        return Utterance(
            speaker=speaker,
            text=d.get("text", ""),
            sentences=sentences,
            annotation=annotation,
        )


def _squash(text: str) -> str:
    return "".join(text.split())


@dataclass(frozen=True)
class AnnotatedSession:
    """A multi-turn dialogue, Human first, speakers strictly alternating."""

    session_id: str
    utterances: tuple[Utterance, ...]
    context: str = ""

    def validate(self) -> None:
        if not self.utterances:
            raise ValidationError(f"session {self.session_id}: no utterances")
        if self.utterances[0].speaker is not Speaker.HUMAN:
            raise ValidationError(
                f"session {self.session_id}: first speaker must be human"
            )
        for i, utt in enumerate(self.utterances):
            expected = Speaker.HUMAN if i % 2 == 0 else Speaker.MACHINE
            if utt.speaker is not expected:
                raise ValidationError(
                    f"session {self.session_id}: speakers do not alternate "
                    f"at utterance {i}"
                )
            try:
                utt.validate()
            except ValidationError as exc:
                raise ValidationError(
                    f"session {self.session_id}, utterance {i}: {exc}"
                ) from exc

    @property
    def is_annotated(self) -> bool:
        return all(u.annotation is not None for u in self.utterances)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "context": self.context,
            "utterances": [u.to_dict() for u in self.utterances],
        }

    @staticmethod
    def from_dict(d: dict) -> "AnnotatedSession":
        if "session_id" not in d:
            raise ValidationError("record missing session_id")
        return AnnotatedSession(
            session_id=str(d["session_id"]),
            context=d.get("context") or "",
            utterances=tuple(Utterance.from_dict(u) for u in d.get("utterances", [])),
        )


@dataclass(frozen=True)
class TrainingView:
    """One role assignment of a session.

    The flipped view reuses the original utterance text and annotations but
    swaps who is Human and who is Machine, so a single session yields two
    training samples.
    """

    session_id: str
    context: str
    utterances: tuple[Utterance, ...]
    flipped: bool = False

    def validate(self) -> None:
        if not self.utterances:
            raise ValidationError(f"view of {self.session_id}: no utterances")
        first = self.utterances[0].speaker
        for i, utt in enumerate(self.utterances):
            expected = first if i % 2 == 0 else first.flipped()
            if utt.speaker is not expected:
                raise ValidationError(
                    f"view of {self.session_id}: speakers do not alternate"
                )


@dataclass
class CorpusSplit:
    train: list[AnnotatedSession] = field(default_factory=list)
    valid: list[AnnotatedSession] = field(default_factory=list)
    test: list[AnnotatedSession] = field(default_factory=list)

    def validate(self) -> None:
        seen: dict[str, str] = {}
        for name in ("train", "valid", "test"):
            for session in getattr(self, name):
                if session.session_id in seen:
                    raise ValidationError(
                        f"session_id {session.session_id} appears in both "
                        f"{seen[session.session_id]} and {name}"
                    )
                seen[session.session_id] = name


@dataclass
class StatsReport:
    """Corpus statistics: one row of the dataset-summary table."""

    sessions: int
    utterances_per_session: float
    tokens_per_utterance: float
    labels_per_utterance: float
    topical_per_utterance: float

    def to_dict(self) -> dict:
        return {
            "sessions": self.sessions,
            "utterances_per_session": self.utterances_per_session,
            "tokens_per_utterance": self.tokens_per_utterance,
            "labels_per_utterance": self.labels_per_utterance,
            "topical_per_utterance": self.topical_per_utterance,
        }


def load_corpus(path: str | Path, split: str | None = None) -> list[AnnotatedSession]:
    """Load a line-delimited session file, validating every record.

    ``path`` may be a corpus directory, in which case ``split`` names the
    file to read (train/valid/test).
    """
    path = Path(path)
    if path.is_dir():
        if split not in ("train", "valid", "test"):
            raise ValueError(
                f"loading from a corpus directory needs split in train/valid/test, got {split!r}"
            )
        path = path / f"{split}.jsonl"
    sessions: list[AnnotatedSession] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed record: {exc}") from exc
            session = AnnotatedSession.from_dict(record)
            session.validate()
            if session.session_id in seen_ids:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate session_id {session.session_id}"
                )
            seen_ids.add(session.session_id)
            sessions.append(session)
    return sessions


def save_corpus(sessions: list[AnnotatedSession], path: str | Path) -> None:
    """Write sessions as JSON lines with canonical field order."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for session in sessions:
            fh.write(json.dumps(session.to_dict(), ensure_ascii=False))
            fh.write("\n")


def load_split(paths: dict[str, str | Path]) -> CorpusSplit:
    """Load train/valid/test files into a split and check id disjointness."""
    split = CorpusSplit(
        train=load_corpus(paths["train"]) if "train" in paths else [],
        valid=load_corpus(paths["valid"]) if "valid" in paths else [],
        test=load_corpus(paths["test"]) if "test" in paths else [],
    )
    split.validate()
    return split


def derive_training_views(
    session: AnnotatedSession, keep_machine_openers: bool = True
) -> list[TrainingView]:
    """Derive the two role-assignment views of a fully annotated session.

    View 1 keeps the original roles; view 2 flips every speaker. Flipping an
    odd-length session yields a Machine opener, which downstream linearization
    renders as planning + generation with empty history; set
    ``keep_machine_openers=False`` to drop such views instead.
    """
    for i, utt in enumerate(session.utterances):
        if utt.annotation is None:
            raise ValidationError(
                f"session {session.session_id}: utterance {i} is not annotated"
            )
    original = TrainingView(
        session_id=session.session_id,
        context=session.context,
        utterances=session.utterances,
        flipped=False,
    )
    flipped = TrainingView(
        session_id=session.session_id,
        context=session.context,
        utterances=tuple(
            replace(u, speaker=u.speaker.flipped()) for u in session.utterances
        ),
        flipped=True,
    )
    views = [original, flipped]
    if not keep_machine_openers:
        views = [
            v for v in views if v.utterances[0].speaker is Speaker.HUMAN
        ]
    return views


def corpus_stats(sessions: list[AnnotatedSession]) -> StatsReport:
    """Dataset-summary statistics over one split."""
    from .tokenizer import content_token_count

    if not sessions:
        return StatsReport(0, 0.0, 0.0, 0.0, 0.0)
    n_utt = 0
    n_tokens = 0
    n_labels = 0
    n_topical = 0
    for session in sessions:
        n_utt += len(session.utterances)
        for utt in session.utterances:
            n_tokens += content_token_count(utt.text)
            if utt.annotation is not None:
                n_labels += len(utt.annotation.dialogue_acts)
                n_topical += len(utt.annotation.topical_words)
    return StatsReport(
        sessions=len(sessions),
        utterances_per_session=n_utt / len(sessions),
        tokens_per_utterance=n_tokens / n_utt,
        labels_per_utterance=n_labels / n_utt,
        topical_per_utterance=n_topical / n_utt,
    )
