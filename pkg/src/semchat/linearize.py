"""Flat-sequence serialization of annotated dialogue views.

A training view becomes one token sequence: context, [CLS], then per turn the
Human utterance, the Human-side semantic span (understanding target), the
Machine-side semantic span (planning target), and the Machine utterance
(generation target). Each position carries one of five token types, and a
boolean loss mask selects the supervised positions: semantic values with their
separators and terminators, and Machine utterance content with its trailing
[SEP]. Variable keys, speaker markers, [CLS], context, and Human utterances
are conditioning only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .corpus import (
    DALabel,
    EmotionLabel,
    SemanticAnnotation,
    Speaker,
    TrainingView,
)
from .tokenizer import Tokenizer

EMOTION_KEY = "emotion"
DIALOG_ACT_KEY = "dialogue_act"
TOPICAL_KEY = "topical"
VARIABLE_KEYS = (EMOTION_KEY, DIALOG_ACT_KEY, TOPICAL_KEY)


class TokenType(IntEnum):
    HUMAN_UTT = 0
    MACHINE_UTT = 1
    HUMAN_SEM = 2
    MACHINE_SEM = 3
    CONTEXT = 4


class LinearizeError(Exception):
    pass


class SpanParseError(LinearizeError):
    """A semantic-variable span does not follow the key/value grammar."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


@dataclass(frozen=True)
class LinearizationScheme:
    variable_order: tuple[str, ...] = VARIABLE_KEYS
    include_understanding: bool = True
    include_planning: bool = True
    max_sequence_length: int = 512
    truncation: str = "drop_oldest_turns"

    def __post_init__(self) -> None:
        if sorted(self.variable_order) != sorted(VARIABLE_KEYS):
            raise ValueError(
                f"variable_order must permute {VARIABLE_KEYS}, got {self.variable_order}"
            )


@dataclass(frozen=True)
class Span:
    """Half-open position range of one sequence element."""

    name: str  # "context" | "cls" | "utterance" | "semantics"
    index: int  # utterance index within the view, -1 for context/cls
    start: int
    end: int


@dataclass
class LinearizedExample:
    token_ids: list[int]
    token_type_ids: list[int]
    loss_mask: list[bool]
    spans: list[Span] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (len(self.token_ids) == len(self.token_type_ids) == len(self.loss_mask)):
            raise ValueError("token_ids, token_type_ids, loss_mask must align")

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass
class ParsedVariables:
    """Result of parsing a semantic-variable span back into structure.

    Value tokens that are not legal for their key (e.g. a content token inside
    an emotion list) are excluded from the typed annotation and surfaced in
    ``invalid_values``.
    """

    annotation: SemanticAnnotation
    valid: bool = True
    invalid_values: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class _Segment:
    name: str
    index: int
    ids: list[int]
    types: list[int]
    mask: list[bool]


class Linearizer:
    """Converts annotated views to token sequences and spans back."""

    def __init__(self, tokenizer: Tokenizer, scheme: LinearizationScheme | None = None):
        self.tokenizer = tokenizer
        self.scheme = scheme or LinearizationScheme()

    # -- semantic-variable spans ------------------------------------------

    def key_token(self, key: str) -> int:
        sp = self.tokenizer.specials
        return {
            EMOTION_KEY: sp.emotion,
            DIALOG_ACT_KEY: sp.dialog_act,
            TOPICAL_KEY: sp.topical,
        }[key]

    def value_ids(self, key: str, ann: SemanticAnnotation) -> list[list[int]]:
        """Token ids of each list item for one variable key."""
        if key == EMOTION_KEY:
            return [[self.tokenizer.emotion_label_ids[e.value]] for e in ann.emotions]
        if key == DIALOG_ACT_KEY:
            return [[self.tokenizer.da_label_ids[d.value]] for d in ann.dialogue_acts]
        if key == TOPICAL_KEY:
            return [self.tokenizer.encode_tokens(p) for p in ann.topical_words]
        raise ValueError(f"unknown variable key {key!r}")

    def linearize_variables(
        self, ann: SemanticAnnotation, owner: Speaker
    ) -> _Segment:
        """Emit key, values joined by <list_sep>, <eokv> for each variable.

        Keys carry no loss; values, separators, and terminators do.
        """
        sp = self.tokenizer.specials
        sem_type = (
            TokenType.HUMAN_SEM if owner is Speaker.HUMAN else TokenType.MACHINE_SEM
        )
        ids: list[int] = []
        mask: list[bool] = []
        for key in self.scheme.variable_order:
            ids.append(self.key_token(key))
            mask.append(False)
            for j, item in enumerate(self.value_ids(key, ann)):
                if j > 0:
                    ids.append(sp.list_sep)
                    mask.append(True)
                ids.extend(item)
                mask.extend([True] * len(item))
            ids.append(sp.eokv)
            mask.append(True)
        return _Segment(
            name="semantics",
            index=-1,
            ids=ids,
            types=[int(sem_type)] * len(ids),
            mask=mask,
        )

    def parse_variables(self, span: list[int]) -> ParsedVariables:
        """Inverse of linearize_variables over one span of token ids."""
        sp = self.tokenizer.specials
        key_names = {
            sp.emotion: EMOTION_KEY,
            sp.dialog_act: DIALOG_ACT_KEY,
            sp.topical: TOPICAL_KEY,
        }
        values: dict[str, list[list[int]]] = {}
        invalid: list[tuple[str, str]] = []
        pos = 0
        while pos < len(span):
            key_id = span[pos]
            if key_id not in key_names:
                raise SpanParseError(
                    f"expected a variable key token, got {self.tokenizer.surface(key_id)!r}",
                    pos,
                )
            key = key_names[key_id]
            if key in values:
                raise SpanParseError(f"repeated key {key!r}", pos)
            pos += 1
            items: list[list[int]] = []
            current: list[int] = []
            closed = False
            while pos < len(span):
                tok = span[pos]
                if tok == sp.eokv:
                    closed = True
                    pos += 1
                    break
                if tok == sp.list_sep:
                    items.append(current)
                    current = []
                else:
                    current.append(tok)
                pos += 1
            if not closed:
                raise SpanParseError(f"missing <eokv> for key {key!r}", pos)
            if current or items:
                items.append(current)
            values[key] = items

        emotions: list[EmotionLabel] = []
        acts: list[DALabel] = []
        topical: list[list[str]] = []
        for key, items in values.items():
            for item in items:
                if key == TOPICAL_KEY:
                    if item and all(not self.tokenizer.is_reserved(t) for t in item):
                        phrase = [self.tokenizer.surface(t) for t in item]
                        if tuple(phrase) not in {tuple(p) for p in topical}:
                            topical.append(phrase)
                    else:
                        invalid.append((key, self.tokenizer.decode(item)))
                    continue
                label = (
                    self.tokenizer.label_name(item[0]) if len(item) == 1 else None
                )
                if key == EMOTION_KEY and label in {e.value for e in EmotionLabel}:
                    emotions.append(EmotionLabel(label))
                elif key == DIALOG_ACT_KEY and label in {d.value for d in DALabel}:
                    acts.append(DALabel(label))
                else:
                    invalid.append((key, self.tokenizer.decode(item)))
        return ParsedVariables(
            annotation=SemanticAnnotation.make(emotions, acts, topical),
            valid=not invalid,
            invalid_values=invalid,
        )

    # -- whole-view linearization -----------------------------------------

    def _utterance_segment(self, utt, index: int) -> _Segment:
        sp = self.tokenizer.specials
        if utt.speaker is Speaker.HUMAN:
            marker, utt_type, content_loss = sp.human, TokenType.HUMAN_UTT, False
        else:
            marker, utt_type, content_loss = sp.machine, TokenType.MACHINE_UTT, True
        content = self.tokenizer.encode(utt.text)
        ids = [marker] + content + [sp.sep]
        mask = [False] + [content_loss] * len(content) + [content_loss]
        return _Segment(
            name="utterance",
            index=index,
            ids=ids,
            types=[int(utt_type)] * len(ids),
            mask=mask,
        )

    def _view_segments(self, view: TrainingView) -> tuple[list[_Segment], list[list[int]]]:
        """Per-element segments plus turn-block grouping for truncation."""
        segments: list[_Segment] = []
        blocks: list[list[int]] = []
        current_block: list[int] = []
        for i, utt in enumerate(view.utterances):
            is_human = utt.speaker is Speaker.HUMAN
            include_sem = (
                self.scheme.include_understanding
                if is_human
                else self.scheme.include_planning
            )
            if include_sem and utt.annotation is None:
                raise LinearizeError(
                    f"view of {view.session_id}: utterance {i} lacks an annotation"
                )
            parts: list[_Segment] = []
            if is_human:
                parts.append(self._utterance_segment(utt, i))
                if include_sem:
                    sem = self.linearize_variables(utt.annotation, Speaker.HUMAN)
                    sem.index = i
                    parts.append(sem)
            else:
                if include_sem:
                    sem = self.linearize_variables(utt.annotation, Speaker.MACHINE)
                    sem.index = i
                    parts.append(sem)
                parts.append(self._utterance_segment(utt, i))
            for part in parts:
                current_block.append(len(segments))
                segments.append(part)
            # A turn block closes after each Machine utterance; a trailing
            # Human utterance forms its own block.
            if not is_human or i == len(view.utterances) - 1:
                blocks.append(current_block)
                current_block = []
        return segments, blocks

    def linearize_session(self, view: TrainingView) -> LinearizedExample:
        """Linearize one view, truncating oldest whole turns when over-long."""
        view.validate()
        sp = self.tokenizer.specials
        prefix: list[_Segment] = []
        if view.context:
            ids = self.tokenizer.encode(view.context)
            prefix.append(
                _Segment(
                    "context", -1, ids, [int(TokenType.CONTEXT)] * len(ids), [False] * len(ids)
                )
            )
        prefix.append(_Segment("cls", -1, [sp.cls], [int(TokenType.CONTEXT)], [False]))

        segments, blocks = self._view_segments(view)
        prefix_len = sum(len(s.ids) for s in prefix)
        block_lens = [
            sum(len(segments[j].ids) for j in block) for block in blocks
        ]
        start_block = 0
        while (
            start_block < len(blocks) - 1
            and prefix_len + sum(block_lens[start_block:]) > self.scheme.max_sequence_length
        ):
            start_block += 1
        if prefix_len + sum(block_lens[start_block:]) > self.scheme.max_sequence_length:
            raise LinearizeError(
                f"view of {view.session_id}: a single turn exceeds "
                f"max_sequence_length={self.scheme.max_sequence_length}"
            )

        kept = prefix + [
            segments[j] for block in blocks[start_block:] for j in block
        ]
        ids: list[int] = []
        types: list[int] = []
        mask: list[bool] = []
        spans: list[Span] = []
        for seg in kept:
            start = len(ids)
            ids.extend(seg.ids)
            types.extend(seg.types)
            mask.extend(seg.mask)
            spans.append(Span(seg.name, seg.index, start, len(ids)))
        return LinearizedExample(
            token_ids=ids, token_type_ids=types, loss_mask=mask, spans=spans
        )

    def machine_utterance_text(self, example: LinearizedExample, span: Span) -> str:
        """Decode the content of a Machine utterance span (marker/SEP removed)."""
        ids = example.token_ids[span.start + 1 : span.end - 1]
        return self.tokenizer.decode(ids)
