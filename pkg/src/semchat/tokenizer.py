"""Tokenization and the reserved vocabulary.

Content text is segmented losslessly: ASCII words stay whole, whitespace runs
are standalone tokens, and every other character (CJK included) is a
single-character token, so ``detokenize(tokenize(x)) == x`` for any string the
vocabulary covers. The vocabulary reserves a header block of ids for the nine
structural tokens, padding/unknown, and the emotion and dialogue-act label
tokens; content segmentation can never produce a reserved surface form.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import DA_LABELS, EMOTION_LABELS

_SEGMENT_RE = re.compile(r"[A-Za-z0-9_']+|\s+|.", re.DOTALL)

# Canonical surfaces of the nine structural tokens.
TOPICAL = "<topical>"
EMOTION = "<emotion>"
DIALOG_ACT = "<dialog_act>"
LIST_SEP = "<list_sep>"
EOKV = "<eokv>"
CLS = "[CLS]"
HUMAN = "<human>"
MACHINE = "<machine>"
SEP = "[SEP]"

PAD = "<pad>"
UNK = "<unk>"

STRUCTURAL_SURFACES = [TOPICAL, EMOTION, DIALOG_ACT, LIST_SEP, EOKV, CLS, HUMAN, MACHINE, SEP]
EMOTION_TOKEN_SURFACES = [f"<emo:{name}>" for name in EMOTION_LABELS]
DA_TOKEN_SURFACES = [f"<da:{name}>" for name in DA_LABELS]
RESERVED_SURFACES = STRUCTURAL_SURFACES + [PAD, UNK] + EMOTION_TOKEN_SURFACES + DA_TOKEN_SURFACES

_VOCAB_MAGIC = "#semchat-vocab v1"
_CONTENT_MARKER = "#content"


def segment_text(text: str) -> list[str]:
    """Split text into surface tokens; concatenation reproduces the input."""
    return _SEGMENT_RE.findall(text)


def is_whitespace_token(token: str) -> bool:
    return token.isspace()


def content_tokens(text: str) -> list[str]:
    """Surface tokens excluding whitespace runs."""
    return [t for t in segment_text(text) if not is_whitespace_token(t)]


def content_token_count(text: str) -> int:
    return len(content_tokens(text))


def phrase_text(tokens: list[str] | tuple[str, ...]) -> str:
    """Render a phrase's tokens; ASCII-word neighbours get a joining space."""
    out: list[str] = []
    for i, tok in enumerate(tokens):
        if i > 0 and _wordy(tokens[i - 1]) and _wordy(tok):
            out.append(" ")
        out.append(tok)
    return "".join(out)


def _wordy(token: str) -> bool:
    return bool(token) and (token[-1].isascii() and token[-1].isalnum())


@dataclass(frozen=True)
class SpecialTokens:
    """Reserved ids of the structural tokens."""

    topical: int
    emotion: int
    dialog_act: int
    list_sep: int
    eokv: int
    cls: int
    human: int
    machine: int
    sep: int

    def all_ids(self) -> tuple[int, ...]:
        return (
            self.topical,
            self.emotion,
            self.dialog_act,
            self.list_sep,
            self.eokv,
            self.cls,
            self.human,
            self.machine,
            self.sep,
        )


class Tokenizer:
    """Vocabulary-backed tokenizer with a fixed reserved header block.

    ids 0..8 are the structural tokens, 9/10 pad and unknown, then the eight
    emotion and four dialogue-act label tokens, then sorted content tokens.
    """

    def __init__(self, content: list[str]):
        if len(set(content)) != len(content):
            raise ValueError("duplicate content tokens")
        for tok in content:
            if tok in RESERVED_SURFACES:
                raise ValueError(f"content token collides with reserved: {tok!r}")
        self._surfaces: list[str] = list(RESERVED_SURFACES) + list(content)
        self._ids: dict[str, int] = {s: i for i, s in enumerate(self._surfaces)}
        self._content_ids: dict[str, int] = {
            s: self._ids[s] for s in content
        }
        self.specials = SpecialTokens(*(self._ids[s] for s in STRUCTURAL_SURFACES))
        self.pad_id = self._ids[PAD]
        self.unk_id = self._ids[UNK]
        self.emotion_label_ids = {
            name: self._ids[f"<emo:{name}>"] for name in EMOTION_LABELS
        }
        self.da_label_ids = {name: self._ids[f"<da:{name}>"] for name in DA_LABELS}
        self._label_names = {
            tid: name for name, tid in self.emotion_label_ids.items()
        }
        self._label_names.update(
            {tid: name for name, tid in self.da_label_ids.items()}
        )
        self.label_ids = tuple(self._label_names)
        self.whitespace_ids = tuple(
            self._ids[s] for s in content if s.isspace()
        )

    @classmethod
    def build(cls, texts: list[str], extra_tokens: list[str] | None = None) -> "Tokenizer":
        """Collect the content vocabulary from a corpus of strings."""
        seen: set[str] = set()
        for text in texts:
            seen.update(segment_text(text))
        if extra_tokens:
            seen.update(extra_tokens)
        seen -= set(RESERVED_SURFACES)
        return cls(sorted(seen))

    @property
    def vocab_size(self) -> int:
        return len(self._surfaces)

    @property
    def reserved_size(self) -> int:
        return len(RESERVED_SURFACES)

    def surface(self, token_id: int) -> str:
        return self._surfaces[token_id]

    def id_of(self, surface: str) -> int:
        return self._ids[surface]

    def is_reserved(self, token_id: int) -> bool:
        return token_id < len(RESERVED_SURFACES)

    def is_whitespace_id(self, token_id: int) -> bool:
        return not self.is_reserved(token_id) and self._surfaces[token_id].isspace()

    def label_name(self, token_id: int) -> str | None:
        """Label behind a label token id, or None for non-label ids."""
        return self._label_names.get(token_id)

    def encode(self, text: str) -> list[int]:
        """Map text to content-token ids; unseen surfaces become <unk>."""
        return [
            self._content_ids.get(seg, self.unk_id) for seg in segment_text(text)
        ]

    def encode_tokens(self, tokens: list[str] | tuple[str, ...]) -> list[int]:
        """Map pre-segmented surface tokens (e.g. a phrase) to ids."""
        return [self._content_ids.get(tok, self.unk_id) for tok in tokens]

    def decode(self, ids: list[int]) -> str:
        """Concatenate the surfaces of content ids; reserved ids render as-is."""
        return "".join(self._surfaces[i] for i in ids)

    def fingerprint(self) -> str:
        payload = "\n".join(self._surfaces).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        lines = [_VOCAB_MAGIC]
        lines.extend(RESERVED_SURFACES)
        lines.append(_CONTENT_MARKER)
        # Content tokens can be whitespace runs, so JSON-encode each line.
        lines.extend(json.dumps(s, ensure_ascii=False) for s in self._surfaces[len(RESERVED_SURFACES):])
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != _VOCAB_MAGIC:
            raise ValueError(f"not a vocabulary file: {path}")
        n_res = len(RESERVED_SURFACES)
        header = lines[1 : 1 + n_res]
        if header != RESERVED_SURFACES:
            raise ValueError("vocabulary reserved block does not match this version")
        if lines[1 + n_res] != _CONTENT_MARKER:
            raise ValueError("missing content marker in vocabulary file")
        content = [json.loads(line) for line in lines[2 + n_res :] if line]
        return cls(content)
