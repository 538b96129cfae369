"""Three-stage constrained decoding: understand, plan, generate.

All three stages share one growing token prefix and one model interface (a
probability vector for the next position). They differ in sampling method and
constraints: understanding and planning decode each semantic value span
greedily with per-key length bounds enforced by forcing the <eokv> probability
to 0 (below the minimum) or 1 (at the maximum); topic planning additionally
suppresses already-generated n-gram prefixes; response generation samples with
top-k/top-p/temperature and forces [SEP] the same way. A caller-supplied plan
can replace the planning stage for human-in-the-loop control.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import SemanticAnnotation, Speaker
from .linearize import (
    DIALOG_ACT_KEY,
    EMOTION_KEY,
    TOPICAL_KEY,
    Linearizer,
    ParsedVariables,
    TokenType,
)
from .tokenizer import Tokenizer

GREEDY = "greedy"
TOPK_TOPP = "topk_topp"


class LanguageModel(Protocol):
    """Anything that predicts the next-token distribution for a prefix."""

    def next_token_distribution(
        self, prefix_ids: list[int], prefix_type_ids: list[int]
    ) -> np.ndarray: ...


@dataclass
class StagePolicy:
    sampling: str = GREEDY
    top_k: int = 50
    top_p: float = 0.9
    temperature: float = 0.7
    bounds: dict[str, tuple[int, int]] = field(default_factory=dict)
    repetition_enabled: bool = False
    repetition_n: int = 2

    def __post_init__(self) -> None:
        if self.sampling not in (GREEDY, TOPK_TOPP):
            raise ValueError(f"unknown sampling method {self.sampling!r}")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.repetition_n < 1:
            raise ValueError("repetition_n must be >= 1")
        for key, (lo, hi) in self.bounds.items():
            if lo < 0 or lo > hi:
                raise ValueError(f"bad bounds for {key!r}: ({lo}, {hi})")

    def to_dict(self) -> dict:
        return {
            "sampling": self.sampling,
            "top_k": self.top_k,
            "top_p": self.top_p,
            "temperature": self.temperature,
            "bounds": {k: list(v) for k, v in self.bounds.items()},
            "repetition_enabled": self.repetition_enabled,
            "repetition_n": self.repetition_n,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StagePolicy":
        d = dict(d)
        d["bounds"] = {k: tuple(v) for k, v in d.get("bounds", {}).items()}
        return cls(**d)


@dataclass
class DecodingPolicy:
    understanding: StagePolicy
    planning: StagePolicy
    response: StagePolicy
    use_understanding: bool = True
    use_planning: bool = True

    def to_dict(self) -> dict:
        return {
            "understanding": self.understanding.to_dict(),
            "planning": self.planning.to_dict(),
            "response": self.response.to_dict(),
            "use_understanding": self.use_understanding,
            "use_planning": self.use_planning,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecodingPolicy":
        return cls(
            understanding=StagePolicy.from_dict(d["understanding"]),
            planning=StagePolicy.from_dict(d["planning"]),
            response=StagePolicy.from_dict(d["response"]),
            use_understanding=d.get("use_understanding", True),
            use_planning=d.get("use_planning", True),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DecodingPolicy":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_policy() -> DecodingPolicy:
    """Greedy understanding/planning, sampled responses; stock length bounds."""
    return DecodingPolicy(
        understanding=StagePolicy(
            sampling=GREEDY,
            bounds={EMOTION_KEY: (0, 10), DIALOG_ACT_KEY: (0, 10), TOPICAL_KEY: (0, 20)},
        ),
        planning=StagePolicy(
            sampling=GREEDY,
            bounds={EMOTION_KEY: (0, 10), DIALOG_ACT_KEY: (0, 10), TOPICAL_KEY: (5, 20)},
            repetition_enabled=True,
            repetition_n=2,
        ),
        response=StagePolicy(
            sampling=TOPK_TOPP,
            top_k=50,
            top_p=0.9,
            temperature=0.7,
            bounds={"response": (9, 32)},
        ),
    )


def ablated_policy(
    base: DecodingPolicy | None = None,
    no_understanding: bool = False,
    no_planning: bool = False,
    no_repetition_constraint: bool = False,
    no_topical_min_length: bool = False,
) -> DecodingPolicy:
    """Apply the standard ablation switches to a policy."""
    policy = base or default_policy()
    planning = policy.planning
    if no_repetition_constraint:
        planning = replace(planning, repetition_enabled=False)
    if no_topical_min_length:
        bounds = dict(planning.bounds)
        lo, hi = bounds[TOPICAL_KEY]
        bounds[TOPICAL_KEY] = (0, hi)
        planning = replace(planning, bounds=bounds)
    return replace(
        policy,
        planning=planning,
        use_understanding=policy.use_understanding and not no_understanding,
        use_planning=policy.use_planning and not no_planning,
    )


@dataclass
class GenerationTrace:
    """Explainability record for one Machine turn."""

    understood: SemanticAnnotation | None
    planned: SemanticAnnotation | None
    plan_overridden: bool
    response: str
    spans: dict[str, list[int]]
    seed: int
    understood_valid: bool = True
    planned_valid: bool = True

    def to_dict(self, tokenizer: Tokenizer | None = None) -> dict:
        d = {
            "understood": self.understood.to_dict() if self.understood else None,
            "planned": self.planned.to_dict() if self.planned else None,
            "plan_overridden": self.plan_overridden,
            "response": self.response,
            "spans": {k: list(v) for k, v in self.spans.items()},
            "seed": self.seed,
            "understood_valid": self.understood_valid,
            "planned_valid": self.planned_valid,
        }
        if tokenizer is not None:
            d["span_surfaces"] = {
                k: [tokenizer.surface(t) for t in v] for k, v in self.spans.items()
            }
        return d


# -- token-level machinery --------------------------------------------------


def sample_token(
    distribution: np.ndarray, policy: StagePolicy, rng: np.random.Generator | None = None
) -> int:
    """Greedy argmax (lowest id wins ties) or temperature top-k/top-p sampling.

    The top-k and top-p candidate sets are both prefixes of the
    probability-sorted vocabulary, so their intersection is the shorter
    prefix; sampling renormalizes over it.
    """
    if policy.sampling == GREEDY:
        return int(np.argmax(distribution))
    if rng is None:
        raise ValueError("top-k/top-p sampling needs an rng")
    with np.errstate(divide="ignore"):
        logp = np.log(distribution)
    scaled = logp / policy.temperature
    scaled -= scaled.max()
    probs = np.exp(scaled)
    probs /= probs.sum()
    order = np.lexsort((np.arange(len(probs)), -probs))
    sorted_probs = probs[order]
    cumulative = np.cumsum(sorted_probs)
    nucleus = int(np.searchsorted(cumulative, policy.top_p)) + 1
    keep = min(policy.top_k, nucleus, len(order))
    candidates = order[:keep]
    weights = sorted_probs[:keep] / sorted_probs[:keep].sum()
    return int(rng.choice(candidates, p=weights))


def _phrase_ngrams(span: list[int], list_sep: int, n: int) -> set[tuple[int, ...]]:
    grams: set[tuple[int, ...]] = set()
    phrase: list[int] = []
    for tok in span + [list_sep]:
        if tok == list_sep:
            for i in range(len(phrase) - n + 1):
                grams.add(tuple(phrase[i : i + n]))
            phrase = []
        else:
            phrase.append(tok)
    return grams


def apply_repetition_constraint(
    history_span: list[int],
    candidate_distribution: np.ndarray,
    n: int,
    tokenizer: Tokenizer,
) -> np.ndarray:
    """Suppress continuations that would repeat an n-gram inside this plan.

    ``history_span`` is the topical value span emitted so far (phrases
    separated by <list_sep>). A candidate token is zeroed when the current
    phrase's last n-1 tokens followed by it form an n-gram that some phrase of
    the span already contains. <list_sep> and <eokv> are never suppressed.
    """
    sp = tokenizer.specials
    grams = _phrase_ngrams(history_span, sp.list_sep, n)
    if not grams:
        return candidate_distribution
    last_sep = -1
    for i, tok in enumerate(history_span):
        if tok == sp.list_sep:
            last_sep = i
    current_phrase = history_span[last_sep + 1 :]
    if len(current_phrase) < n - 1:
        return candidate_distribution
    tail = tuple(current_phrase[len(current_phrase) - (n - 1) :]) if n > 1 else ()
    adjusted = candidate_distribution.copy()
    for gram in grams:
        if gram[:-1] == tail:
            tok = gram[-1]
            if tok not in (sp.list_sep, sp.eokv):
                adjusted[tok] = 0.0
    total = adjusted.sum()
    if total > 0:
        adjusted /= total
    return adjusted


class StageDecoder:
    """Shared prefix plus the constrained per-stage decode loops."""

    def __init__(self, lm: LanguageModel, tokenizer: Tokenizer, linearizer: Linearizer):
        self.lm = lm
        self.tokenizer = tokenizer
        self.linearizer = linearizer
        self.prefix_ids: list[int] = []
        self.prefix_types: list[int] = []

    def append(self, ids: list[int], token_type: TokenType) -> None:
        self.prefix_ids.extend(ids)
        self.prefix_types.extend([int(token_type)] * len(ids))

    def _distribution(self) -> np.ndarray:
        return self.lm.next_token_distribution(self.prefix_ids, self.prefix_types)

    def _banned_in_value_span(self, key: str, empty_item: bool) -> list[int]:
        sp = self.tokenizer.specials
        banned = [sp.cls, sp.human, sp.machine, sp.sep, sp.topical, sp.emotion,
                  sp.dialog_act, self.tokenizer.pad_id, self.tokenizer.unk_id]
        # Value spans never contain whitespace tokens; topical phrases never
        # contain label tokens.
        banned.extend(self.tokenizer.whitespace_ids)
        if key == TOPICAL_KEY:
            banned.extend(self.tokenizer.label_ids)
        if empty_item:
            # <list_sep> directly after the key or another separator would
            # open an empty list item.
            banned.append(sp.list_sep)
        return banned

    def decode_value_span(
        self,
        key: str,
        policy: StagePolicy,
        sem_type: TokenType,
        rng: np.random.Generator | None = None,
    ) -> list[int]:
        """Decode one key's value span; returns value ids (key/<eokv> excluded).

        Value tokens (including <list_sep>) count toward the key's length
        bounds; <eokv> is forced improbable below the minimum and certain at
        the maximum.
        """
        sp = self.tokenizer.specials
        min_len, max_len = policy.bounds.get(key, (0, 20))
        self.append([self.linearizer.key_token(key)], sem_type)
        value_ids: list[int] = []
        item_tokens = 0
        while True:
            if len(value_ids) >= max_len:
                token = sp.eokv
            else:
                dist = self._constrain_value_dist(
                    self._distribution(), key, policy, value_ids, item_tokens, min_len
                )
                token = sample_token(dist, policy, rng)
            if token == sp.eokv:
                self.append([sp.eokv], sem_type)
                return value_ids
            value_ids.append(token)
            item_tokens = 0 if token == sp.list_sep else item_tokens + 1
            self.append([token], sem_type)

    def _constrain_value_dist(
        self,
        dist: np.ndarray,
        key: str,
        policy: StagePolicy,
        value_ids: list[int],
        item_tokens: int,
        min_len: int,
    ) -> np.ndarray:
        sp = self.tokenizer.specials
        dist = dist.copy()
        for tok in self._banned_in_value_span(key, empty_item=item_tokens == 0):
            dist[tok] = 0.0
        if len(value_ids) < min_len:
            dist[sp.eokv] = 0.0
        if key == TOPICAL_KEY and policy.repetition_enabled:
            dist = apply_repetition_constraint(
                value_ids, dist, policy.repetition_n, self.tokenizer
            )
        total = dist.sum()
        if total <= 0.0:
            # Everything suppressed: fall back to whichever terminator is legal.
            dist = np.zeros_like(dist)
            if len(value_ids) >= min_len:
                dist[sp.eokv] = 1.0
            else:
                dist[sp.list_sep] = 1.0
            return dist
        return dist / total

    def decode_semantics(
        self,
        owner: Speaker,
        policy: StagePolicy,
        rng: np.random.Generator | None = None,
    ) -> tuple[ParsedVariables, list[int]]:
        """Decode all three variable spans in scheme order and parse them."""
        sem_type = TokenType.HUMAN_SEM if owner is Speaker.HUMAN else TokenType.MACHINE_SEM
        start = len(self.prefix_ids)
        for key in self.linearizer.scheme.variable_order:
            self.decode_value_span(key, policy, sem_type, rng)
        raw = self.prefix_ids[start:]
        parsed = self.linearizer.parse_variables(raw)
        return parsed, raw

    def decode_response(
        self, policy: StagePolicy, rng: np.random.Generator | None
    ) -> tuple[str, list[int]]:
        """Sample response tokens until [SEP], with min/max length forcing."""
        sp = self.tokenizer.specials
        min_len, max_len = policy.bounds.get("response", (9, 32))
        banned = [sp.cls, sp.human, sp.machine, sp.topical, sp.emotion, sp.dialog_act,
                  sp.list_sep, sp.eokv, self.tokenizer.pad_id, self.tokenizer.unk_id]
        self.append([sp.machine], TokenType.MACHINE_UTT)
        content: list[int] = []
        while True:
            if len(content) >= max_len:
                token = sp.sep
            else:
                dist = self._distribution().copy()
                for tok in banned:
                    dist[tok] = 0.0
                if len(content) < min_len:
                    dist[sp.sep] = 0.0
                total = dist.sum()
                if total <= 0.0:
                    raise RuntimeError("no legal response token remains")
                dist /= total
                token = sample_token(dist, policy, rng)
            self.append([token], TokenType.MACHINE_UTT)
            if token == sp.sep:
                break
            content.append(token)
        return self.tokenizer.decode(content), content


# -- turn-level pipeline -----------------------------------------------------


@dataclass
class HistoryTurn:
    speaker: Speaker
    text: str
    annotation: SemanticAnnotation | None = None


def build_decoder(
    lm: LanguageModel,
    linearizer: Linearizer,
    context: str,
    history: list[HistoryTurn],
) -> StageDecoder:
    """Assemble the shared prefix for a turn from prior history.

    Past turns contribute their utterance and (when present) their semantic
    span, mirroring training order; the final history entry is Human's pending
    utterance, closed by [SEP] and not yet followed by its semantics.
    """
    tokenizer = linearizer.tokenizer
    scheme = linearizer.scheme
    dec = StageDecoder(lm, tokenizer, linearizer)
    if context:
        dec.append(tokenizer.encode(context), TokenType.CONTEXT)
    dec.append([tokenizer.specials.cls], TokenType.CONTEXT)
    for i, turn in enumerate(history):
        is_human = turn.speaker is Speaker.HUMAN
        utt_type = TokenType.HUMAN_UTT if is_human else TokenType.MACHINE_UTT
        marker = tokenizer.specials.human if is_human else tokenizer.specials.machine
        include_sem = (
            scheme.include_understanding if is_human else scheme.include_planning
        )
        sem_segment = None
        if include_sem and turn.annotation is not None:
            owner = Speaker.HUMAN if is_human else Speaker.MACHINE
            sem_segment = linearizer.linearize_variables(turn.annotation, owner)
        pending = i == len(history) - 1 and is_human
        if not is_human and sem_segment is not None:
            dec.prefix_ids.extend(sem_segment.ids)
            dec.prefix_types.extend(sem_segment.types)
        dec.append([marker] + tokenizer.encode(turn.text) + [tokenizer.specials.sep], utt_type)
        if is_human and sem_segment is not None and not pending:
            dec.prefix_ids.extend(sem_segment.ids)
            dec.prefix_types.extend(sem_segment.types)
    return dec


def understand(
    dec: StageDecoder, policy: DecodingPolicy
) -> tuple[ParsedVariables, list[int]]:
    """Infer the semantic variables of Human's last utterance."""
    return dec.decode_semantics(Speaker.HUMAN, policy.understanding)


def plan(
    dec: StageDecoder, policy: DecodingPolicy
) -> tuple[ParsedVariables, list[int]]:
    """Plan the semantic variables of the next Machine utterance."""
    return dec.decode_semantics(Speaker.MACHINE, policy.planning)


def apply_plan_override(dec: StageDecoder, override: SemanticAnnotation) -> list[int]:
    """Linearize a supplied plan in place of the planning decode."""
    segment = dec.linearizer.linearize_variables(override, Speaker.MACHINE)
    dec.prefix_ids.extend(segment.ids)
    dec.prefix_types.extend(segment.types)
    return segment.ids


def generate_response(
    dec: StageDecoder, policy: DecodingPolicy, rng: np.random.Generator
) -> tuple[str, list[int]]:
    return dec.decode_response(policy.response, rng)


def respond(
    lm: LanguageModel,
    linearizer: Linearizer,
    context: str,
    history: list[HistoryTurn],
    policy: DecodingPolicy,
    plan_override: SemanticAnnotation | None = None,
    seed: int = 0,
) -> GenerationTrace:
    """Run understand -> plan -> generate for the next Machine turn.

    Understanding runs when the pending turn is Human's and the policy keeps
    the stage; a supplied override replaces the planning decode verbatim.
    Greedy stages ignore the seed; response sampling is derived from it.
    """
    dec = build_decoder(lm, linearizer, context, history)
    spans: dict[str, list[int]] = {}
    understood = None
    understood_valid = True
    pending_human = bool(history) and history[-1].speaker is Speaker.HUMAN
    if policy.use_understanding and pending_human:
        parsed, raw = understand(dec, policy)
        understood, understood_valid = parsed.annotation, parsed.valid
        spans["understanding"] = raw

    planned = None
    planned_valid = True
    overridden = plan_override is not None
    if overridden:
        spans["planning"] = apply_plan_override(dec, plan_override)
        planned = plan_override
    elif policy.use_planning:
        parsed, raw = plan(dec, policy)
        planned, planned_valid = parsed.annotation, parsed.valid
        spans["planning"] = raw

    rng = np.random.default_rng(seed)
    response, response_ids = generate_response(dec, policy, rng)
    spans["response"] = response_ids
    return GenerationTrace(
        understood=understood,
        planned=planned,
        plan_overridden=overridden,
        response=response,
        spans=spans,
        seed=seed,
        understood_valid=understood_valid,
        planned_valid=planned_valid,
    )
