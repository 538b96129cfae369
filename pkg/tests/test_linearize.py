import json
import random
from pathlib import Path

import pytest

from semchat.corpus import (
    AnnotatedSession,
    SemanticAnnotation,
    Speaker,
    Utterance,
    derive_training_views,
)
from semchat.linearize import (
    LinearizationScheme,
    LinearizeError,
    Linearizer,
    SpanParseError,
    TokenType,
)
from semchat.tokenizer import Tokenizer
from semchat.toydata import TEMPLATES, TOPICS, make_toy_corpus

FIXTURE = Path(__file__).parent / "data" / "golden_linearization.json"


class TestGoldenFixture:
    def test_bit_exact(self):
        fixture = json.loads(FIXTURE.read_text(encoding="utf-8"))
        session = AnnotatedSession(
            session_id="golden",
            context=fixture["context"],
            utterances=tuple(Utterance.from_dict(u) for u in fixture["utterances"]),
        )
        texts = [fixture["context"]] + [u.text for u in session.utterances]
        tokenizer = Tokenizer.build(texts)
        linearizer = Linearizer(tokenizer, LinearizationScheme())
        view = derive_training_views(session)[0]
        example = linearizer.linearize_session(view)
        assert example.token_ids == fixture["token_ids"]
        assert example.token_type_ids == fixture["token_type_ids"]
        assert [int(m) for m in example.loss_mask] == fixture["loss_mask"]
        assert [tokenizer.surface(i) for i in example.token_ids] == fixture["surfaces"]


def random_annotation(rng: random.Random, tokenizer: Tokenizer) -> SemanticAnnotation:
    from semchat.corpus import DA_LABELS, EMOTION_LABELS

    n = rng.randint(0, 3)
    emotions = [rng.choice(EMOTION_LABELS) for _ in range(n)]
    das = [rng.choice(DA_LABELS) for _ in range(n)]
    pool = [t for t in TOPICS]
    phrases = rng.sample(pool, k=rng.randint(0, 3))
    return SemanticAnnotation.make(emotions, das, [[p] for p in phrases])


class TestVariableSpans:
    def test_multi_da_surface_form(self, linearizer, tokenizer):
        ann = SemanticAnnotation.make(
            ["Like", "None"], ["Inform", "Question"], [["rock"]]
        )
        seg = linearizer.linearize_variables(ann, Speaker.MACHINE)
        surfaces = [tokenizer.surface(i) for i in seg.ids]
        assert surfaces == [
            "<emotion>", "<emo:Like>", "<list_sep>", "<emo:None>", "<eokv>",
            "<dialog_act>", "<da:Inform>", "<list_sep>", "<da:Question>", "<eokv>",
            "<topical>", "rock", "<eokv>",
        ]
        assert all(t == int(TokenType.MACHINE_SEM) for t in seg.types)

    def test_empty_topical_gives_bare_key(self, linearizer, tokenizer):
        ann = SemanticAnnotation.make(["None"], ["Inform"], [])
        seg = linearizer.linearize_variables(ann, Speaker.HUMAN)
        surfaces = [tokenizer.surface(i) for i in seg.ids]
        assert surfaces[-2:] == ["<topical>", "<eokv>"]
        assert all(t == int(TokenType.HUMAN_SEM) for t in seg.types)

    def test_key_positions_carry_no_loss(self, linearizer):
        ann = SemanticAnnotation.make(["Like"], ["Inform"], [["rock"]])
        seg = linearizer.linearize_variables(ann, Speaker.MACHINE)
        key_ids = {linearizer.key_token(k) for k in ("emotion", "dialogue_act", "topical")}
        for tok, mask in zip(seg.ids, seg.mask):
            assert mask is not (tok in key_ids)

    def test_round_trip_random_annotations(self, linearizer):
        rng = random.Random(11)
        for _ in range(300):
            ann = random_annotation(rng, linearizer.tokenizer)
            seg = linearizer.linearize_variables(ann, Speaker.HUMAN)
            parsed = linearizer.parse_variables(seg.ids)
            assert parsed.valid
            assert parsed.annotation == ann

    def test_parse_hand_trace(self, linearizer, tokenizer):
        ids = [
            tokenizer.specials.emotion,
            tokenizer.emotion_label_ids["Happiness"],
            tokenizer.specials.eokv,
            tokenizer.specials.dialog_act,
            tokenizer.da_label_ids["Inform"],
            tokenizer.specials.eokv,
            tokenizer.specials.topical,
            tokenizer.id_of("rock"),
            tokenizer.specials.eokv,
        ]
        parsed = linearizer.parse_variables(ids)
        assert parsed.annotation.to_dict() == {
            "emotions": ["Happiness"],
            "dialogue_acts": ["Inform"],
            "topical_words": [["rock"]],
        }

    def test_parse_empty_value_list(self, linearizer, tokenizer):
        ids = [tokenizer.specials.emotion, tokenizer.specials.eokv]
        parsed = linearizer.parse_variables(ids)
        assert parsed.annotation.emotions == ()

    def test_parse_missing_eokv(self, linearizer, tokenizer):
        ids = [tokenizer.specials.emotion, tokenizer.emotion_label_ids["Like"]]
        with pytest.raises(SpanParseError, match="eokv"):
            linearizer.parse_variables(ids)

    def test_parse_repeated_key(self, linearizer, tokenizer):
        sp = tokenizer.specials
        ids = [sp.emotion, sp.eokv, sp.emotion, sp.eokv]
        with pytest.raises(SpanParseError, match="repeated"):
            linearizer.parse_variables(ids)

    def test_parse_unknown_label_flagged(self, linearizer, tokenizer):
        sp = tokenizer.specials
        ids = [sp.emotion, tokenizer.id_of("rock"), sp.eokv]
        parsed = linearizer.parse_variables(ids)
        assert not parsed.valid
        assert parsed.invalid_values == [("emotion", "rock")]
        assert parsed.annotation.emotions == ()


def expected_mask(linearizer, example):
    """Re-derive the masking rule position by position from types/surfaces."""
    tokenizer = linearizer.tokenizer
    sp = tokenizer.specials
    key_ids = {sp.emotion, sp.dialog_act, sp.topical}
    out = []
    for tok, ttype in zip(example.token_ids, example.token_type_ids):
        if ttype == int(TokenType.CONTEXT):
            out.append(False)
        elif ttype in (int(TokenType.HUMAN_SEM), int(TokenType.MACHINE_SEM)):
            out.append(tok not in key_ids)
        elif ttype == int(TokenType.HUMAN_UTT):
            out.append(False)
        else:  # MACHINE_UTT: loss everywhere except the speaker marker
            out.append(tok != sp.machine)
    return out


class TestSessionLinearization:
    def test_empty_context_starts_with_cls(self, linearizer, toy_sessions):
        view = derive_training_views(toy_sessions[0])[0]
        example = linearizer.linearize_session(view)
        assert example.token_ids[0] == linearizer.tokenizer.specials.cls

    def test_context_before_cls(self, linearizer):
        session = make_toy_corpus(1, seed=5)[0]
        session = AnnotatedSession(
            session_id=session.session_id,
            context="rock",
            utterances=session.utterances,
        )
        example = linearizer.linearize_session(derive_training_views(session)[0])
        assert example.token_ids[0] == linearizer.tokenizer.id_of("rock")
        assert example.token_ids[1] == linearizer.tokenizer.specials.cls
        assert example.token_type_ids[0] == int(TokenType.CONTEXT)

    def test_masking_rule_position_by_position(self, linearizer, toy_sessions):
        for session in toy_sessions[:8]:
            for view in derive_training_views(session):
                example = linearizer.linearize_session(view)
                assert example.loss_mask == expected_mask(linearizer, example)

    def test_types_partition_sequence(self, linearizer, toy_sessions):
        for view in derive_training_views(toy_sessions[0]):
            example = linearizer.linearize_session(view)
            assert all(0 <= t <= 4 for t in example.token_type_ids)
            assert len(example.token_type_ids) == len(example.token_ids)

    def test_round_trip_recovers_annotations_and_machine_text(
        self, linearizer, toy_sessions
    ):
        for session in toy_sessions:
            for view in derive_training_views(session):
                example = linearizer.linearize_session(view)
                for span in example.spans:
                    if span.name == "semantics":
                        parsed = linearizer.parse_variables(
                            example.token_ids[span.start : span.end]
                        )
                        assert parsed.valid
                        assert (
                            parsed.annotation
                            == view.utterances[span.index].annotation
                        )
                    elif span.name == "utterance":
                        utt = view.utterances[span.index]
                        if utt.speaker is Speaker.MACHINE:
                            text = linearizer.machine_utterance_text(example, span)
                            assert text == utt.text

    def test_machine_opener_view(self, linearizer, toy_sessions):
        view = derive_training_views(toy_sessions[0])[1]
        assert view.utterances[0].speaker is Speaker.MACHINE
        example = linearizer.linearize_session(view)
        sp = linearizer.tokenizer.specials
        # CLS, then the plan span for the opener, then the machine utterance.
        assert example.token_ids[0] == sp.cls
        assert example.token_ids[1] == sp.emotion
        first_utt = next(s for s in example.spans if s.name == "utterance")
        assert example.token_ids[first_utt.start] == sp.machine

    def test_truncation_drops_oldest_whole_turns(self, tokenizer):
        sessions = make_toy_corpus(1, seed=9, min_turns=3, max_turns=3)
        view = derive_training_views(sessions[0])[0]
        full = Linearizer(tokenizer, LinearizationScheme(max_sequence_length=512))
        full_example = full.linearize_session(view)
        tight = Linearizer(
            tokenizer,
            LinearizationScheme(max_sequence_length=len(full_example) - 1),
        )
        truncated = tight.linearize_session(view)
        assert len(truncated) <= len(full_example) - 1
        assert truncated.token_ids[0] == tokenizer.specials.cls
        # The kept suffix must be whole turns: first utterance span is Human's
        # and belongs to a later turn of the original view.
        kept_indices = sorted(
            {s.index for s in truncated.spans if s.index >= 0}
        )
        assert kept_indices[0] >= 2
        assert kept_indices == list(range(kept_indices[0], len(view.utterances)))
        # The retained tail is identical to the full linearization's tail.
        keep_len = len(truncated) - 1  # drop CLS
        assert truncated.token_ids[1:] == full_example.token_ids[-keep_len:]

    def test_truncation_keeps_context(self, tokenizer):
        session = make_toy_corpus(1, seed=9, min_turns=3, max_turns=3)[0]
        session = AnnotatedSession(
            session_id=session.session_id, context="rock", utterances=session.utterances
        )
        view = derive_training_views(session)[0]
        full_len = len(
            Linearizer(tokenizer, LinearizationScheme(max_sequence_length=512))
            .linearize_session(view)
        )
        tight = Linearizer(tokenizer, LinearizationScheme(max_sequence_length=full_len - 1))
        truncated = tight.linearize_session(view)
        assert truncated.token_ids[0] == tokenizer.id_of("rock")
        assert truncated.token_ids[1] == tokenizer.specials.cls

    def test_overlong_single_turn_rejected(self, tokenizer):
        view = derive_training_views(make_toy_corpus(1, seed=9)[0])[0]
        tiny = Linearizer(tokenizer, LinearizationScheme(max_sequence_length=10))
        with pytest.raises(LinearizeError, match="single turn"):
            tiny.linearize_session(view)

    def test_ablation_schemes_drop_spans(self, tokenizer, toy_sessions):
        view = derive_training_views(toy_sessions[0])[0]
        no_u = Linearizer(
            tokenizer,
            LinearizationScheme(include_understanding=False, max_sequence_length=256),
        ).linearize_session(view)
        assert int(TokenType.HUMAN_SEM) not in no_u.token_type_ids
        assert int(TokenType.MACHINE_SEM) in no_u.token_type_ids
        no_p = Linearizer(
            tokenizer,
            LinearizationScheme(include_planning=False, max_sequence_length=256),
        ).linearize_session(view)
        assert int(TokenType.MACHINE_SEM) not in no_p.token_type_ids
        assert int(TokenType.HUMAN_SEM) in no_p.token_type_ids

    def test_unannotated_view_rejected_when_span_needed(self, linearizer):
        from semchat.corpus import TrainingView

        view = TrainingView(
            session_id="x",
            context="",
            utterances=(Utterance(Speaker.HUMAN, "hello there"),),
        )
        with pytest.raises(LinearizeError, match="annotation"):
            linearizer.linearize_session(view)

    def test_bad_variable_order_rejected(self):
        with pytest.raises(ValueError, match="permute"):
            LinearizationScheme(variable_order=("emotion", "emotion", "topical"))
