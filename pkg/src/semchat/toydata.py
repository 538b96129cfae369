"""Synthetic toy dialogues with controlled semantics, for tests and demos.

Each utterance is drawn from a small template deck crossed with a topic list;
the template fixes the per-sentence dialogue acts and emotions and plants the
topic word in the text, so gold annotations are exact by construction. Topics
are drawn independently of history, which keeps next-turn topics unpredictable
(useful when contrasting planned decoding against gold plans). Combos are
dealt from a reshuffled deck so every (template, topic) pair occurs in a
corpus of moderate size.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .annotate import split_sentences
from .corpus import AnnotatedSession, SemanticAnnotation, Speaker, Utterance


@dataclass(frozen=True)
class Template:
    name: str
    pattern: str
    emotions: tuple[str, ...]
    dialogue_acts: tuple[str, ...]

    def render(self, topic: str) -> str:
        return self.pattern.format(t=topic)


TOPICS = [
    "rock", "jazz", "soccer", "tennis", "coffee", "sushi",
    "tigers", "robots", "movies", "chess", "hiking", "poetry",
]

# Filler and sentiment words the templates reuse across topics; pass this as
# the stoplist when building topical vocabularies over toy corpora.
TOY_STOPLIST = frozenset(
    "do you like at all have ever heard about before i really love it is "
    "great hate awful my favorite thing what please tell me much more now "
    "will surely try with tomorrow am so very sad today quite afraid of "
    "these days wow truly surprised by honestly that makes angry".split()
)

TEMPLATES = [
    Template("ask", "do you like {t} at all ?", ("None",), ("Question",)),
    Template("heard", "have you ever heard about {t} before ?", ("None",), ("Question",)),
    Template("love", "i really love {t} it is great .", ("Happiness",), ("Inform",)),
    Template("hate", "i really hate {t} it is awful .", ("Disgust",), ("Inform",)),
    Template(
        "fav_ask",
        "my favorite thing is {t} . what about you ?",
        ("Like", "None"),
        ("Inform", "Question"),
    ),
    Template("tell", "please tell me much more about {t} now .", ("None",), ("Directive",)),
    Template("will", "i will surely try {t} with you tomorrow .", ("Like",), ("Commissive",)),
    Template("sad", "i am so very sad about {t} today .", ("Sadness",), ("Inform",)),
    Template("fear", "i am quite afraid of {t} these days .", ("Fear",), ("Inform",)),
    Template("wow", "wow i am truly surprised by {t} !", ("Surprise",), ("Inform",)),
    Template("angry", "honestly that {t} makes me very angry !", ("Anger",), ("Inform",)),
]


def _annotated_utterance(speaker: Speaker, template: Template, topic: str) -> Utterance:
    text = template.render(topic)
    sentences = split_sentences(text)
    if len(sentences) != len(template.emotions):
        raise ValueError(f"template {template.name} labels do not match its sentences")
    return Utterance(
        speaker=speaker,
        text=text,
        sentences=tuple(sentences),
        annotation=SemanticAnnotation.make(
            emotions=list(template.emotions),
            dialogue_acts=list(template.dialogue_acts),
            topical_words=[[topic]],
        ),
    )


class _ComboDeck:
    """Deals (template, topic) pairs uniformly with guaranteed coverage."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.cards: list[tuple[Template, str]] = []

    def deal(self) -> tuple[Template, str]:
        if not self.cards:
            self.cards = [(tpl, top) for tpl in TEMPLATES for top in TOPICS]
            self.rng.shuffle(self.cards)
        return self.cards.pop()


def make_toy_corpus(
    n_sessions: int,
    seed: int,
    id_prefix: str = "toy",
    min_turns: int = 2,
    max_turns: int = 3,
) -> list[AnnotatedSession]:
    """Generate fully annotated sessions; deterministic for a fixed seed."""
    rng = random.Random(seed)
    deck = _ComboDeck(rng)
    sessions: list[AnnotatedSession] = []
    for i in range(n_sessions):
        n_utts = 2 * rng.randint(min_turns, max_turns)
        utts = []
        for j in range(n_utts):
            speaker = Speaker.HUMAN if j % 2 == 0 else Speaker.MACHINE
            template, topic = deck.deal()
            utts.append(_annotated_utterance(speaker, template, topic))
        session = AnnotatedSession(
            session_id=f"{id_prefix}-{i:04d}",
            context="",
            utterances=tuple(utts),
        )
        session.validate()
        sessions.append(session)
    return sessions


def classifier_training_pairs(
    sessions: list[AnnotatedSession],
) -> tuple[list[tuple[str, str]], list[tuple[str, str]]]:
    """(sentence, label) pairs for the DA and emotion classifiers."""
    da_pairs: list[tuple[str, str]] = []
    emo_pairs: list[tuple[str, str]] = []
    for session in sessions:
        for utt in session.utterances:
            if utt.sentences is None or utt.annotation is None:
                continue
            for sent, da, emo in zip(
                utt.sentences, utt.annotation.dialogue_acts, utt.annotation.emotions
            ):
                da_pairs.append((sent, da.value))
                emo_pairs.append((sent, emo.value))
    return da_pairs, emo_pairs


def corpus_texts(sessions: list[AnnotatedSession]) -> list[str]:
    """All context and utterance strings, e.g. for vocabulary building."""
    texts: list[str] = []
    for session in sessions:
        if session.context:
            texts.append(session.context)
        texts.extend(u.text for u in session.utterances)
    return texts
