"""Inspect the flat training sequence: tokens, token types, and loss mask.

Shows how one annotated session becomes two role-switched training views and
how each view linearizes into context, [CLS], utterances, and semantic-variable
spans, with loss only on semantic values and Machine utterances.

Run:  python3 demos/02_linearization.py
"""

from semchat import LinearizationScheme, Linearizer, Tokenizer, derive_training_views, make_toy_corpus
from semchat.linearize import TokenType
from semchat.toydata import corpus_texts

sessions = make_toy_corpus(8, seed=4)
tokenizer = Tokenizer.build(corpus_texts(sessions))
linearizer = Linearizer(tokenizer, LinearizationScheme(max_sequence_length=256))

session = sessions[0]
print("Session:")
for utt in session.utterances:
    print(f"  {utt.speaker.value:>7}: {utt.text}")

views = derive_training_views(session)
print(f"\nDerived {len(views)} training views (the second flips every speaker).")

TYPE_NAMES = {t.value: t.name for t in TokenType}

for view in views:
    example = linearizer.linearize_session(view)
    print("\n" + "=" * 78)
    print(f"View flipped={view.flipped}: {len(example)} positions")
    print("=" * 78)
    print(f"{'pos':>4} {'token':>16} {'type':>12} {'loss':>4}")
    for pos, (tok, ttype, mask) in enumerate(
        zip(example.token_ids, example.token_type_ids, example.loss_mask)
    ):
        surface = tokenizer.surface(tok).replace(" ", "␣")
        tick = "x" if mask else ""
        print(f"{pos:>4} {surface:>16} {TYPE_NAMES[ttype]:>12} {tick:>4}")
    if view.flipped:
        break  # one full dump is enough; the flipped view prints first rows only

print("\nRound trip: parsing every semantic span recovers the annotations exactly.")
example = linearizer.linearize_session(views[0])
for span in example.spans:
    if span.name == "semantics":
        parsed = linearizer.parse_variables(example.token_ids[span.start : span.end])
        gold = views[0].utterances[span.index].annotation
        assert parsed.annotation == gold
        print(f"  utterance {span.index}: recovered {parsed.annotation.to_dict()}")
