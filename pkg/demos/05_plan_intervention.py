"""Steer the response by editing the plan before generation.

Runs the same turn three ways: with the model's own plan, with a topical
override, and with an emotion/act override, showing that the planned
variables control what the response talks about and how.

Run demos/03_train_toy_model.py first, then:
      python3 demos/05_plan_intervention.py
"""

import sys
from pathlib import Path

from semchat import ModelCheckpoint, SemanticAnnotation, Tokenizer, TransformerBackend, respond
from semchat.corpus import Speaker
from semchat.decode import HistoryTurn, default_policy
from semchat.linearize import LinearizationScheme, Linearizer

ARTIFACTS = Path(__file__).parent / "_artifacts"
if not (ARTIFACTS / "checkpoint.pt").exists():
    sys.exit("run demos/03_train_toy_model.py first to create demos/_artifacts/")

tokenizer = Tokenizer.load(ARTIFACTS / "vocab.txt")
backend = TransformerBackend(ModelCheckpoint.load(ARTIFACTS / "checkpoint.pt"))
linearizer = Linearizer(tokenizer, LinearizationScheme(max_sequence_length=256))
policy = default_policy()

history = [HistoryTurn(Speaker.HUMAN, "have you ever heard about tennis before ?", None)]
print(f"Human says: {history[0].text!r}")

print("\n--- model's own plan ----------------------------------------------")
trace = respond(backend, linearizer, "", history, policy, seed=3)
print(f"understood: {trace.understood.to_dict()}")
print(f"planned:    {trace.planned.to_dict()}")
print(f"response:   {trace.response!r}")
print(f"overridden: {trace.plan_overridden}")

print("\n--- override: talk about coffee, enthusiastically ------------------")
override = SemanticAnnotation.make(["Happiness"], ["Inform"], [["coffee"]])
trace = respond(backend, linearizer, "", history, policy, plan_override=override, seed=3)
print(f"planned:    {trace.planned.to_dict()}  (verbatim override)")
print(f"response:   {trace.response!r}")
print(f"overridden: {trace.plan_overridden}")

print("\n--- override: commit to trying chess --------------------------------")
override = SemanticAnnotation.make(["Like"], ["Commissive"], [["chess"]])
trace = respond(backend, linearizer, "", history, policy, plan_override=override, seed=3)
print(f"planned:    {trace.planned.to_dict()}")
print(f"response:   {trace.response!r}")

print(
    "\nThe overridden topical words appear in the responses because the model"
    "\nwas trained to realize its planned variables in the next utterance."
)
