"""
Nested mentions as bracket tags
===============================

A sentence with nested mentions becomes one flat sequence over four symbols,
and a grammar-constrained beam search turns model scores back into spans.
"""
import numpy as np

from mentioncoref.tagger import Tagger
from mentioncoref.tags import GrammarState, decode_tags, encode_mentions, laminarize, validate

words = "the owner of the red car left".split()
spans = {(0, 5), (3, 5)}  # "the owner of the red car" contains "the red car"
tags = encode_mentions(spans, len(words))
print(tags.render())
print(sorted(decode_tags(tags, len(words))))

# each word gets exactly one advance symbol; brackets sit in front of it
for w, sym in zip(tags.alignment, tags.symbols):
    print(f"{words[w]:>6}  {sym}")

# crossing spans cannot be written down, so training data is made laminar first
print(sorted(laminarize([(0, 2), (1, 3), (5, 6)])))

# the grammar knows what may follow a prefix
state = GrammarState(len(words))
for sym in "[ + [".split():
    state = state.step(sym)
print("allowed after '[ + [':", state.allowed())

report = validate("[ - ] -".split(), 2)
print(report.ok, report.message)

# an untrained tagger still only ever emits well-formed sequences
model = Tagger(vocab_size=10, d_emb=8, d_hidden=8, d_sym=4, seed=0)
res = model.beam_decode(np.arange(1, len(words) + 1), beam=4)
print(res.tags.render(), round(res.score, 3), validate(res.tags, len(words)).ok)
