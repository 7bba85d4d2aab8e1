"""
Learning mentions from chain-only annotation
============================================

When only mentions inside coreference chains are annotated, every singleton
looks like a non-mention to a detector. Down-weighting negatives (tagger) or
softening their targets (span model) recovers much of the lost recall.
Takes about five minutes on one core.
"""
from mentioncoref import harness as hs
from mentioncoref.corpus import GenConfig, PartialPolicy, partialize, synth_generate
from mentioncoref.objectives import LossConfig
from mentioncoref.pipeline import ModelConfig

docs = synth_generate(GenConfig(n_docs=250, n_heads=8), seed=1)
partial, full = partialize(docs, PartialPolicy(drop_singletons=True, drop_rate=0.3, seed=1))
print("mentions, full vs partial:", sum(len(d.mentions) for d in full), sum(len(d.mentions) for d in partial))

d = full[0]
kept = set(partial[0].mentions)
for s, i, j in d.mentions[:6]:
    print(" ".join(d.sentences[s][i:j + 1]), "(annotated)" if (s, i, j) in kept else "(dropped)")

train_docs, eval_docs = partial[:200], full[200:]
model_cfg = ModelConfig(d_emb=32, d_hidden=32, d_span=32, d_ffnn=32)


def run(model, **loss):
    cfg = hs.RunConfig(seed=0, model=ModelConfig(**{**model_cfg.__dict__, "model": model}), loss=LossConfig(**loss),
                       epochs=15, lr=0.01, lr_schedule="linear", select_by_dev=False)
    return hs.train(cfg, train_docs).model


# span model: recall against the full gold at each threshold
curves = {}
for name, loss in (("plain", {}), ("soft rho=0.1", {"mode": "soft", "rho": 0.1})):
    curves[name] = hs.threshold_curve(run("span", **loss), eval_docs)
print("tau " + "  ".join(f"{n:>12}" for n in curves))
for k, tau in enumerate(hs.DEFAULT_TAUS):
    print(f"{tau:.1f}  " + "  ".join(f"{c[k]['recall']:12.3f}" for c in curves.values()))

# tagger: one-best output
for name, loss in (("plain", {}), ("weighted w=0.01", {"mode": "weighted", "w": 0.01})):
    m = hs.evaluate(run("tagger", **loss), eval_docs)["mention"]
    print(f"tagger {name:<16} R={m.recall:.3f} P={m.precision:.3f} F1={m.f1:.3f}")

# the recall gain costs little precision at the usual threshold
for name, c in curves.items():
    print(name, "precision at 0.5:", round(c[4]["precision"], 3))
