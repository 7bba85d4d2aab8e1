"""Finite-difference checks of every model on tiny instances."""
from __future__ import annotations

from typing import Callable, Dict

import numpy as np

from . import autodiff as ad
from . import coref as cr
from .corpus import Document, Vocabulary
from .objectives import LossConfig, multitask_combine, span_loss, tagger_loss
from .pipeline import MentionModel, ModelConfig
from .span import SpanScorer
from .tagger import Tagger
from .tags import encode_mentions

TOKENS = np.array([1, 2, 3, 4, 5])
SPANS = [(0, 2), (1, 1), (3, 4)]


def _tagger_case(seed: int):
    model = Tagger(vocab_size=7, d_emb=4, d_hidden=4, d_sym=3, max_depth=2, seed=seed)
    gold = encode_mentions(SPANS, len(TOKENS), 2)
    cfg = LossConfig(mode="soft", rho=0.1)
    return model.params, lambda: tagger_loss(model.forward_teacher_forced(TOKENS, gold).log_probs, gold, cfg)


def _span_case(seed: int, **variant):
    model = SpanScorer(vocab_size=7, d_emb=4, d_hidden=4, d_span=5, d_ffnn=4, seed=seed, **variant)
    out = model.forward(TOKENS)
    labels = np.array([1.0 if (i, j) in SPANS else 0.0 for i, j in zip(out.starts, out.ends)])
    cfg = LossConfig(mode="weighted", w=0.3)
    return model.params, lambda: span_loss(model.forward(TOKENS).logits, labels, cfg)


def _coref_case(seed: int):
    rng = np.random.default_rng(seed)
    head = cr.CorefHead(d_mention=4, d_hidden=5, d_dist=3, seed=seed)
    params = dict(head.params)
    params["reprs"] = ad.param(rng.normal(size=(5, 4)), "reprs")
    params["probs"] = ad.param(rng.uniform(0.1, 0.9, size=5), "probs")
    clusters = [0, None, 0, 1, 1]

    def loss():
        s_m = cr.s_m_span(params["coref.v"], params["probs"])
        return cr.antecedent_loss(head.pair_scores(params["reprs"], s_m), clusters)
    return params, loss


def _combiner_case(seed: int):
    rng = np.random.default_rng(seed)
    params = {k: ad.param(np.array(v), k) for k, v in
              zip(("loss_md", "loss_cr", "s_md", "s_cr"), rng.uniform(-1.0, 1.0, 4) + [2.0, 1.0, 0.0, 0.0])}
    return params, lambda: multitask_combine(*(params[k] for k in ("loss_md", "loss_cr", "s_md", "s_cr")))


def tiny_document() -> Document:
    sents = [["a", "b", "c", "d", "e"], ["c", "a", "e"]]
    mentions = [(0, 0, 2), (0, 1, 1), (0, 3, 4), (1, 0, 0), (1, 1, 2)]
    return Document("tiny", sents, mentions, [[0, 3], [2, 4]])


def _multitask_case(seed: int, model: str):
    doc = tiny_document()
    cfg = ModelConfig(model=model, multitask=True, d_emb=4, d_hidden=4, d_sym=3, d_span=4, d_ffnn=4,
                      d_coref=4, d_dist=3, max_depth=2)
    mm = MentionModel(cfg, Vocabulary.from_corpus([doc]), seed)
    loss_cfg = LossConfig(mode="plain", tau=0.5)
    return mm.params, lambda: mm.document_loss(doc, loss_cfg)[0]


CASES: Dict[str, Callable] = {
    "tagger": _tagger_case,
    "span": _span_case,
    "span+size": lambda seed: _span_case(seed, size_emb=True),
    "span+attention": lambda seed: _span_case(seed, attention=True, max_len=5),
    "coref_head": _coref_case,
    "multitask_combiner": _combiner_case,
    "multitask_span": lambda seed: _multitask_case(seed, "span"),
    "multitask_tagger": lambda seed: _multitask_case(seed, "tagger"),
}


def model_grad_checks(seed: int = 0, eps: float = 1e-5) -> Dict[str, Dict[str, float]]:
    """Max relative error per parameter, for every model case."""
    out = {}
    for name, make in CASES.items():
        params, loss = make(seed)
        out[name] = ad.grad_check(loss, params, eps)
    return out
