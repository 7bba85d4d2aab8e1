"""Document-level models: a mention detector, optionally trained jointly with
the coreference head."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from . import autodiff as ad
from . import coref as cr
from . import nn
from .autodiff import Tensor
from .corpus import Document, SpanKey, Vocabulary
from .objectives import LossConfig, multitask_combine, span_loss, tagger_loss
from .span import SpanScorer
from .tagger import Tagger, confidence_tensors
from .tags import decode_tags, encode_mentions, laminarize


@dataclass
class ModelConfig:
    model: str = "span"  # "span" | "tagger"
    multitask: bool = False
    d_emb: int = 32
    d_hidden: int = 64
    d_sym: int = 16
    d_span: int = 64
    d_ffnn: int = 64
    d_coref: int = 64
    d_dist: int = 8
    size_emb: bool = False
    attention: bool = False
    max_len: Optional[int] = None
    span_output_bias: bool = True
    max_depth: int = 8
    max_antecedents: int = cr.DEFAULT_MAX_ANTECEDENTS
    second_pass_beam: int = 1

    def __post_init__(self):
        if self.model not in ("span", "tagger"):
            raise ValueError(f"model must be 'span' or 'tagger', got {self.model!r}")


@dataclass
class DocumentPrediction:
    mentions: Set[SpanKey]
    clusters: List[List[SpanKey]] = field(default_factory=list)
    # span model only: every scored span with its probability
    span_probs: Dict[SpanKey, float] = field(default_factory=dict)
    tags: List[str] = field(default_factory=list)  # tagger only, one string per sentence


class MentionModel:
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, seed: int):
        self.cfg = cfg
        self.vocab = vocab
        V = len(vocab)
        if cfg.model == "tagger":
            self.detector = Tagger(V, cfg.d_emb, cfg.d_hidden, cfg.d_sym, cfg.max_depth, seed=seed)
        else:
            self.detector = SpanScorer(V, cfg.d_emb, cfg.d_hidden, cfg.d_span, cfg.d_ffnn,
                                       size_emb=cfg.size_emb, attention=cfg.attention,
                                       max_len=cfg.max_len, output_bias=cfg.span_output_bias, seed=seed)
        self.params: nn.Params = dict(self.detector.params)
        self.coref: Optional[cr.CorefHead] = None
        if cfg.multitask:
            enc_out = self.detector.encoder.d_out
            if cfg.model == "tagger":
                self.coref = cr.CorefHead(cfg.d_span, cfg.d_coref, cfg.d_dist, cfg.max_antecedents,
                                          seed=seed + 1, span_input=2 * enc_out + cfg.d_emb)
            else:
                self.coref = cr.CorefHead(cfg.d_span, cfg.d_coref, cfg.d_dist, cfg.max_antecedents,
                                          seed=seed + 1)
            self.params.update(self.coref.params)
            self.params["mt.s_md"] = ad.param(np.array(0.0), "mt.s_md")
            self.params["mt.s_cr"] = ad.param(np.array(0.0), "mt.s_cr")

    # -- helpers -------------------------------------------------------------

    def token_ids(self, doc: Document) -> List[np.ndarray]:
        return [self.vocab.encode(s) for s in doc.sentences]

    def gold_tags(self, doc: Document, s: int):
        spans = laminarize(doc.sentence_spans(s))
        return encode_mentions(spans, len(doc.sentences[s]), self.cfg.max_depth)

    # -- training ------------------------------------------------------------

    def document_loss(self, doc: Document, loss_cfg: LossConfig) -> Tuple[Tensor, Dict[str, float]]:
        """Loss for one document and its logged parts."""
        if self.cfg.model == "tagger":
            det, mentions = self._tagger_doc(doc, loss_cfg, train=True)
        else:
            det, mentions = self._span_doc(doc, loss_cfg, train=True)
        parts = {"detector_loss": float(det.data)}
        if self.coref is None:
            return det, parts
        reprs, s_m, cands = mentions
        clusters = [c.cluster for c in cands]
        if reprs is None:
            coref_loss = ad.const(0.0)
        else:
            scores = self.coref.pair_scores(reprs, s_m)
            coref_loss = cr.antecedent_loss(scores, clusters)
        s_md, s_cr = self.params["mt.s_md"], self.params["mt.s_cr"]
        total = multitask_combine(det, coref_loss, s_md, s_cr)
        parts.update({"coref_loss": float(coref_loss.data), "s_md": float(s_md.data),
                      "s_cr": float(s_cr.data), "combined_loss": float(total.data),
                      "n_candidates": len(cands)})
        return total, parts

    def _span_doc(self, doc: Document, loss_cfg: LossConfig, train: bool):
        gold = doc.cluster_ids()
        logits, labels = [], []
        per_sentence = []
        for s, ids in enumerate(self.token_ids(doc)):
            out = self.detector.forward(ids)
            annotated = set(doc.sentence_spans(s))
            labels.append(np.array([1.0 if (i, j) in annotated else 0.0
                                    for i, j in zip(out.starts, out.ends)]))
            logits.append(out.logits)
            per_sentence.append(out)
        loss = span_loss(ad.concat(logits, axis=0), np.concatenate(labels), loss_cfg)
        if self.coref is None:
            return loss, None
        predicted = set()
        for s, out in enumerate(per_sentence):
            for i, j, p in zip(out.starts, out.ends, out.probs):
                if p > loss_cfg.tau:
                    predicted.add((s, int(i), int(j)))
        cands = cr.select_candidates(predicted, gold if train else {}, "train" if train else "test")
        return loss, self._span_mentions(per_sentence, cands)

    def _span_mentions(self, per_sentence, cands):
        if not cands:
            return None, None, cands
        lookup = [{(int(i), int(j)): r for r, (i, j) in enumerate(zip(o.starts, o.ends))} for o in per_sentence]
        reprs, logits = [], []
        for s, out in enumerate(per_sentence):
            rows = [lookup[s][(c.span[1], c.span[2])] for c in cands if c.span[0] == s]
            if rows:
                rows = np.asarray(rows)
                reprs.append(ad.take(out.reprs, rows))
                logits.append(ad.take(out.logits, rows))
        probs = ad.sigmoid(ad.concat(logits, axis=0))
        s_m = cr.s_m_span(self.params["coref.v"], probs)
        return ad.concat(reprs, axis=0), s_m, cands

    def _tagger_doc(self, doc: Document, loss_cfg: LossConfig, train: bool):
        gold = doc.cluster_ids()
        losses, passes = [], []
        for s, ids in enumerate(self.token_ids(doc)):
            encoded = self.detector.encode(ids)
            gold_tags = self.gold_tags(doc, s)
            out = self.detector.forward_teacher_forced(ids, gold_tags, encoded)
            losses.append(tagger_loss(out.log_probs, gold_tags, loss_cfg))
            passes.append(encoded)
        loss = ad.mean(ad.concat([ad.reshape(x, (1,)) for x in losses], axis=0))
        if self.coref is None:
            return loss, None
        # second pass: condition on the model's own predicted tags
        predicted, second = set(), []
        for s, ids in enumerate(self.token_ids(doc)):
            res = self.detector.beam_decode(ids, self.cfg.second_pass_beam, passes[s])
            out2 = self.detector.forward_teacher_forced(ids, res.tags, passes[s])
            second.append((res.tags, out2))
            predicted |= {(s, i, j) for i, j in _spans_of(res.tags, self.cfg.max_depth)}
        cands = cr.select_candidates(predicted, gold, "train")
        return loss, self._tagger_mentions(doc, passes, [(t.alignment, o.log_probs) for t, o in second], cands)

    def _tagger_mentions(self, doc, encoded, step_outputs, cands):
        if not cands:
            return None, None, cands
        reprs, p_open, p_close = [], [], []
        for s in range(len(doc.sentences)):
            mine = [c for c in cands if c.span[0] == s]
            if not mine:
                continue
            st = np.array([c.span[1] for c in mine])
            en = np.array([c.span[2] for c in mine])
            X, H = encoded[s]
            reprs.append(self.coref.span_repr(X, H, st, en))
            alignment, log_probs = step_outputs[s]
            po, pc = confidence_tensors(log_probs, alignment, len(doc.sentences[s]), st, en)
            p_open.append(po)
            p_close.append(pc)
        s_m = cr.s_m_tagger(self.params["coref.v"], ad.concat(p_open, 0), ad.concat(p_close, 0))
        return ad.concat(reprs, axis=0), s_m, cands

    # -- prediction ------------------------------------------------------------

    def predict(self, doc: Document, tau: float = 0.5, beam: int = 4) -> DocumentPrediction:
        if self.cfg.model == "tagger":
            return self._predict_tagger(doc, beam)
        return self._predict_span(doc, tau)

    def _predict_span(self, doc: Document, tau: float) -> DocumentPrediction:
        per_sentence, probs = [], {}
        for s, ids in enumerate(self.token_ids(doc)):
            out = self.detector.forward(ids)
            per_sentence.append(out)
            for i, j, p in zip(out.starts, out.ends, out.probs):
                probs[(s, int(i), int(j))] = float(p)
        mentions = {k for k, p in probs.items() if p > tau}
        pred = DocumentPrediction(mentions, span_probs=probs)
        if self.coref is not None:
            cands = cr.select_candidates(mentions, {}, "test")
            reprs, s_m, cands = self._span_mentions(per_sentence, cands)
            pred.clusters = self._clusters(reprs, s_m, cands)
        return pred

    def _predict_tagger(self, doc: Document, beam: int) -> DocumentPrediction:
        mentions, encoded, steps, tags = set(), [], [], []
        for s, ids in enumerate(self.token_ids(doc)):
            enc = self.detector.encode(ids)
            res = self.detector.beam_decode(ids, beam, enc)
            encoded.append(enc)
            steps.append((res.tags.alignment, ad.const(np.log(np.maximum(res.probs, 1e-300)))))
            tags.append(res.tags.render())
            mentions |= {(s, i, j) for i, j in _spans_of(res.tags, self.cfg.max_depth)}
        pred = DocumentPrediction(mentions, tags=tags)
        if self.coref is not None:
            cands = cr.select_candidates(mentions, {}, "test")
            reprs, s_m, cands = self._tagger_mentions(doc, encoded, steps, cands)
            pred.clusters = self._clusters(reprs, s_m, cands)
        return pred

    def _clusters(self, reprs, s_m, cands) -> List[List[SpanKey]]:
        if reprs is None:
            return []
        scores = self.coref.pair_scores(reprs, s_m)
        return [[cands[k].span for k in c] for c in cr.cluster_decode(scores)]


def _spans_of(tags, max_depth: int) -> List[Tuple[int, int]]:
    return sorted(decode_tags(tags, max_depth=max_depth))
