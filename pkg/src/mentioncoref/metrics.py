"""Mention detection P/R/F1 and the MUC, B-cubed and CEAF-phi4 coreference
metrics with their unweighted average.

Clusterings are sequences of clusters, each an iterable of hashable mention
identifiers. To score a corpus, make identifiers globally unique (e.g.
prefix the document id) and pass the union of all documents' clusters;
clusters from different documents never overlap, so this yields the
corpus-level aggregate counts.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, List, Sequence, Set

import numpy as np
from scipy.optimize import linear_sum_assignment

Clustering = Sequence[Iterable[Hashable]]


@dataclass(frozen=True)
class PRF:
    recall: float
    precision: float
    f1: float

    @classmethod
    def from_counts(cls, r_num, r_den, p_num, p_den) -> "PRF":
        r = r_num / r_den if r_den else 0.0
        p = p_num / p_den if p_den else 0.0
        return cls(r, p, f1(p, r))

    def as_row(self) -> List[float]:
        return [self.recall, self.precision, self.f1]


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def mention_prf(predicted: Iterable[Hashable], gold: Iterable[Hashable]) -> PRF:
    """Exact-match set P/R/F1; precision of an empty prediction is 0."""
    predicted, gold = set(predicted), set(gold)
    hit = len(predicted & gold)
    return PRF.from_counts(hit, len(gold), hit, len(predicted))


def _normalize(clusters: Clustering, side: str) -> List[Set[Hashable]]:
    out, seen = [], set()
    for c in clusters:
        c = set(c)
        if not c:
            continue
        overlap = seen & c
        if overlap:
            raise ValueError(f"{side} clusters overlap on mention(s) {sorted(map(repr, overlap))[:3]}")
        seen |= c
        out.append(c)
    return out


def _index(clusters: List[Set[Hashable]]) -> Dict[Hashable, int]:
    return {m: k for k, c in enumerate(clusters) for m in c}


def _muc_counts(keys: List[Set[Hashable]], responses: List[Set[Hashable]]):
    where = _index(responses)
    num = den = 0
    for K in keys:
        parts = {where.get(m, ("alone", m)) for m in K}
        num += len(K) - len(parts)
        den += len(K) - 1
    return num, den


def muc(gold: Clustering, pred: Clustering) -> PRF:
    g, p = _normalize(gold, "gold"), _normalize(pred, "predicted")
    r_num, r_den = _muc_counts(g, p)
    p_num, p_den = _muc_counts(p, g)
    return PRF.from_counts(r_num, r_den, p_num, p_den)


def _b3_counts(keys: List[Set[Hashable]], responses: List[Set[Hashable]]):
    where = _index(responses)
    num, den = 0.0, 0
    for K in keys:
        for m in K:
            r = where.get(m)
            if r is not None:
                num += len(K & responses[r]) / len(K)
        den += len(K)
    return num, den


def b_cubed(gold: Clustering, pred: Clustering) -> PRF:
    g, p = _normalize(gold, "gold"), _normalize(pred, "predicted")
    r_num, r_den = _b3_counts(g, p)
    p_num, p_den = _b3_counts(p, g)
    return PRF.from_counts(r_num, r_den, p_num, p_den)


def phi4(K: Set[Hashable], R: Set[Hashable]) -> float:
    return 2.0 * len(K & R) / (len(K) + len(R))


def ceaf_similarity_matrix(gold: List[Set[Hashable]], pred: List[Set[Hashable]]) -> np.ndarray:
    sim = np.zeros((len(gold), len(pred)))
    where = _index(pred)
    for a, K in enumerate(gold):
        for m in K:
            b = where.get(m)
            if b is not None and sim[a, b] == 0.0:
                sim[a, b] = phi4(K, pred[b])
    return sim


def ceaf_phi4(gold: Clustering, pred: Clustering) -> PRF:
    """Entity-based CEAF with the optimal one-to-one cluster alignment."""
    g, p = _normalize(gold, "gold"), _normalize(pred, "predicted")
    if not g or not p:
        return PRF.from_counts(0.0, len(g), 0.0, len(p))
    sim = ceaf_similarity_matrix(g, p)
    rows, cols = linear_sum_assignment(sim, maximize=True)
    total = float(sim[rows, cols].sum())
    return PRF.from_counts(total, len(g), total, len(p))


def conll_average(muc_prf: PRF, b3_prf: PRF, ceaf_prf: PRF) -> float:
    return (muc_prf.f1 + b3_prf.f1 + ceaf_prf.f1) / 3.0


def coref_report(gold: Clustering, pred: Clustering) -> Dict[str, object]:
    m, b, c = muc(gold, pred), b_cubed(gold, pred), ceaf_phi4(gold, pred)
    return {"muc": m, "b_cubed": b, "ceaf_phi4": c, "conll_avg": conll_average(m, b, c)}


def drop_singletons(clusters: Clustering) -> List[Set[Hashable]]:
    return [set(c) for c in clusters if len(set(c)) >= 2]
