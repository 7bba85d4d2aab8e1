"""Pairwise antecedent scoring on top of a mention detector.

The score of mention k linking to an earlier candidate a is::

    s(k, a) = s_c(k, a) + s_m(k) + s_m(a)

where ``s_c`` is a feed-forward pair scorer and ``s_m`` is the detector's
confidence scaled by a learned scalar ``v``. A dummy antecedent with fixed
score 0 stands for "no antecedent".
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .span import averaging_matrix

# candidate-index distance buckets: 1,2,3,4,5-7,8-15,16-31,32+
DISTANCE_BUCKET_BOUNDS = (1, 2, 3, 4, 5, 8, 16, 32)
DEFAULT_MAX_ANTECEDENTS = 50

SpanKey = Tuple[int, int, int]  # (sentence, start, end)


def distance_bucket(d: int) -> int:
    return int(np.searchsorted(DISTANCE_BUCKET_BOUNDS, d, side="right") - 1)


@dataclass
class Candidate:
    span: SpanKey
    cluster: Optional[int] = None  # gold cluster id, None if not in any chain
    predicted: bool = False
    gold: bool = False


def select_candidates(predicted: Iterable[SpanKey], gold: Dict[SpanKey, Optional[int]],
                      phase: str) -> List[Candidate]:
    """Candidate mentions in document order.

    At train time the predicted spans are unioned with the gold mentions;
    at test time only predicted spans are used. ``gold`` maps each annotated
    span to its cluster id (or None).
    """
    if phase not in ("train", "test"):
        raise ValueError(f"phase must be 'train' or 'test', got {phase!r}")
    predicted = set(map(tuple, predicted))
    keys = set(predicted)
    if phase == "train":
        keys |= set(gold)
    return [Candidate(k, gold.get(k), k in predicted, k in gold)
            for k in sorted(keys, key=lambda s: (s[0], s[1], -s[2]))]


def s_m_span(v: Tensor, prob: Tensor) -> Tensor:
    return ad.mul(v, prob)


def s_m_tagger(v: Tensor, p_open: Tensor, p_close: Tensor) -> Tensor:
    return ad.mul(v, ad.mul(p_open, p_close))


@dataclass
class PairScores:
    """Scores of every (candidate, antecedent) pair inside the window."""

    k: np.ndarray  # anaphor index per pair
    a: np.ndarray  # antecedent index per pair
    s_c: Tensor  # (P,)
    s: Tensor  # (P,) full score
    n: int  # number of candidates


def antecedent_pairs(n: int, max_antecedents: int) -> Tuple[np.ndarray, np.ndarray]:
    ks, as_ = [], []
    for k in range(n):
        for a in range(k - 1, max(-1, k - 1 - max_antecedents), -1):
            ks.append(k)
            as_.append(a)
    return np.asarray(ks, dtype=np.int64), np.asarray(as_, dtype=np.int64)


class CorefHead:
    def __init__(self, d_mention: int, d_hidden: int = 64, d_dist: int = 8,
                 max_antecedents: int = DEFAULT_MAX_ANTECEDENTS, seed: int = 0,
                 span_input: Optional[int] = None):
        """``span_input``: if given, the head owns its own span representation
        layer mapping ``span_input``-dim features to ``d_mention`` (tagger path)."""
        self.max_antecedents = max_antecedents
        self.d_mention = d_mention
        self.params: nn.Params = {}
        rng = np.random.default_rng(seed)
        self.params["coref.v"] = ad.param(np.array(1.0), "coref.v")
        self.params["coref.dist"] = ad.param(nn.uniform(rng, (len(DISTANCE_BUCKET_BOUNDS), d_dist)), "coref.dist")
        nn.add_linear(self.params, rng, "coref.pair", 3 * d_mention + d_dist, d_hidden)
        nn.add_linear(self.params, rng, "coref.out", d_hidden, 1)
        if span_input is not None:
            nn.add_linear(self.params, rng, "coref.span", span_input, d_mention)

    def span_repr(self, X: Tensor, H: Tensor, starts, ends) -> Tensor:
        """Mention representation from encoder states (tagger path)."""
        starts = np.asarray(starts, dtype=np.int64)
        ends = np.asarray(ends, dtype=np.int64)
        pooled = ad.matmul(ad.const(averaging_matrix(starts, ends, X.shape[0])), X)
        feats = ad.concat([ad.take(H, starts), ad.take(H, ends), pooled], axis=1)
        return ad.relu(nn.linear(self.params, "coref.span", feats))

    def s_c(self, reprs: Tensor, k: np.ndarray, a: np.ndarray) -> Tensor:
        """Pair scores for anaphors ``k`` and antecedents ``a`` (a < k)."""
        k = np.asarray(k, dtype=np.int64)
        a = np.asarray(a, dtype=np.int64)
        if np.any(a >= k):
            raise ValueError("s_c: antecedent must precede the mention")
        gk, ga = ad.take(reprs, k), ad.take(reprs, a)
        dist = np.array([distance_bucket(d) for d in (k - a)], dtype=np.int64)
        feats = ad.concat([gk, ga, ad.mul(gk, ga), ad.take(self.params["coref.dist"], dist)], axis=1)
        hidden = ad.relu(nn.linear(self.params, "coref.pair", feats))
        return ad.reshape(nn.linear(self.params, "coref.out", hidden), (-1,))

    def pair_scores(self, reprs: Tensor, s_m: Tensor) -> PairScores:
        n = reprs.shape[0]
        k, a = antecedent_pairs(n, self.max_antecedents)
        if len(k) == 0:
            empty = ad.const(np.zeros(0))
            return PairScores(k, a, empty, empty, n)
        sc = self.s_c(reprs, k, a)
        s = ad.add(sc, ad.add(ad.take(s_m, k), ad.take(s_m, a)))
        return PairScores(k, a, sc, s, n)


def _antecedent_tables(scores: PairScores, clusters: Sequence[Optional[int]]):
    """Index tables into [pair scores..., 0 (dummy), -inf (padding)]."""
    n, P = scores.n, len(scores.k)
    dummy, pad = P, P + 1
    rows: List[List[int]] = [[dummy] for _ in range(n)]
    gold: List[List[int]] = [[] for _ in range(n)]
    for p, (k, a) in enumerate(zip(scores.k, scores.a)):
        rows[k].append(p)
        if clusters[k] is not None and clusters[k] == clusters[a]:
            gold[k].append(p)
    width = max(len(r) for r in rows)
    all_idx = np.full((n, width), pad, dtype=np.int64)
    gold_idx = np.full((n, width), pad, dtype=np.int64)
    for k in range(n):
        all_idx[k, :len(rows[k])] = rows[k]
        g = gold[k] or [dummy]
        gold_idx[k, :len(g)] = g
    return all_idx, gold_idx


def antecedent_loss(scores: PairScores, clusters: Sequence[Optional[int]]) -> Tensor:
    """Mean over candidates of -log P(any gold antecedent).

    A candidate whose cluster has no earlier member in its window has the
    dummy as its only gold antecedent.
    """
    if scores.n == 0:
        return ad.const(0.0)
    all_idx, gold_idx = _antecedent_tables(scores, clusters)
    flat = ad.concat([scores.s, ad.const(np.array([0.0, -np.inf]))], axis=0)
    lse_all = ad.logsumexp(ad.take(flat, all_idx), axis=1)
    lse_gold = ad.logsumexp(ad.take(flat, gold_idx), axis=1)
    return ad.mean(ad.sub(lse_all, lse_gold))


def cluster_decode(scores: PairScores) -> List[List[int]]:
    """Link each candidate to its best antecedent when that beats the dummy.

    Ties go to the earlier antecedent. Returns clusters of candidate indices
    with at least two members.
    """
    n = scores.n
    s = scores.s.data
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    best: Dict[int, Tuple[float, int]] = {}
    for p, (k, a) in enumerate(zip(scores.k, scores.a)):
        cur = best.get(k)
        if cur is None or s[p] > cur[0] or (s[p] == cur[0] and a < cur[1]):
            best[int(k)] = (float(s[p]), int(a))
    for k, (score, a) in best.items():
        if score > 0.0:
            parent[find(k)] = find(a)
    groups: Dict[int, List[int]] = {}
    for x in range(n):
        groups.setdefault(find(x), []).append(x)
    return sorted(g for g in groups.values() if len(g) > 1)
