"""Exhaustive span-scoring mention detector.

Every span (i, j) of a scope unit is represented as
``relu(W_h [h_i, h_j, mean(x_i..x_j)] + b_h)`` and scored with
``sigmoid(V . relu(W_m m + b_m) + b)``; the scalar ``b`` can be switched
off with ``output_bias=False``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .tags import MentionSpan

# span-length buckets for the size embedding: 1,2,3,4,5-7,8-15,16+
SIZE_BUCKET_BOUNDS = (1, 2, 3, 4, 5, 8, 16)


class ConfigError(ValueError):
    pass


def size_bucket(length: int) -> int:
    return int(np.searchsorted(SIZE_BUCKET_BOUNDS, length, side="right") - 1)


def enumerate_spans(M: int, max_len: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """All (i, j) with i <= j < M, ordered by start then end."""
    starts, ends = [], []
    for i in range(M):
        last = M if max_len is None else min(M, i + max_len)
        for j in range(i, last):
            starts.append(i)
            ends.append(j)
    return np.asarray(starts, dtype=np.int64), np.asarray(ends, dtype=np.int64)


def enumerate_document_spans(sentence_lengths: Sequence[int], scope: str = "sentence",
                             max_len: Optional[int] = None) -> List[Tuple[int, int, int]]:
    """Candidate spans of a document as (unit, i, j).

    With sentence scope the unit is the sentence index; with document scope
    there is a single unit 0 indexing the concatenated tokens.
    """
    if scope == "sentence":
        out = []
        for s, M in enumerate(sentence_lengths):
            st, en = enumerate_spans(M, max_len)
            out += [(s, int(i), int(j)) for i, j in zip(st, en)]
        return out
    if scope == "document":
        st, en = enumerate_spans(int(sum(sentence_lengths)), max_len)
        return [(0, int(i), int(j)) for i, j in zip(st, en)]
    raise ValueError(f"unknown scope {scope!r}")


def averaging_matrix(starts: np.ndarray, ends: np.ndarray, M: int) -> np.ndarray:
    starts = np.asarray(starts)[:, None]
    ends = np.asarray(ends)[:, None]
    cols = np.arange(M)
    return ((cols >= starts) & (cols <= ends)) / (ends - starts + 1.0)


@dataclass
class SpanOutput:
    starts: np.ndarray
    ends: np.ndarray
    reprs: Tensor  # (S, d_span)
    logits: Tensor  # (S,)
    H: Tensor
    X: Tensor

    @property
    def probs(self) -> np.ndarray:
        return ad.sigmoid_np(self.logits.data)


class SpanScorer:
    def __init__(self, vocab_size: int, d_emb: int = 32, d_hidden: int = 64, d_span: int = 64,
                 d_ffnn: int = 64, size_emb: bool = False, attention: bool = False,
                 max_len: Optional[int] = None, d_size: int = 8, output_bias: bool = True, seed: int = 0):
        if attention and max_len is None:
            raise ConfigError("attention pooling requires max_len")
        self.size_emb = size_emb
        self.attention = attention
        self.max_len = max_len
        self.encoder = nn.Encoder(vocab_size, d_emb, d_hidden)
        self.params: nn.Params = {}
        rng = np.random.default_rng(seed)
        self.encoder.build(self.params, rng)
        d_in = 2 * self.encoder.d_out + d_emb
        if size_emb:
            self.params["span.size"] = ad.param(nn.uniform(rng, (len(SIZE_BUCKET_BOUNDS), d_size)), "span.size")
            d_in += d_size
        if attention:
            self.params["span.att"] = ad.param(nn.uniform(rng, (self.encoder.d_out,)), "span.att")
        nn.add_linear(self.params, rng, "span.h", d_in, d_span)
        nn.add_linear(self.params, rng, "span.m", d_span, d_ffnn)
        self.params["span.V"] = ad.param(nn.uniform(rng, (d_ffnn,)), "span.V")
        self.output_bias = output_bias
        if output_bias:
            self.params["span.b"] = ad.param(np.array(0.0), "span.b")
        self.d_span = d_span

    def encode(self, token_ids) -> Tuple[Tensor, Tensor]:
        if len(token_ids) == 0:
            raise ValueError("cannot score an empty sentence")
        return self.encoder(self.params, token_ids)

    def pooled_embeddings(self, X: Tensor, H: Tensor, starts, ends) -> Tensor:
        M = X.shape[0]
        if not self.attention:
            return ad.matmul(ad.const(averaging_matrix(starts, ends, M)), X)
        L = self.max_len
        if np.any(ends - starts + 1 > L):
            raise ConfigError(f"span longer than max_len={L} under attention pooling")
        offsets = starts[:, None] + np.arange(L)[None, :]
        valid = offsets <= ends[:, None]
        idx = np.where(valid, offsets, starts[:, None])
        scores = H @ self.params["span.att"]  # (M,)
        masked = ad.add(ad.take(scores, idx), ad.const(np.where(valid, 0.0, -1e30)))
        weights = ad.softmax(masked, axis=1)  # (S, L)
        gathered = ad.take(X, idx)  # (S, L, d)
        return ad.sum(ad.mul(ad.reshape(weights, (len(starts), L, 1)), gathered), axis=1)

    def span_repr(self, X: Tensor, H: Tensor, starts, ends) -> Tensor:
        starts = np.asarray(starts, dtype=np.int64)
        ends = np.asarray(ends, dtype=np.int64)
        M = X.shape[0]
        if np.any(starts > ends) or np.any(starts < 0) or np.any(ends >= M):
            raise IndexError(f"span indices out of range for {M} words")
        parts = [ad.take(H, starts), ad.take(H, ends), self.pooled_embeddings(X, H, starts, ends)]
        if self.size_emb:
            buckets = np.array([size_bucket(j - i + 1) for i, j in zip(starts, ends)], dtype=np.int64)
            parts.append(ad.take(self.params["span.size"], buckets))
        return ad.relu(nn.linear(self.params, "span.h", ad.concat(parts, axis=1)))

    def span_logit(self, reprs: Tensor) -> Tensor:
        hidden = ad.relu(nn.linear(self.params, "span.m", reprs))
        logit = hidden @ self.params["span.V"]
        # without a bias the logit can only go negative through units that are
        # also needed to fire on mentions; a shared offset avoids that trap
        return ad.add(logit, self.params["span.b"]) if self.output_bias else logit

    def forward(self, token_ids, starts=None, ends=None, encoded=None) -> SpanOutput:
        X, H = encoded if encoded is not None else self.encode(token_ids)
        if starts is None:
            starts, ends = enumerate_spans(len(token_ids), self.max_len)
        reprs = self.span_repr(X, H, starts, ends)
        return SpanOutput(np.asarray(starts), np.asarray(ends), reprs, self.span_logit(reprs), H, X)


def span_prob(logit: Tensor) -> Tensor:
    return ad.sigmoid(logit)


def decode_mentions(probs: np.ndarray, starts, ends, tau: float) -> Set[MentionSpan]:
    """Spans whose probability strictly exceeds ``tau``."""
    if tau < 0.0:
        raise ValueError(f"threshold must be non-negative, got {tau}")
    keep = np.asarray(probs) > tau
    return {MentionSpan(int(i), int(j)) for i, j, k in zip(starts, ends, keep) if k}
