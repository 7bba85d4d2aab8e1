"""Pointer-synchronized sequence-to-sequence mention tagger.

The encoder is a BiLSTM over word embeddings. The decoder LSTM consumes the
embedding of the previous tag symbol, starts from the encoder state of the
last word, and at every step reads the encoder state of the word under the
pointer. The pointer advances on ``+`` and ``-`` only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .tags import (CLOSE, DEFAULT_MAX_DEPTH, OPEN, SYMBOL_INDEX, SYMBOLS,
                   GrammarState, TagSequence, validate)

N_SYMBOLS = len(SYMBOLS)
SOS = N_SYMBOLS  # row of the symbol embedding table used before the first step


@dataclass
class TaggerOutput:
    """Per-step decoder outputs for one sentence."""

    log_probs: Tensor  # (T, 4)
    pointers: np.ndarray  # (T,) word index under the pointer at each step
    H: Tensor  # encoder states (M, 2H)
    X: Tensor  # word embeddings (M, d_emb)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)


@dataclass
class DecodeResult:
    tags: TagSequence
    score: float
    probs: np.ndarray  # (T, 4) distributions along the returned path


def pointer_trajectory(symbols: Sequence[str]) -> np.ndarray:
    return np.asarray(TagSequence.from_symbols(symbols).alignment, dtype=np.int64)


class Tagger:
    def __init__(self, vocab_size: int, d_emb: int = 32, d_hidden: int = 64, d_sym: int = 16,
                 max_depth: int = DEFAULT_MAX_DEPTH, seed: int = 0):
        self.max_depth = max_depth
        self.encoder = nn.Encoder(vocab_size, d_emb, d_hidden)
        self.params: nn.Params = {}
        rng = np.random.default_rng(seed)
        self.encoder.build(self.params, rng)
        d_dec = self.encoder.d_out  # decoder starts from an encoder state
        self.params["dec.sym"] = ad.param(nn.uniform(rng, (N_SYMBOLS + 1, d_sym)), "dec.sym")
        nn.add_lstm(self.params, rng, "dec.lstm", d_sym, d_dec)
        nn.add_linear(self.params, rng, "dec.out", d_dec + self.encoder.d_out, N_SYMBOLS)
        # start the output units in the active region of the relu
        self.params["dec.out.b"].data += 1.0

    def encode(self, token_ids) -> Tuple[Tensor, Tensor]:
        if len(token_ids) == 0:
            raise ValueError("cannot tag an empty sentence")
        return self.encoder(self.params, token_ids)

    def forward_teacher_forced(self, token_ids, gold: TagSequence, encoded=None) -> TaggerOutput:
        """Step distributions conditioned on the gold prefix at every step."""
        M = len(token_ids)
        report = validate(gold, M, self.max_depth)
        if not report.ok:
            raise ValueError(f"invalid gold tag sequence: {report.message}")
        X, H = encoded if encoded is not None else self.encode(token_ids)
        ids = gold.ids
        prev = np.asarray([SOS] + ids[:-1], dtype=np.int64)
        pointers = np.asarray(gold.alignment, dtype=np.int64)
        inputs = ad.take(self.params["dec.sym"], prev)
        D = nn.run_lstm(self.params, "dec.lstm", inputs, h0=ad.take(H, M - 1))
        feats = ad.concat([D, ad.take(H, pointers)], axis=1)
        o = ad.relu(nn.linear(self.params, "dec.out", feats))
        return TaggerOutput(ad.log_softmax(o, axis=1), pointers, H, X)

    # -- decoding ----------------------------------------------------------

    def _weights(self):
        p = self.params
        return (p["dec.sym"].data, p["dec.lstm.W"].data, p["dec.lstm.U"].data, p["dec.lstm.b"].data,
                p["dec.out.W"].data, p["dec.out.b"].data)

    def beam_decode(self, token_ids, beam: int = 4, encoded=None) -> DecodeResult:
        """Grammar-constrained beam search; the score is the summed log-probability."""
        if beam < 1:
            raise ValueError("beam width must be >= 1")
        M = len(token_ids)
        H = (encoded[1] if encoded is not None else self.encode(token_ids)[1]).data
        sym, W, U, b, Wo, bo = self._weights()
        d = H.shape[1]
        # hypothesis: (score, symbol ids, grammar state, h, c, list of prob rows)
        live = [(0.0, (), GrammarState(M, max_depth=self.max_depth), H[M - 1].copy(), np.zeros(d), ())]
        finished = []
        while live:
            prev = np.array([h[1][-1] if h[1] else SOS for h in live])
            hs = np.stack([h[3] for h in live])
            cs = np.stack([h[4] for h in live])
            words = np.array([h[2].word for h in live])
            hs, cs = ad.lstm_step_np(sym[prev], hs, cs, W, U, b)
            o = np.maximum(np.concatenate([hs, H[words]], axis=1) @ Wo + bo, 0.0)
            o = o - o.max(axis=1, keepdims=True)
            logp = o - np.log(np.exp(o).sum(axis=1, keepdims=True))
            candidates = []
            for k, (score, seq, state, _, _, rows) in enumerate(live):
                for s_id, s in enumerate(SYMBOLS):
                    nxt = state.step(s)
                    if nxt is not None:
                        candidates.append((score + logp[k, s_id], seq + (s_id,), nxt, hs[k], cs[k],
                                           rows + (logp[k],)))
            candidates.sort(key=lambda c: (-c[0], c[1]))
            live = []
            for cand in candidates[:beam]:
                (finished if cand[2].done else live).append(cand)
            if finished:
                best_done = max(f[0] for f in finished)
                # scores only decrease along a hypothesis
                if not live or best_done >= max(h[0] for h in live):
                    break
        best = min(finished, key=lambda c: (-c[0], c[1]))
        tags = TagSequence.from_symbols(SYMBOLS[i] for i in best[1])
        return DecodeResult(tags, float(best[0]), np.exp(np.array(best[5])))

    def greedy_decode(self, token_ids, encoded=None) -> DecodeResult:
        return self.beam_decode(token_ids, beam=1, encoded=encoded)

    def sequence_log_prob(self, token_ids, tags: TagSequence) -> float:
        out = self.forward_teacher_forced(token_ids, tags)
        return float(out.log_probs.data[np.arange(len(tags)), tags.ids].sum())


# ---------------------------------------------------------------------------
# detector confidences for the coreference scorer

def word_step_index(alignment: Sequence[int], M: int) -> np.ndarray:
    """(M, k) matrix of step indices aligned to each word, padded by repetition."""
    blocks: List[List[int]] = [[] for _ in range(M)]
    for t, w in enumerate(alignment):
        if 0 <= w < M:
            blocks[w].append(t)
    width = max(len(b) for b in blocks)
    return np.array([b + [b[0]] * (width - len(b)) for b in blocks], dtype=np.int64)


def mention_confidence(probs: np.ndarray, alignment: Sequence[int], i: int, j: int) -> Tuple[float, float]:
    """Max probability of ``[`` over steps at word i and of ``]`` over steps at word j."""
    M = max(alignment) + 1 if len(alignment) else 0
    if not (0 <= i < M and 0 <= j < M):
        raise IndexError(f"span ({i}, {j}) out of range for {M} words")
    align = np.asarray(alignment)
    p_open = float(probs[align == i, SYMBOL_INDEX[OPEN]].max())
    p_close = float(probs[align == j, SYMBOL_INDEX[CLOSE]].max())
    return p_open, p_close


def confidence_tensors(log_probs: Tensor, alignment: Sequence[int], M: int,
                       starts: np.ndarray, ends: np.ndarray) -> Tuple[Tensor, Tensor]:
    """Differentiable version of :func:`mention_confidence` for many spans."""
    P = ad.reshape(ad.exp(log_probs), (-1,))
    idx = word_step_index(alignment, M) * N_SYMBOLS
    open_by_word = ad.max(ad.take(P, idx + SYMBOL_INDEX[OPEN]), axis=1)
    close_by_word = ad.max(ad.take(P, idx + SYMBOL_INDEX[CLOSE]), axis=1)
    return ad.take(open_by_word, np.asarray(starts)), ad.take(close_by_word, np.asarray(ends))
