"""Training losses, including the two partial-annotation modifications.

``weighted`` multiplies the loss of every negative example by ``w``.
``soft`` replaces the hard negative target by one that keeps probability
``rho`` on the positive class(es).

For the tagger a negative example is a decoder step whose gold symbol is
``-``; for the span scorer it is an unannotated span.

Soft-target losses are reported relative to the entropy of their targets
(cross-entropy minus that constant), so every mode bottoms out at 0. The
gradients are unchanged; what changes is the value the multitask weighting
sees. With the raw cross-entropy the entropy floor looks like irreducible
noise and the learned weighting all but switches the detector off.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import entr

from . import autodiff as ad
from .autodiff import Tensor
from .tags import ADVANCE_OUT, SYMBOL_INDEX, TagSequence

MODES = ("plain", "weighted", "soft")
NEG = SYMBOL_INDEX[ADVANCE_OUT]


@dataclass(frozen=True)
class LossConfig:
    mode: str = "plain"
    w: Optional[float] = None
    rho: Optional[float] = None
    tau: float = 0.5
    beam: int = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"loss mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "weighted" and (self.w is None or not 0.0 < self.w <= 1.0):
            raise ValueError(f"weighted mode needs w in (0, 1], got {self.w}")
        if self.mode == "soft" and (self.rho is None or not 0.0 <= self.rho < 1.0):
            raise ValueError(f"soft mode needs rho in [0, 1), got {self.rho}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if self.beam < 1:
            raise ValueError("beam must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def soft_tag_target(rho: float) -> np.ndarray:
    """Target distribution over ([, ], +, -) for a negative tagger step."""
    return np.array([rho, rho, rho, 1.0 - 3.0 * rho])


def tagger_targets(gold: TagSequence, cfg: LossConfig) -> np.ndarray:
    """(T, 4) matrix of target coefficients, weights folded in."""
    ids = np.asarray(gold.ids, dtype=np.int64)
    T = len(ids)
    Y = np.zeros((T, 4))
    Y[np.arange(T), ids] = 1.0
    neg = ids == NEG
    if cfg.mode == "weighted":
        Y[neg] *= cfg.w
    elif cfg.mode == "soft":
        if not 1.0 - 3.0 * cfg.rho > 0.0:
            raise ValueError(f"tagger soft targets need 1 - 3*rho > 0, got rho={cfg.rho}")
        Y[neg] = soft_tag_target(cfg.rho)
    return Y


def tagger_loss(log_probs: Tensor, gold: TagSequence, cfg: LossConfig) -> Tensor:
    """Mean over steps of the (weighted / soft-target) cross-entropy."""
    if log_probs.shape != (len(gold), 4):
        raise ValueError(f"tagger_loss: {log_probs.shape[0]} step outputs for {len(gold)} gold symbols")
    Y = tagger_targets(gold, cfg)
    ce = ad.mul(ad.sum(ad.mul(log_probs, Y)), -1.0 / len(gold))
    if cfg.mode != "soft":
        return ce
    return ad.add(ce, -float(entr(Y).sum()) / len(gold))


def span_targets(labels, cfg: LossConfig):
    """Coefficients (c_pos, c_neg) of log p and log(1 - p) per span."""
    y = np.asarray(labels, dtype=np.float64)
    if np.any((y < 0.0) | (y > 1.0)):
        raise ValueError("span labels must lie in [0, 1]")
    if cfg.mode == "plain":
        return y, 1.0 - y
    if cfg.mode == "weighted":
        return y, (1.0 - y) * cfg.w
    soft = np.where(y == 0.0, cfg.rho, y)
    return soft, 1.0 - soft


def span_loss(logits: Tensor, labels, cfg: LossConfig) -> Tensor:
    """Mean binary cross-entropy over spans, computed from pre-sigmoid scores.

    Works from logits so the loss stays finite when a probability rounds to
    0 or 1.
    """
    logits = ad.const(logits)
    c_pos, c_neg = span_targets(labels, cfg)
    if c_pos.shape != logits.shape:
        raise ValueError(f"span_loss: {c_pos.shape} labels for logits {logits.shape}")
    n = logits.data.size
    if n == 0:
        return ad.const(0.0)
    ll = ad.add(ad.mul(ad.log_sigmoid(logits), c_pos), ad.mul(ad.log_sigmoid(ad.neg(logits)), c_neg))
    ce = ad.mul(ad.sum(ll), -1.0 / n)
    if cfg.mode != "soft":
        return ce
    return ad.add(ce, -float(np.sum(entr(c_pos) + entr(c_neg))) / n)


def span_loss_from_probs(probs, labels, cfg: LossConfig) -> float:
    p = np.asarray(probs, dtype=np.float64)
    return float(span_loss(ad.const(np.log(p) - np.log1p(-p)), labels, cfg).data)


def multitask_combine(loss_md, loss_cr, s_md, s_cr) -> Tensor:
    """Uncertainty-weighted sum; ``s_*`` are learned log-variances."""
    term_md = ad.add(ad.mul(ad.exp(ad.neg(s_md)), loss_md), ad.mul(s_md, 0.5))
    term_cr = ad.add(ad.mul(ad.exp(ad.neg(s_cr)), loss_cr), ad.mul(s_cr, 0.5))
    return ad.add(term_md, term_cr)
