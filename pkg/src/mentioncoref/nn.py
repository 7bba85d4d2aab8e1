"""Neural building blocks, optimizers and parameter checkpoints."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

Params = Dict[str, Tensor]

CHECKPOINT_FORMAT = "mentioncoref-checkpoint"
CHECKPOINT_VERSION = 1
INIT_SCALE = 0.1


def uniform(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def add_linear(params: Params, rng, prefix: str, d_in: int, d_out: int) -> None:
    params[f"{prefix}.W"] = ad.param(uniform(rng, (d_in, d_out)), f"{prefix}.W")
    params[f"{prefix}.b"] = ad.param(uniform(rng, (d_out,)), f"{prefix}.b")


def linear(params: Params, prefix: str, x: Tensor) -> Tensor:
    return x @ params[f"{prefix}.W"] + params[f"{prefix}.b"]


def add_lstm(params: Params, rng, prefix: str, d_in: int, hidden: int) -> None:
    b = uniform(rng, (4 * hidden,))
    b[hidden:2 * hidden] = 1.0  # forget gate
    params[f"{prefix}.W"] = ad.param(uniform(rng, (d_in, 4 * hidden)), f"{prefix}.W")
    params[f"{prefix}.U"] = ad.param(uniform(rng, (hidden, 4 * hidden)), f"{prefix}.U")
    params[f"{prefix}.b"] = ad.param(b, f"{prefix}.b")


def lstm_weights(params: Params, prefix: str) -> Tuple[Tensor, Tensor, Tensor]:
    return params[f"{prefix}.W"], params[f"{prefix}.U"], params[f"{prefix}.b"]


def run_lstm(params: Params, prefix: str, X: Tensor, h0=None, c0=None) -> Tensor:
    W, U, b = lstm_weights(params, prefix)
    hidden = U.shape[0]
    h0 = ad.const(np.zeros(hidden)) if h0 is None else h0
    c0 = ad.const(np.zeros(hidden)) if c0 is None else c0
    return ad.lstm_sequence(X, h0, c0, W, U, b)


def bilstm_encode(params: Params, prefix: str, X: Tensor) -> Tensor:
    """Contextualize the rows of ``X``; row i is [forward_i ; backward_i]."""
    M = X.shape[0]
    if M < 1:
        raise ValueError("bilstm_encode: empty sentence")
    fwd = run_lstm(params, f"{prefix}.fwd", X)
    rev = np.arange(M - 1, -1, -1)
    bwd = ad.take(run_lstm(params, f"{prefix}.bwd", ad.take(X, rev)), rev)
    return ad.concat([fwd, bwd], axis=1)


@dataclass
class Encoder:
    """Word embeddings followed by a BiLSTM. Owns parameters under ``prefix``."""

    vocab_size: int
    d_emb: int
    d_hidden: int
    prefix: str = "enc"

    def build(self, params: Params, rng) -> None:
        params[f"{self.prefix}.emb"] = ad.param(uniform(rng, (self.vocab_size, self.d_emb)), f"{self.prefix}.emb")
        add_lstm(params, rng, f"{self.prefix}.fwd", self.d_emb, self.d_hidden)
        add_lstm(params, rng, f"{self.prefix}.bwd", self.d_emb, self.d_hidden)

    @property
    def d_out(self) -> int:
        return 2 * self.d_hidden

    def __call__(self, params: Params, token_ids) -> Tuple[Tensor, Tensor]:
        X = ad.take(params[f"{self.prefix}.emb"], np.asarray(token_ids, dtype=np.int64))
        return X, bilstm_encode(params, self.prefix, X)


# ---------------------------------------------------------------------------
# optimizers

class NonFiniteGradient(FloatingPointError):
    pass


def _check_finite(grads: Mapping[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")


@dataclass
class SGD:
    lr: float = 0.1

    def step(self, params: Params, grads: Mapping[str, np.ndarray]) -> None:
        _check_finite(grads)
        for name, t in params.items():
            t.data -= self.lr * grads[name]


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Params, grads: Mapping[str, np.ndarray]) -> None:
        _check_finite(grads)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, t in params.items():
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            t.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return SGD(lr)
    if kind == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


# ---------------------------------------------------------------------------
# checkpoints

def dumps_checkpoint(params: Mapping[str, Tensor], meta: Optional[dict] = None) -> str:
    """Serialize parameters as JSON text; float reprs make the round trip exact."""
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
                   for name, t in params.items()},
    }
    return json.dumps(record, sort_keys=True)


def save_checkpoint(path, params: Mapping[str, Tensor], meta: Optional[dict] = None) -> None:
    Path(path).write_text(dumps_checkpoint(params, meta) + "\n", encoding="utf-8")


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], dict]:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {record.get('version')}")
    arrays = {name: np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
              for name, entry in record["params"].items()}
    return arrays, record["meta"]


def assign(params: Params, arrays: Mapping[str, np.ndarray]) -> None:
    missing = set(params) - set(arrays)
    if missing:
        raise KeyError(f"checkpoint lacks parameters: {sorted(missing)}")
    for name, t in params.items():
        if arrays[name].shape != t.shape:
            raise ValueError(f"parameter {name!r}: checkpoint shape {arrays[name].shape} != {t.shape}")
        t.data = arrays[name].copy()
