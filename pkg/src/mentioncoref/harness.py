"""Training, evaluation and threshold sweeps."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import metrics
from . import nn
from .corpus import Document, Vocabulary
from .objectives import LossConfig
from .pipeline import DocumentPrediction, MentionModel, ModelConfig

log = logging.getLogger(__name__)

DEFAULT_TAUS = tuple(round(0.1 * k, 1) for k in range(1, 10))
LOG_COLUMNS = ("epoch", "detector_loss", "coref_loss", "combined_loss", "s_md", "s_cr",
               "dev_recall", "dev_precision", "dev_f1", "gold_conditioned_pass", "predicted_pass")
STEP_COLUMNS = ("epoch", "step", "doc_id", "detector_loss", "coref_loss", "s_md", "s_cr", "combined_loss")


class TrainingDiverged(RuntimeError):
    pass


class VocabularyMismatch(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: str = "adam"
    lr: float = 1e-3
    # "constant", or "linear": decay to lr * lr_floor over the run
    lr_schedule: str = "constant"
    lr_floor: float = 0.05
    epochs: int = 30
    select_by_dev: bool = True
    train_path: Optional[str] = None
    dev_path: Optional[str] = None
    eval_path: Optional[str] = None

    def __post_init__(self):
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError(f"lr_schedule must be 'constant' or 'linear', got {self.lr_schedule!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "constant" or self.epochs == 1:
            return self.lr
        frac = (epoch - 1) / (self.epochs - 1)
        return self.lr * (1.0 - (1.0 - self.lr_floor) * frac)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "seed" not in d:
            raise ValueError("run config needs a seed")
        d["model"] = ModelConfig(**d.get("model", {}))
        d["loss"] = LossConfig(**d.get("loss", {}))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def check_paths(self) -> None:
        for name in ("train_path", "dev_path", "eval_path"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{name}: {p} does not exist")


@dataclass
class TrainResult:
    model: MentionModel
    log: List[dict]
    steps: List[dict]
    selected_epoch: int

    def log_tsv(self) -> str:
        return _tsv(LOG_COLUMNS, self.log)

    def steps_tsv(self) -> str:
        return _tsv(STEP_COLUMNS, self.steps)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _tsv(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def snapshot(model: MentionModel) -> Dict[str, np.ndarray]:
    return {k: t.data.copy() for k, t in model.params.items()}


def train(cfg: RunConfig, train_docs: Sequence[Document], dev_docs: Optional[Sequence[Document]] = None,
          vocab: Optional[Vocabulary] = None) -> TrainResult:
    """Train per document with the configured optimizer.

    Deterministic for a fixed config and seed. With ``dev_docs`` the
    parameters of the epoch with the best dev mention F1 are kept.
    """
    vocab = vocab or Vocabulary.from_corpus(train_docs)
    model = MentionModel(cfg.model, vocab, cfg.seed)
    opt = nn.make_optimizer(cfg.optimizer, cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    log_rows, step_rows = [], []
    best_f1, best_epoch, best_params = -1.0, 0, snapshot(model)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        sums: Dict[str, float] = {}
        opt.lr = cfg.lr_at(epoch)
        order = rng.permutation(len(train_docs))
        for k in order:
            doc = train_docs[k]
            loss, parts = model.document_loss(doc, cfg.loss)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step} ({doc.doc_id})")
            grads = ad.backward(loss, model.params)
            try:
                opt.step(model.params, grads)
            except nn.NonFiniteGradient as e:
                raise TrainingDiverged(f"epoch {epoch}, step {step}: {e}") from None
            step += 1
            step_rows.append({"epoch": epoch, "step": step, "doc_id": doc.doc_id, **parts})
            for key, v in parts.items():
                sums[key] = sums.get(key, 0.0) + v
        n = max(len(train_docs), 1)
        row = {"epoch": epoch, **{k: v / n for k, v in sums.items() if k != "n_candidates"}}
        if model.coref is not None:
            row.update(gold_conditioned_pass=1, predicted_pass=1)
        if dev_docs is not None:
            prf = evaluate(model, dev_docs, cfg.loss.tau, cfg.loss.beam)["mention"]
            row.update(dev_recall=prf.recall, dev_precision=prf.precision, dev_f1=prf.f1)
            if cfg.select_by_dev and prf.f1 > best_f1:
                best_f1, best_epoch, best_params = prf.f1, epoch, snapshot(model)
        log.info("epoch %d %s", epoch, {k: round(v, 4) if isinstance(v, float) else v for k, v in row.items()})
        log_rows.append(row)
    if dev_docs is None or not cfg.select_by_dev:
        best_epoch = cfg.epochs
    else:
        nn.assign(model.params, best_params)
    return TrainResult(model, log_rows, step_rows, best_epoch)


# ---------------------------------------------------------------------------
# evaluation

def gold_mentions(docs: Sequence[Document]):
    return {(d.doc_id, *m) for d in docs for m in d.mentions}


def gold_clusters(docs: Sequence[Document]):
    return [[(d.doc_id, *m) for m in c] for d in docs for c in d.cluster_spans(2)]


def predict_corpus(model: MentionModel, docs: Sequence[Document], tau: float = 0.5,
                   beam: int = 4) -> List[DocumentPrediction]:
    return [model.predict(d, tau, beam) for d in docs]


def check_vocabulary(model: MentionModel, docs: Sequence[Document], max_oov: float = 0.5) -> None:
    rate = model.vocab.oov_rate(docs)
    if rate > max_oov:
        raise VocabularyMismatch(f"{rate:.0%} of corpus tokens are unknown to the model vocabulary")


def evaluate(model: MentionModel, docs: Sequence[Document], tau: float = 0.5, beam: int = 4,
             predictions: Optional[List[DocumentPrediction]] = None) -> dict:
    """Mention P/R/F1 against ``docs`` and, for multitask models, coreference scores."""
    check_vocabulary(model, docs)
    preds = predictions if predictions is not None else predict_corpus(model, docs, tau, beam)
    predicted = {(d.doc_id, *m) for d, p in zip(docs, preds) for m in p.mentions}
    report = {"mention": metrics.mention_prf(predicted, gold_mentions(docs))}
    if model.coref is not None:
        pred_clusters = [[(d.doc_id, *m) for m in c] for d, p in zip(docs, preds) for c in p.clusters]
        report.update(metrics.coref_report(gold_clusters(docs), metrics.drop_singletons(pred_clusters)))
    return report


def threshold_curve(model: MentionModel, docs: Sequence[Document], taus=DEFAULT_TAUS) -> List[dict]:
    """Mention P/R/F1 at each threshold from one scoring pass (span model)."""
    if model.cfg.model != "span":
        raise ValueError("threshold sweeps need the span model")
    check_vocabulary(model, docs)
    gold = gold_mentions(docs)
    probs = [(d.doc_id, k, p) for d in docs for k, p in model.predict(d, 1.0).span_probs.items()]
    rows = []
    for tau in taus:
        predicted = {(doc_id, *k) for doc_id, k, p in probs if p > tau}
        prf = metrics.mention_prf(predicted, gold)
        rows.append({"tau": tau, "recall": prf.recall, "precision": prf.precision, "f1": prf.f1})
    return rows


def score_dump(model: MentionModel, docs: Sequence[Document]) -> str:
    """TSV of every scored span: doc_id, sent_id, i, j, probability, label."""
    rows = []
    for d in docs:
        gold = set(d.mentions)
        for (s, i, j), p in sorted(model.predict(d, 1.0).span_probs.items()):
            rows.append({"doc_id": d.doc_id, "sent_id": s, "i": i, "j": j, "probability": p,
                         "label": int((s, i, j) in gold)})
    return _tsv(("doc_id", "sent_id", "i", "j", "probability", "label"), rows)


def report_text(report: dict) -> str:
    lines = [f"{'metric':<10} {'Rec.':>7} {'Prec.':>7} {'F1':>7}"]
    for name in ("mention", "muc", "b_cubed", "ceaf_phi4"):
        if name in report:
            r = report[name]
            lines.append(f"{name:<10} {100 * r.recall:7.2f} {100 * r.precision:7.2f} {100 * r.f1:7.2f}")
    if "conll_avg" in report:
        lines.append(f"{'avg F1':<10} {'':>7} {'':>7} {100 * report['conll_avg']:7.2f}")
    return "\n".join(lines)


def report_keyvalue(report: dict) -> str:
    out = []
    for name, v in report.items():
        if isinstance(v, metrics.PRF):
            out += [f"{name}.recall={v.recall!r}", f"{name}.precision={v.precision!r}", f"{name}.f1={v.f1!r}"]
        else:
            out.append(f"{name}={v!r}")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# checkpoints

def save_model(path, model: MentionModel, cfg: RunConfig, selected_epoch: Optional[int] = None) -> None:
    meta = {"config": cfg.to_dict(), "vocab": model.vocab.itos, "selected_epoch": selected_epoch}
    nn.save_checkpoint(path, model.params, meta)


def load_model(path):
    arrays, meta = nn.load_checkpoint(path)
    cfg = RunConfig.from_dict(meta["config"])
    vocab = Vocabulary(meta["vocab"][1:])
    model = MentionModel(cfg.model, vocab, cfg.seed)
    nn.assign(model.params, arrays)
    return model, cfg


def write_run(out_dir, result: TrainResult, cfg: RunConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "checkpoint.json", result.model, cfg, result.selected_epoch)
    (out / "log.tsv").write_text(result.log_tsv(), encoding="utf-8")
    (out / "steps.tsv").write_text(result.steps_tsv(), encoding="utf-8")
    (out / "config.json").write_text(cfg.dumps() + "\n", encoding="utf-8")
    return out


# ---------------------------------------------------------------------------
# sweeps

SWEEP_COLUMNS = ("mode", "w", "rho", "tau", "recall", "precision", "f1", "avg_f1")

DEFAULT_GRID = (
    {"mode": "plain"},
    {"mode": "weighted", "w": 0.01},
    {"mode": "weighted", "w": 0.3},
    {"mode": "soft", "rho": 0.1},
)


def sweep(base: RunConfig, grid: Sequence[dict], train_docs: Sequence[Document],
          eval_docs: Sequence[Document], taus: Sequence[float] = DEFAULT_TAUS,
          dev_docs: Optional[Sequence[Document]] = None) -> List[dict]:
    """Train once per loss setting, then evaluate at each threshold.

    The tagger has no threshold; its rows carry tau = nan and use the
    one-best output.
    """
    if not grid:
        raise ValueError("empty sweep grid")
    rows = []
    for point in grid:
        loss = LossConfig(mode=point.get("mode", "plain"), w=point.get("w"), rho=point.get("rho"),
                          tau=base.loss.tau, beam=base.loss.beam)
        cfg = RunConfig(**{**asdict(base), "model": base.model, "loss": loss})
        result = train(cfg, train_docs, dev_docs)
        point_taus = taus if cfg.model.model == "span" else (math.nan,)
        for tau in point_taus:
            rep = evaluate(result.model, eval_docs, 0.5 if math.isnan(tau) else tau, cfg.loss.beam)
            m = rep["mention"]
            rows.append({"mode": loss.mode, "w": loss.w if loss.w is not None else math.nan,
                         "rho": loss.rho if loss.rho is not None else math.nan, "tau": tau,
                         "recall": m.recall, "precision": m.precision, "f1": m.f1,
                         "avg_f1": rep.get("conll_avg", math.nan)})
    return rows


def sweep_tsv(rows: Sequence[dict]) -> str:
    return _tsv(SWEEP_COLUMNS, rows)
