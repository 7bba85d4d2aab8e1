"""Documents, the corpus file format, a synthetic generator and the
partial-annotation simulator.

Corpus files are UTF-8 JSON lines. The first line is a header
``{"format": "mentioncoref-corpus", "version": 1}``; every following line is
one document with the fields ``doc_id``, ``sentences`` (list of token lists),
``mentions`` (list of ``[sentence, start, end]``, inclusive token indices) and
``clusters`` (list of lists of indices into ``mentions``).
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .tags import is_laminar, nesting_depth

CORPUS_FORMAT = "mentioncoref-corpus"
CORPUS_VERSION = 1
UNK = "<unk>"

SpanKey = Tuple[int, int, int]


class CorpusError(ValueError):
    pass


@dataclass
class Document:
    doc_id: str
    sentences: List[List[str]]
    mentions: List[SpanKey] = field(default_factory=list)
    clusters: List[List[int]] = field(default_factory=list)

    def validate(self) -> None:
        for k, (s, i, j) in enumerate(self.mentions):
            if not 0 <= s < len(self.sentences) or not 0 <= i <= j < len(self.sentences[s]):
                raise CorpusError(f"document {self.doc_id!r}: mention {k} {(s, i, j)} out of range")
        if len(set(self.mentions)) != len(self.mentions):
            raise CorpusError(f"document {self.doc_id!r}: duplicate mention")
        seen = set()
        for c in self.clusters:
            if not c:
                raise CorpusError(f"document {self.doc_id!r}: empty cluster")
            for m in c:
                if not 0 <= m < len(self.mentions):
                    raise CorpusError(f"document {self.doc_id!r}: cluster refers to missing mention {m}")
                if m in seen:
                    raise CorpusError(f"document {self.doc_id!r}: mention {m} in more than one cluster")
                seen.add(m)

    def cluster_ids(self) -> Dict[SpanKey, Optional[int]]:
        """Each mention span mapped to its cluster index (None if unclustered)."""
        out: Dict[SpanKey, Optional[int]] = {tuple(m): None for m in self.mentions}
        for cid, c in enumerate(self.clusters):
            for m in c:
                out[tuple(self.mentions[m])] = cid
        return out

    def sentence_spans(self, s: int) -> List[Tuple[int, int]]:
        return [(i, j) for (t, i, j) in self.mentions if t == s]

    def cluster_spans(self, min_size: int = 2) -> List[List[SpanKey]]:
        return [[tuple(self.mentions[m]) for m in c] for c in self.clusters if len(c) >= min_size]

    def to_json(self) -> dict:
        return {"doc_id": self.doc_id, "sentences": self.sentences,
                "mentions": [list(m) for m in self.mentions], "clusters": self.clusters}


def _document_from_record(rec, lineno: int) -> Document:
    if not isinstance(rec, dict):
        raise CorpusError(f"line {lineno}: record is not an object")
    for name, kind in (("doc_id", str), ("sentences", list), ("mentions", list), ("clusters", list)):
        if name not in rec:
            raise CorpusError(f"line {lineno}: missing field {name!r}")
        if not isinstance(rec[name], kind):
            raise CorpusError(f"line {lineno}: field {name!r} should be {kind.__name__}")
    sentences = rec["sentences"]
    if not all(isinstance(s, list) and all(isinstance(t, str) for t in s) for s in sentences):
        raise CorpusError(f"line {lineno}: field 'sentences' must be lists of strings")
    mentions = []
    for m in rec["mentions"]:
        if not (isinstance(m, list) and len(m) == 3 and all(isinstance(x, int) for x in m)):
            raise CorpusError(f"line {lineno}: field 'mentions' entries must be [sentence, start, end]")
        mentions.append(tuple(m))
    clusters = rec["clusters"]
    if not all(isinstance(c, list) and all(isinstance(x, int) for x in c) for c in clusters):
        raise CorpusError(f"line {lineno}: field 'clusters' must be lists of integers")
    doc = Document(rec["doc_id"], sentences, mentions, [list(c) for c in clusters])
    try:
        doc.validate()
    except CorpusError as e:
        raise CorpusError(f"line {lineno}: {e}") from None
    return doc


def save_corpus(corpus: Sequence[Document], path) -> None:
    lines = [json.dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION})]
    lines += [json.dumps(d.to_json(), ensure_ascii=False) for d in corpus]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(path) -> List[Document]:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise CorpusError(f"{path}: empty file, missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise CorpusError(f"line 1: malformed header ({e.msg})") from None
    if not isinstance(header, dict) or header.get("format") != CORPUS_FORMAT:
        raise CorpusError("line 1: not a corpus file header")
    if header.get("version") != CORPUS_VERSION:
        raise CorpusError(f"line 1: unsupported schema version {header.get('version')}")
    docs = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"line {lineno}: malformed JSON ({e.msg})") from None
        docs.append(_document_from_record(rec, lineno))
    return docs


# ---------------------------------------------------------------------------
# vocabulary

class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: List[str] = [UNK]
        self.stoi: Dict[str, int] = {UNK: 0}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    @classmethod
    def from_corpus(cls, corpus: Sequence[Document]) -> "Vocabulary":
        return cls(t for d in corpus for s in d.sentences for t in s)

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.stoi.get(t, 0) for t in tokens], dtype=np.int64)

    def oov_rate(self, corpus: Sequence[Document]) -> float:
        toks = [t for d in corpus for s in d.sentences for t in s]
        return sum(t not in self.stoi for t in toks) / len(toks) if toks else 0.0


# ---------------------------------------------------------------------------
# synthetic corpus

@dataclass
class GenConfig:
    n_docs: int = 200
    sentences_per_doc: Tuple[int, int] = (3, 5)
    sentence_length: Tuple[int, int] = (6, 14)
    entities_per_doc: Tuple[int, int] = (3, 5)
    # head k recurs (forms a chain) with probability interpolated linearly
    # over this range by head index; a recurring entity is mentioned
    # 2, 3, ... times with these probabilities
    recurrence: Tuple[float, float] = (0.1, 1.0)
    chain_lengths: Tuple[float, ...] = (0.2, 0.3, 0.3, 0.2)
    nesting_q: float = 0.2
    max_depth: int = 2
    adjective_prob: float = 0.4
    n_determiners: int = 4
    n_adjectives: int = 12
    n_heads: int = 40
    n_fillers: int = 30
    doc_prefix: str = "synth"

    def check(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.nesting_q > 0 and self.max_depth < 2:
            raise ValueError("nesting_q > 0 needs max_depth >= 2")
        if not 0.0 <= self.nesting_q <= 1.0:
            raise ValueError("nesting_q must lie in [0, 1]")
        if abs(sum(self.chain_lengths) - 1.0) > 1e-9:
            raise ValueError("chain_lengths must sum to 1")
        lo, hi = self.recurrence
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError("recurrence range must satisfy 0 <= lo <= hi <= 1")
        if self.entities_per_doc[1] > self.n_heads:
            raise ValueError("more entities per document than head tokens")
        lo, hi = self.sentence_length
        if not 3 <= lo <= hi:
            raise ValueError("sentence_length range must satisfy 3 <= lo <= hi")

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        for k in ("sentences_per_doc", "sentence_length", "entities_per_doc", "recurrence", "chain_lengths"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


DETERMINER = "det"
ADJECTIVE = "adj"
HEAD = "head"
FILLER = "w"
OF = "of"
PERIOD = "."


def is_determiner(token: str) -> bool:
    return token.startswith(DETERMINER)


def recurrence_rate(cfg: GenConfig, heads) -> np.ndarray:
    lo, hi = cfg.recurrence
    frac = np.asarray(heads, dtype=float) / max(cfg.n_heads - 1, 1)
    return lo + (hi - lo) * frac


def _mention_tokens(rng, cfg: GenConfig, head: int) -> List[str]:
    toks = [f"{DETERMINER}{rng.integers(cfg.n_determiners)}"]
    if rng.random() < cfg.adjective_prob:
        toks.append(f"{ADJECTIVE}{rng.integers(cfg.n_adjectives)}")
    toks.append(f"{HEAD}{head}")
    return toks


def _generate_document(rng: np.random.Generator, cfg: GenConfig, doc_id: str) -> Document:
    n_ent = int(rng.integers(cfg.entities_per_doc[0], cfg.entities_per_doc[1] + 1))
    heads = rng.choice(cfg.n_heads, size=n_ent, replace=False)
    recurs = rng.random(n_ent) < recurrence_rate(cfg, heads)
    lengths = rng.choice(np.arange(2, len(cfg.chain_lengths) + 2), size=n_ent, p=np.asarray(cfg.chain_lengths))
    counts = np.where(recurs, lengths, 1)
    queue = [e for e in range(n_ent) for _ in range(counts[e])]
    rng.shuffle(queue)
    queue = list(queue)

    sentences: List[List[str]] = []
    mentions: List[Tuple[int, int, int, int]] = []  # (sent, start, end, entity)
    n_sent = int(rng.integers(cfg.sentences_per_doc[0], cfg.sentences_per_doc[1] + 1))

    def realize(sent_idx: int, toks: List[str], depth: int, pos: int = 0) -> None:
        ent = queue.pop(pos)
        start = len(toks)
        toks += _mention_tokens(rng, cfg, int(heads[ent]))
        if depth < cfg.max_depth and rng.random() < cfg.nesting_q:
            # the nested mention belongs to a different entity
            inner = next((k for k, e in enumerate(queue) if e != ent), None)
            if inner is not None:
                toks.append(OF)
                realize(sent_idx, toks, depth + 1, inner)
        mentions.append((sent_idx, start, len(toks) - 1, ent))

    s = 0
    while (s < n_sent or queue) and s < 4 * cfg.sentences_per_doc[1]:
        target = int(rng.integers(cfg.sentence_length[0], cfg.sentence_length[1] + 1))
        toks: List[str] = [f"{FILLER}{rng.integers(cfg.n_fillers)}" for _ in range(rng.integers(0, 2))]
        while len(toks) < target - 1:
            if queue and len(toks) + 3 <= target - 1 and rng.random() < 0.6:
                realize(s, toks, 1)
            toks += [f"{FILLER}{rng.integers(cfg.n_fillers)}" for _ in range(rng.integers(1, 3))]
        toks.append(PERIOD)
        sentences.append(toks)
        s += 1

    mentions.sort(key=lambda m: (m[0], m[1], -m[2]))
    by_entity: Dict[int, List[int]] = {}
    for k, m in enumerate(mentions):
        by_entity.setdefault(m[3], []).append(k)
    clusters = [ks for _, ks in sorted(by_entity.items(), key=lambda kv: kv[1][0]) if len(ks) >= 2]
    return Document(doc_id, sentences, [m[:3] for m in mentions], clusters)


def synth_generate(cfg: GenConfig, seed: int) -> List[Document]:
    """Fully annotated synthetic corpus (singletons included).

    Every mention starts with a determiner token, carries its entity's head
    token, and may nest one mention of another entity after ``of``. Each
    document draws from its own generator spawned from ``seed``.
    """
    cfg.check()
    children = np.random.SeedSequence(seed).spawn(cfg.n_docs)
    docs = []
    for k, ss in enumerate(children):
        doc = _generate_document(np.random.default_rng(ss), cfg, f"{cfg.doc_prefix}-{seed}-{k:04d}")
        for s in range(len(doc.sentences)):
            spans = doc.sentence_spans(s)
            assert is_laminar(spans) and nesting_depth(spans) <= cfg.max_depth
        doc.validate()
        docs.append(doc)
    return docs


# ---------------------------------------------------------------------------
# partial annotation

@dataclass
class PartialPolicy:
    drop_singletons: bool = True
    drop_rate: float = 0.0
    collapse_broken_chains: bool = True
    seed: int = 0


def _partialize_document(doc: Document, policy: PartialPolicy, rng: np.random.Generator) -> Document:
    cid = {m: c for c, ms in enumerate(doc.clusters) for m in ms}
    keep = [k for k in range(len(doc.mentions)) if not (policy.drop_singletons and k not in cid)]
    draws = rng.random(len(keep))
    keep = [k for k, u in zip(keep, draws) if u >= policy.drop_rate]
    kept = set(keep)
    clusters = []
    for c in doc.clusters:
        members = [m for m in c if m in kept]
        if len(members) >= 2:
            clusters.append(members)
        elif len(members) == 1 and policy.collapse_broken_chains:
            kept.discard(members[0])
    order = sorted(kept)
    remap = {old: new for new, old in enumerate(order)}
    return Document(doc.doc_id, copy.deepcopy(doc.sentences), [doc.mentions[k] for k in order],
                    [[remap[m] for m in c] for c in clusters if all(m in remap for m in c)])


def partialize(corpus: Sequence[Document], policy: PartialPolicy) -> Tuple[List[Document], List[Document]]:
    """Simulate chain-only annotation; returns (partial corpus, untouched full corpus)."""
    full = copy.deepcopy(list(corpus))
    children = np.random.SeedSequence(policy.seed).spawn(len(full))
    partial = [_partialize_document(d, policy, np.random.default_rng(ss)) for d, ss in zip(full, children)]
    return partial, full
