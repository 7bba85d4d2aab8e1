import json

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from mentioncoref.corpus import (CorpusError, Document, GenConfig, PartialPolicy, Vocabulary, is_determiner,
                                 load_corpus, partialize, save_corpus, synth_generate)
from mentioncoref.tags import is_laminar, nesting_depth

SMALL = GenConfig(n_docs=30)


@pytest.fixture(scope="module")
def corpus():
    return synth_generate(GenConfig(n_docs=150), seed=3)


def keys(docs):
    return {(d.doc_id, *m) for d in docs for m in d.mentions}


def test_round_trip(tmp_path, corpus):
    path = tmp_path / "c.jsonl"
    save_corpus(corpus[:10], path)
    assert load_corpus(path) == corpus[:10]


def test_empty_corpus_round_trip(tmp_path):
    save_corpus([], tmp_path / "e.jsonl")
    assert load_corpus(tmp_path / "e.jsonl") == []


def test_nested_order_preserved(tmp_path):
    doc = Document("n", [["a", "b", "c"]], [(0, 0, 2), (0, 1, 1), (0, 0, 0)], [[0, 2]])
    save_corpus([doc], tmp_path / "n.jsonl")
    assert load_corpus(tmp_path / "n.jsonl")[0].mentions == doc.mentions


def write_lines(path, records):
    header = {"format": "mentioncoref-corpus", "version": 1}
    path.write_text("\n".join(json.dumps(r) for r in [header] + records) + "\n")


def test_out_of_range_span_names_doc(tmp_path):
    write_lines(tmp_path / "x.jsonl", [{"doc_id": "doc-7", "sentences": [["a"]], "mentions": [[0, 0, 3]],
                                        "clusters": []}])
    with pytest.raises(CorpusError, match="line 2.*doc-7"):
        load_corpus(tmp_path / "x.jsonl")


def test_missing_field_reports_line_and_field(tmp_path):
    good = {"doc_id": "a", "sentences": [["x"]], "mentions": [], "clusters": []}
    write_lines(tmp_path / "x.jsonl", [good, {"doc_id": "b", "sentences": [["x"]], "clusters": []}])
    with pytest.raises(CorpusError, match="line 3: missing field 'mentions'"):
        load_corpus(tmp_path / "x.jsonl")


def test_wrong_version(tmp_path):
    (tmp_path / "v.jsonl").write_text(json.dumps({"format": "mentioncoref-corpus", "version": 9}) + "\n")
    with pytest.raises(CorpusError, match="version"):
        load_corpus(tmp_path / "v.jsonl")


def test_mention_in_two_clusters_rejected():
    doc = Document("d", [["a", "b"]], [(0, 0, 0), (0, 1, 1)], [[0, 1], [1]])
    with pytest.raises(CorpusError):
        doc.validate()


def test_generator_deterministic():
    a, b = synth_generate(SMALL, 5), synth_generate(SMALL, 5)
    assert json.dumps([d.to_json() for d in a]) == json.dumps([d.to_json() for d in b])
    assert synth_generate(SMALL, 6) != a


def test_generator_surface_cues_and_laminarity(corpus):
    for d in corpus:
        for s, i, j in d.mentions:
            assert is_determiner(d.sentences[s][i])
        for s in range(len(d.sentences)):
            spans = d.sentence_spans(s)
            assert is_laminar(spans) and nesting_depth(spans) <= 2


def test_no_nesting_when_q_zero():
    for d in synth_generate(GenConfig(n_docs=40, nesting_q=0.0), 1):
        for s in range(len(d.sentences)):
            assert nesting_depth(d.sentence_spans(s)) <= 1


@pytest.mark.parametrize("cfg", [{"nesting_q": 1.5}, {"max_depth": 1, "nesting_q": 0.2},
                                 {"chain_lengths": (0.5, 0.2)}, {"recurrence": (0.8, 0.2)}])
def test_inconsistent_generator_configs(cfg):
    with pytest.raises(ValueError):
        synth_generate(GenConfig(n_docs=1, **cfg), 0)


def test_partialize_identity():
    docs = synth_generate(SMALL, 2)
    partial, full = partialize(docs, PartialPolicy(drop_singletons=False, drop_rate=0.0))
    assert partial == docs and full == docs


def test_partialize_keeps_only_chains(corpus):
    partial, full = partialize(corpus, PartialPolicy(drop_rate=0.3, seed=4))
    assert keys(partial) <= keys(full)
    assert full == corpus
    for d in partial:
        in_chain = {m for c in d.clusters for m in c}
        assert in_chain == set(range(len(d.mentions)))
        assert all(len(c) >= 2 for c in d.clusters)


def test_partialize_deterministic(corpus):
    pol = PartialPolicy(drop_rate=0.3, seed=9)
    assert partialize(corpus, pol)[0] == partialize(corpus, pol)[0]


def test_drop_rate_within_three_sigma(corpus):
    p = 0.3
    partial, full = partialize(corpus, PartialPolicy(drop_singletons=False, drop_rate=p,
                                                     collapse_broken_chains=False, seed=11))
    n = len(keys(full))
    dropped = n - len(keys(partial))
    assert abs(dropped - n * p) <= 3 * np.sqrt(n * p * (1 - p))


def test_dropped_and_kept_lengths_look_alike(corpus):
    partial, full = partialize(corpus, PartialPolicy(drop_rate=0.3, collapse_broken_chains=False, seed=12))
    chained = {(d.doc_id, *d.mentions[m]) for d in full for c in d.clusters for m in c}
    kept = keys(partial)
    lengths = lambda ks: np.bincount([min(j - i + 1, 6) for _, _, i, j in ks], minlength=7)[1:]
    table = np.array([lengths(kept), lengths(chained - kept)])
    table = table[:, table.sum(axis=0) > 0]
    assert chi2_contingency(table)[1] > 1e-3


def test_vocabulary_unknown_and_oov():
    docs = synth_generate(SMALL, 0)
    v = Vocabulary.from_corpus(docs[:5])
    assert v.encode(["never-seen"]).tolist() == [0]
    assert v.oov_rate(docs[:5]) == 0.0
    assert v.oov_rate([Document("z", [["zz", "yy"]])]) == 1.0
