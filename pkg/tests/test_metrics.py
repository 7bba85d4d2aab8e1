from fractions import Fraction

import numpy as np
import pytest

from mentioncoref import metrics

from oracles import b3_oracle, ceaf_phi4_oracle, muc_oracle, prf, random_clustering

MENTIONS = list("abcdefgh")


def test_worked_example_exact():
    gold, pred = [{"a", "b", "c"}], [{"a", "b"}, {"c"}]
    m = metrics.muc(gold, pred)
    assert (m.recall, m.precision) == (0.5, 1.0)
    assert Fraction(m.f1).limit_denominator(100) == Fraction(2, 3)
    b = metrics.b_cubed(gold, pred)
    assert Fraction(b.recall).limit_denominator(100) == Fraction(5, 9) and b.precision == 1.0
    assert Fraction(b.f1).limit_denominator(100) == Fraction(5, 7)
    assert abs(m.f1 - 2 / 3) < 1e-15 and abs(b.f1 - 5 / 7) < 1e-15


def test_identical_clusterings_score_one():
    c = [{"a", "b"}, {"c", "d", "e"}]
    rep = metrics.coref_report(c, c)
    assert rep["conll_avg"] == 1.0


def test_empty_prediction_scores_zero():
    rep = metrics.coref_report([{"a", "b"}], [])
    assert rep["muc"].f1 == rep["b_cubed"].f1 == rep["ceaf_phi4"].f1 == 0.0


def test_overlapping_clusters_rejected():
    with pytest.raises(ValueError, match="overlap"):
        metrics.muc([{"a", "b"}, {"b", "c"}], [{"a"}])


@pytest.mark.parametrize("seed", range(200))
def test_against_definitions(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(1, 9))
    gold = random_clustering(r, MENTIONS[:n], 5)
    pred = random_clustering(r, MENTIONS[:n], 5)
    for ours, oracle in ((metrics.muc, muc_oracle), (metrics.b_cubed, b3_oracle),
                         (metrics.ceaf_phi4, ceaf_phi4_oracle)):
        got = ours(gold, pred)
        rec, prec = oracle(gold, pred)
        assert got.recall == pytest.approx(rec, abs=1e-12)
        assert got.precision == pytest.approx(prec, abs=1e-12)
        assert got.f1 == pytest.approx(prf(rec, prec), abs=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_ceaf_alignment_at_least_greedy(seed):
    r = np.random.default_rng(seed)
    gold = random_clustering(r, MENTIONS, 5)
    pred = random_clustering(r, MENTIONS, 5)
    sim = metrics.ceaf_similarity_matrix(gold, pred)
    greedy, used_r, used_c = 0.0, set(), set()
    for flat in np.argsort(-sim, axis=None):
        i, j = np.unravel_index(flat, sim.shape)
        if i not in used_r and j not in used_c:
            greedy += sim[i, j]
            used_r.add(i)
            used_c.add(j)
    assert metrics.ceaf_phi4(gold, pred).recall * len(gold) >= greedy - 1e-12


def test_corpus_level_is_union_of_documents():
    d1 = ([{("d1", 1), ("d1", 2)}], [{("d1", 1), ("d1", 2)}])
    d2 = ([{("d2", 1), ("d2", 2), ("d2", 3)}], [{("d2", 1)}, {("d2", 2), ("d2", 3)}])
    rep = metrics.muc(d1[0] + d2[0], d1[1] + d2[1])
    assert rep.recall == pytest.approx((1 + 1) / (1 + 2))


def test_mention_prf():
    p = metrics.mention_prf({1, 2, 3}, {2, 3, 4, 5})
    assert (p.recall, p.precision) == (0.5, pytest.approx(2 / 3))
    assert metrics.mention_prf(set(), {1}).f1 == 0.0


def test_drop_singletons():
    assert metrics.drop_singletons([{"a"}, {"b", "c"}, []]) == [{"b", "c"}]
