"""Acceptance suite: one test group per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (or ``python tests/test_acceptance.py``);
a per-criterion PASS/FAIL summary is printed at the end of the session.
The training experiments (criteria 6-8) take roughly half an hour on one CPU core.
"""
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from mentioncoref import autodiff as ad
from mentioncoref import coref as cr
from mentioncoref import harness as hs
from mentioncoref import metrics
from mentioncoref.corpus import GenConfig, PartialPolicy, partialize, synth_generate
from mentioncoref.gradcheck import model_grad_checks
from mentioncoref.objectives import LossConfig, multitask_combine, span_loss, tagger_loss
from mentioncoref.pipeline import ModelConfig
from mentioncoref.tagger import Tagger
from mentioncoref.tags import decode_tags, encode_mentions, validate

from oracles import (all_laminar_sets, b3_oracle, ceaf_phi4_oracle, muc_oracle, prf, random_clustering,
                     random_laminar)

SEEDS = (0, 1, 2)
CURVE_TAUS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)

# synthetic benchmark shared by criteria 6 and 7
BENCH_GEN = GenConfig(n_docs=250, n_heads=8)
BENCH_POLICY = PartialPolicy(drop_singletons=True, drop_rate=0.3, seed=1)
BENCH_MODEL = dict(d_emb=32, d_hidden=32, d_span=32, d_ffnn=32, d_coref=32)
BENCH_TRAIN = dict(epochs=15, lr=0.01, lr_schedule="linear", select_by_dev=False)


@pytest.fixture(scope="module")
def benchmark():
    docs = synth_generate(BENCH_GEN, seed=1)
    partial, full = partialize(docs, BENCH_POLICY)
    return partial[:200], full[200:]


def bench_config(seed, model="span", multitask=False, **loss):
    return hs.RunConfig(seed=seed, model=ModelConfig(model=model, multitask=multitask, **BENCH_MODEL),
                        loss=LossConfig(**loss), **BENCH_TRAIN)


# ---------------------------------------------------------------------------
# 1. gradient integrity

def test_criterion_1_gradient_integrity(record_property):
    t0 = time.perf_counter()
    checks = model_grad_checks(seed=0)
    elapsed = time.perf_counter() - t0
    worst = {name: max(errs.values()) for name, errs in checks.items()}
    record_property("detail", f"worst rel err {max(worst.values()):.1e} over {len(worst)} models, {elapsed:.0f}s")
    assert {"tagger", "span", "span+size", "span+attention", "coref_head", "multitask_combiner"} <= set(worst)
    assert all(e < 1e-3 for e in worst.values()), worst
    assert elapsed < 60


# ---------------------------------------------------------------------------
# 2. tag grammar round trip

def test_criterion_2_tag_round_trip(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    for _ in range(1000):
        M = int(rng.integers(1, 13))
        S = random_laminar(rng, M, 4)
        tags = encode_mentions(S, M, max_depth=4)
        assert decode_tags(tags, M=M, max_depth=4) == S
    decoded = 0
    for seed in range(40):
        model = Tagger(vocab_size=9, d_emb=4, d_hidden=4, d_sym=3, max_depth=2, seed=seed)
        for t in model.params.values():
            t.data += rng.normal(scale=0.8, size=t.shape)
        for beam in (1, 3):
            tokens = rng.integers(1, 9, size=int(rng.integers(1, 9)))
            res = model.beam_decode(tokens, beam=beam)
            assert validate(res.tags, len(tokens), 2).ok
            decoded += 1
    elapsed = time.perf_counter() - t0
    record_property("detail", f"1000 sets, {decoded} beam outputs valid, {elapsed:.1f}s")
    assert elapsed < 10


# ---------------------------------------------------------------------------
# 3. beam search against exhaustive enumeration

def test_criterion_3_beam_oracle(record_property):
    t0 = time.perf_counter()
    agree = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        M = int(rng.integers(1, 5))
        model = Tagger(vocab_size=6, d_emb=4, d_hidden=4, d_sym=3, max_depth=2, seed=seed)
        for t in model.params.values():
            t.data += rng.normal(scale=0.6, size=t.shape)
        tokens = rng.integers(1, 6, size=M)
        scored = [(model.sequence_log_prob(tokens, tags), tags) for tags in
                  (encode_mentions(S, M, 2) for S in all_laminar_sets(M, 2))]
        best = max(scored, key=lambda x: x[0])[1]
        agree += model.beam_decode(tokens, beam=64).tags.symbols == best.symbols
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{agree}/100 agree, {elapsed:.1f}s")
    assert agree == 100
    assert elapsed < 60


# ---------------------------------------------------------------------------
# 4. loss-mode identities

def test_criterion_4_loss_identities(record_property):
    worst = 0.0
    for seed in range(50):
        r = np.random.default_rng(seed)
        M = int(r.integers(2, 9))
        gold = encode_mentions({(0, M - 1), (1, 1)} if r.random() < 0.5 else {(1, 1)}, M)
        lp = ad.log_softmax(ad.param(r.normal(size=(len(gold), 4)), "l"), axis=1)
        z = ad.param(r.normal(size=25), "z")
        y = (r.random(25) < 0.3).astype(float)
        base_t = tagger_loss(lp, gold, LossConfig()).data
        base_s = span_loss(z, y, LossConfig()).data
        for cfg in (LossConfig(mode="weighted", w=1.0), LossConfig(mode="soft", rho=0.0)):
            worst = max(worst, abs(tagger_loss(lp, gold, cfg).data - base_t), abs(span_loss(z, y, cfg).data - base_s))
        w = float(r.uniform(0.01, 0.99))
        g_plain = ad.backward(span_loss(z, y, LossConfig()), {"z": z})["z"]
        g_w = ad.backward(span_loss(z, y, LossConfig(mode="weighted", w=w)), {"z": z})["z"]
        np.testing.assert_allclose(g_w[y == 0], w * g_plain[y == 0], rtol=1e-13, atol=0)
        np.testing.assert_array_equal(g_w[y == 1], g_plain[y == 1])
    assert worst <= 1e-12
    gaps = []
    for rho in (0.05, 0.1, 0.3):
        cfg = LossConfig(mode="soft", rho=rho)
        res = minimize_scalar(lambda x: float(span_loss(ad.const(np.array([x])), np.array([0.0]), cfg).data),
                              bracket=(-1.0, 0.0), method="golden", tol=1e-10)
        gaps.append(abs(ad.sigmoid_np(res.x) - rho))
    record_property("detail", f"identity gap {worst:.1e}, argmin gap {max(gaps):.1e}")
    assert max(gaps) < 1e-6


# ---------------------------------------------------------------------------
# 5. coreference metrics

def test_criterion_5_metric_oracles(record_property):
    t0 = time.perf_counter()
    gold, pred = [{"a", "b", "c"}], [{"a", "b"}, {"c"}]
    assert abs(metrics.muc(gold, pred).f1 - 2 / 3) < 1e-15
    assert abs(metrics.b_cubed(gold, pred).f1 - 5 / 7) < 1e-15
    mentions = list("abcdefgh")
    worst = 0.0
    for seed in range(200):
        r = np.random.default_rng(seed)
        n = int(r.integers(1, 9))
        g, p = random_clustering(r, mentions[:n], 5), random_clustering(r, mentions[:n], 5)
        for ours, oracle in ((metrics.muc, muc_oracle), (metrics.b_cubed, b3_oracle),
                             (metrics.ceaf_phi4, ceaf_phi4_oracle)):
            got, (rec, prec) = ours(g, p), oracle(g, p)
            worst = max(worst, abs(got.recall - rec), abs(got.precision - prec), abs(got.f1 - prf(rec, prec)))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"max deviation {worst:.1e} on 200 clusterings, {elapsed:.1f}s")
    assert worst < 1e-12
    assert elapsed < 30


# ---------------------------------------------------------------------------
# 6. partial-annotation directional reproduction

@pytest.fixture(scope="module")
def span_runs(benchmark):
    train_docs, eval_docs = benchmark
    out = {}
    for mode, kw in (("plain", {}), ("soft", {"mode": "soft", "rho": 0.1})):
        curves = []
        for seed in SEEDS:
            model = hs.train(bench_config(seed, **kw), train_docs).model
            curves.append(hs.threshold_curve(model, eval_docs, CURVE_TAUS))
        out[mode] = curves
    return out


@pytest.fixture(scope="module")
def tagger_runs(benchmark):
    train_docs, eval_docs = benchmark
    out = {}
    for mode, kw in (("plain", {}), ("weighted", {"mode": "weighted", "w": 0.01})):
        out[mode] = [hs.evaluate(hs.train(bench_config(seed, "tagger", **kw), train_docs).model,
                                 eval_docs)["mention"] for seed in SEEDS]
    return out


def _mean_curve(curves, key):
    return np.mean([[row[key] for row in c] for c in curves], axis=0)


def test_criterion_6_span_soft_targets(span_runs, record_property):
    at = CURVE_TAUS.index(0.5)
    rec = {m: _mean_curve(c, "recall") for m, c in span_runs.items()}
    f1 = {m: _mean_curve(c, "f1") for m, c in span_runs.items()}
    prec = {m: _mean_curve(c, "precision") for m, c in span_runs.items()}
    wins = int(np.sum(rec["soft"] >= rec["plain"]))
    record_property("detail", "span R@0.5 plain {:.3f} soft {:.3f}, P {:.3f}/{:.3f}, F1 {:.3f}/{:.3f}, "
                    "curve >= at {}/7".format(rec["plain"][at], rec["soft"][at], prec["plain"][at],
                                              prec["soft"][at], f1["plain"][at], f1["soft"][at], wins))
    print("tau   R_plain R_soft")
    for k, tau in enumerate(CURVE_TAUS):
        print(f"{tau:.1f}   {rec['plain'][k]:.3f}   {rec['soft'][k]:.3f}")
    assert rec["soft"][at] > rec["plain"][at]
    assert wins >= 6
    assert f1["soft"][at] >= f1["plain"][at] - 0.02


def test_criterion_6_tagger_weighted_loss(tagger_runs, record_property):
    mean = {m: (np.mean([r.recall for r in runs]), np.mean([r.precision for r in runs]),
                np.mean([r.f1 for r in runs])) for m, runs in tagger_runs.items()}
    record_property("detail", "tagger R plain {:.3f} weighted {:.3f}, P {:.3f}/{:.3f}, F1 {:.3f}/{:.3f}".format(
        mean["plain"][0], mean["weighted"][0], mean["plain"][1], mean["weighted"][1],
        mean["plain"][2], mean["weighted"][2]))
    assert mean["weighted"][0] > mean["plain"][0]
    assert mean["weighted"][2] >= mean["plain"][2] - 0.02


# ---------------------------------------------------------------------------
# 7. multitask span + coreference

@pytest.fixture(scope="module")
def multitask_runs(benchmark):
    train_docs, eval_docs = benchmark
    out = {}
    for mode, kw in (("plain", {}), ("soft", {"mode": "soft", "rho": 0.1})):
        out[mode] = []
        for seed in SEEDS:
            result = hs.train(bench_config(seed, multitask=True, **kw), train_docs)
            out[mode].append((result, hs.evaluate(result.model, eval_docs)))
    return out


def test_criterion_7_combined_loss_identity(multitask_runs):
    for runs in multitask_runs.values():
        for result, _ in runs:
            for row in result.steps:
                parts = (ad.const(row[k]) for k in ("detector_loss", "coref_loss", "s_md", "s_cr"))
                assert row["combined_loss"] == pytest.approx(float(multitask_combine(*parts).data),
                                                             rel=1e-12, abs=1e-12)


def test_criterion_7_score_decomposition(multitask_runs, benchmark):
    result = multitask_runs["soft"][0][0]
    model = result.model
    doc = benchmark[1][0]
    X, H = model.detector.encode(model.vocab.encode(doc.sentences[0]))
    starts, ends = np.array([0, 1, 0, 2]), np.array([1, 2, 0, 3])
    out = model.detector.forward(None, starts, ends, encoded=(X, H))
    s_m = cr.s_m_span(model.params["coref.v"], ad.sigmoid(out.logits))
    scores = model.coref.pair_scores(out.reprs, s_m)
    mention_part = s_m.data[scores.k] + s_m.data[scores.a]
    # bitwise in the order the score is assembled; the rearranged difference
    # can only differ by rounding of the final addition
    assert np.array_equal(scores.s.data, scores.s_c.data + mention_part)
    np.testing.assert_allclose(scores.s.data - scores.s_c.data, mention_part, rtol=0, atol=1e-12)


def test_criterion_7_coref_direction(multitask_runs, record_property):
    avg = {m: float(np.mean([rep["conll_avg"] for _, rep in runs])) for m, runs in multitask_runs.items()}
    record_property("detail", f"coref avg F1 plain {avg['plain']:.3f} soft {avg['soft']:.3f}")
    assert avg["soft"] >= avg["plain"]


# ---------------------------------------------------------------------------
# 8. overfit sanity

@pytest.mark.parametrize("model", ["span", "tagger"])
def test_criterion_8_overfit(model, record_property):
    docs = synth_generate(GenConfig(n_docs=3), seed=8)
    cfg = hs.RunConfig(seed=0, model=ModelConfig(model=model, d_emb=32, d_hidden=32, d_span=32, d_ffnn=32),
                       epochs=200, lr=0.01)
    result = hs.train(cfg, docs, docs)
    best = max(r["dev_f1"] for r in result.log)
    reached = [r["epoch"] for r in result.log if r["dev_f1"] >= 0.99]
    record_property("detail", f"{model} train F1 {best:.3f}" + (f" first at epoch {reached[0]}" if reached else ""))
    assert best >= 0.99


# ---------------------------------------------------------------------------
# 9. determinism

@pytest.mark.parametrize("model", ["span", "tagger"])
def test_criterion_9_determinism(tmp_path, model, record_property):
    docs = synth_generate(GenConfig(n_docs=6), seed=9)
    partial, full = partialize(docs, PartialPolicy(drop_rate=0.3, seed=9))
    cfg = hs.RunConfig(seed=4, model=ModelConfig(model=model, multitask=True, d_emb=8, d_hidden=8, d_span=8,
                                                 d_ffnn=8, d_coref=8, d_sym=4), epochs=3, lr=0.01)
    dirs = [hs.write_run(tmp_path / str(k), hs.train(cfg, partial[:4], full[4:]), cfg) for k in range(2)]
    for name in ("checkpoint.json", "log.tsv", "steps.tsv", "config.json"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name
    record_property("detail", f"{model}: checkpoint and logs identical")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
