import json

import pytest

from mentioncoref.cli import main
from mentioncoref.corpus import load_corpus

SMALL = {"seed": 3, "epochs": 1, "lr": 0.01,
         "model": {"d_emb": 8, "d_hidden": 8, "d_sym": 4, "d_span": 8, "d_ffnn": 8, "d_coref": 8, "d_dist": 3}}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    gen = {"n_docs": 6, "sentences_per_doc": [2, 2], "sentence_length": [4, 6]}
    (d / "gen.json").write_text(json.dumps(gen))
    (d / "run.json").write_text(json.dumps(SMALL))
    assert main(["gen-data", "--out", str(d / "full.jsonl"), "--seed", "1", "--config", str(d / "gen.json")]) == 0
    assert main(["partialize", str(d / "full.jsonl"), "--out", str(d / "part.jsonl"), "--drop-rate", "0.3",
                 "--seed", "2"]) == 0
    return d


def test_generated_files(work):
    full, part = load_corpus(work / "full.jsonl"), load_corpus(work / "part.jsonl")
    assert len(full) == len(part) == 6
    assert sum(len(d.mentions) for d in part) <= sum(len(d.mentions) for d in full)


def test_train_eval_decode_span(work, capsys):
    out = work / "span"
    assert main(["train", "--train", str(work / "part.jsonl"), "--dev", str(work / "full.jsonl"),
                 "--out", str(out), "--config", str(work / "run.json"), "--loss-mode", "soft", "--rho", "0.1"]) == 0
    resolved = json.loads((out / "config.json").read_text())
    assert resolved["loss"]["mode"] == "soft" and resolved["loss"]["rho"] == 0.1 and resolved["seed"] == 3
    assert (out / "log.tsv").read_text().splitlines()[0].startswith("epoch\t")
    capsys.readouterr()
    assert main(["eval", str(out / "checkpoint.json"), str(work / "full.jsonl"), "--tau", "0.3",
                 "--report", str(work / "r.txt"), "--score-dump", str(work / "s.tsv"), "--tau-curve"]) == 0
    printed = capsys.readouterr().out
    assert "mention" in printed and printed.count("tau=") == 9
    assert "mention.f1=" in (work / "r.txt").read_text()
    assert (work / "s.tsv").read_text().startswith("doc_id\tsent_id\ti\tj\tprobability\tlabel")
    assert main(["decode", str(out / "checkpoint.json"), str(work / "full.jsonl")]) == 0
    lines = capsys.readouterr().out.splitlines()
    n_sent = sum(len(d.sentences) for d in load_corpus(work / "full.jsonl"))
    assert len(lines) == n_sent and all(len(l.split("\t")) == 4 for l in lines)


def test_train_decode_tagger_multitask(work, capsys):
    out = work / "tagger"
    assert main(["train", "--train", str(work / "part.jsonl"), "--out", str(out), "--config",
                 str(work / "run.json"), "--model", "tagger", "--multitask", "--loss-mode", "weighted",
                 "--w", "0.01"]) == 0
    capsys.readouterr()
    assert main(["eval", str(out / "checkpoint.json"), str(work / "full.jsonl"), "--beam", "2"]) == 0
    assert "muc" in capsys.readouterr().out
    assert main(["decode", str(out / "checkpoint.json"), str(work / "full.jsonl")]) == 0
    first = capsys.readouterr().out.splitlines()[0].split("\t")
    assert set(first[2].split()) <= {"[", "]", "+", "-"}


def test_sweep_one_point(work):
    (work / "grid.json").write_text(json.dumps([{"mode": "weighted", "w": 0.3}]))
    assert main(["sweep", "--train", str(work / "part.jsonl"), "--eval", str(work / "full.jsonl"),
                 "--grid", str(work / "grid.json"), "--config", str(work / "run.json"), "--model", "tagger",
                 "--out", str(work / "sweep.tsv")]) == 0
    rows = (work / "sweep.tsv").read_text().splitlines()
    assert rows[0] == "mode\tw\trho\ttau\trecall\tprecision\tf1\tavg_f1" and len(rows) == 2


def test_seed_required(work):
    with pytest.raises(SystemExit):
        main(["train", "--train", str(work / "part.jsonl"), "--out", str(work / "x")])


def test_missing_corpus_is_an_error(work, capsys):
    assert main(["eval", str(work / "nope.json"), str(work / "full.jsonl")]) == 2
    assert "error" in capsys.readouterr().err


def test_inconsistent_loss_flags(work, capsys):
    assert main(["train", "--train", str(work / "part.jsonl"), "--out", str(work / "y"), "--seed", "0",
                 "--loss-mode", "weighted"]) == 2
