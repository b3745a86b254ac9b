import json
import shutil
import subprocess
import sys

import pytest

from permdroid.cli import build_parser, main
from permdroid.corpus import read_corpus
from permdroid.experiments import load_report
from permdroid.model import load_checkpoint
from permdroid.tokenizer import Vocabulary

SMALL = {"model": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_len": 24, "head_hidden": 8},
         "train": {"epochs": 1}}


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def run(*argv):
    return main([str(a) for a in argv])


def test_all_subcommands_registered():
    sub = next(a for a in build_parser()._actions if a.dest == "command")
    assert set(sub.choices) == {"extract", "label", "sample-size", "synth", "vocab", "train", "ablation",
                                "threshold-sweep", "timecv", "report", "snapshot", "sentinels", "diff"}


def test_sample_size(capsys):
    assert run("sample-size", "--population", "inf", "--confidence", "0.95", "--margin", "0.05") == 0
    assert capsys.readouterr().out.strip() == "385"
    assert run("sample-size", "--population", "100", "--confidence", "0.95", "--margin", "0") == 2
    assert "BadMargin" in capsys.readouterr().err


def test_extract(tmp_path, fixture_dir, capsys):
    apks = tmp_path / "apks"
    shutil.copytree(fixture_dir, apks, ignore=shutil.ignore_patterns("*.json"))
    out = tmp_path / "perm.csv"
    assert run("extract", "--apks", apks, "--out", out, "--warnings", tmp_path / "w.jsonl") == 0
    assert json.loads(capsys.readouterr().out)["ok"] == 6
    assert len(read_corpus(out)) == 6


def test_synth_label_vocab_train(tmp_path, cfg, capsys):
    data = tmp_path / "d.csv"
    assert run("synth", "--out", data, "--benign", 30, "--malware", 30, "--flags", "--seed", 1) == 0
    labeled = tmp_path / "l.csv"
    assert run("label", "--in", data, "--out", labeled, "--benign-max", 0, "--malware-min", 8) == 0
    counts = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert counts["benign"] + counts["malware"] + counts["dropped"] == 60
    vocab = tmp_path / "v.json"
    assert run("vocab", "--in", data, "--out", vocab, "--mode", "split", "--min-count", 1) == 0
    assert len(Vocabulary.load(vocab)) > 5
    ckpt = tmp_path / "m.ptc"
    assert run("train", "--data", data, "--vocab", vocab, "--config", cfg, "--out", ckpt,
               "--pooling", "last-hidden", "--freeze-encoder") == 0
    params, mc, tc = load_checkpoint(ckpt)
    assert mc.pooling == "last_hidden_mean" and not mc.fine_tune_encoder and tc.epochs == 1


def test_train_with_pretraining(tmp_path, cfg):
    data = tmp_path / "d.csv"
    run("synth", "--out", data, "--benign", 20, "--malware", 20)
    assert run("train", "--data", data, "--config", cfg, "--out", tmp_path / "m.ptc", "--pretrain-mlm") == 0


def test_ablation_and_report(tmp_path, cfg):
    data = tmp_path / "d.csv"
    run("synth", "--out", data, "--benign", 20, "--malware", 20)
    prefix = tmp_path / "abl"
    assert run("ablation", "--data", data, "--config", cfg, "--folds", 2, "--out", prefix) == 0
    rep = load_report(f"{prefix}.json")
    assert len(rep.cells) == 4
    (tmp_path / "abl.csv").unlink()
    assert run("report", "--in", f"{prefix}.json", "--format", "csv") == 0
    assert (tmp_path / "abl.csv").exists()


def test_threshold_sweep(tmp_path, cfg, capsys):
    pool, ev = tmp_path / "pool.csv", tmp_path / "eval.csv"
    run("synth", "--out", pool, "--benign", 40, "--malware", 40, "--flags", "--seed", 2)
    run("synth", "--out", ev, "--benign", 10, "--malware", 10, "--seed", 3, "--salt", "eval")
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps([[0, 1], {"benign_max": 0, "malware_min": 8}]))
    capsys.readouterr()
    assert run("threshold-sweep", "--flags", pool, "--eval", ev, "--rules", rules, "--config", cfg,
               "--sample-per-class", 10, "--out", tmp_path / "ts") == 0
    assert json.loads(capsys.readouterr().out.splitlines()[-1])["best"] in ("exp1", "exp2")
    assert len(load_report(tmp_path / "ts.json").cells) == 2


def test_timecv(tmp_path, cfg):
    data = tmp_path / "years.csv"
    run("synth", "--out", data, "--drift-years", "2010,2011,2014,2015", "--per-year", 20)
    assert run("timecv", "--data", data, "--train-years", "2010,2011", "--test-years", "2014,2015;2023",
               "--config", cfg, "--out", tmp_path / "tc") == 0
    rep = load_report(tmp_path / "tc.json")
    assert [c.status for c in rep.cells] == ["ok", "ok", "EmptyBucket"]
    assert (tmp_path / "tc.plot.csv").read_text().startswith("series,x,y")


def test_integrity_commands(tmp_path, capsys):
    d = tmp_path / "watch"
    assert run("sentinels", "--dir", d, "--formats", "apk,py,docx,sh,bak", "--count", 2, "--seed", 7) == 0
    assert run("snapshot", "--root", d, "--out", tmp_path / "a.json") == 0
    assert run("diff", "--before", tmp_path / "a.json", "--after", tmp_path / "a.json",
               "--out", tmp_path / "r.json") == 0
    (d / "sentinel_000.sh").write_text("tampered")
    run("snapshot", "--root", d, "--out", tmp_path / "b.json")
    assert run("diff", "--before", tmp_path / "a.json", "--after", tmp_path / "b.json",
               "--out", tmp_path / "r.json") == 1
    assert json.loads((tmp_path / "r.json").read_text())["modified"] == ["sentinel_000.sh"]


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "permdroid.cli", "sample-size", "--population", "123453",
                          "--confidence", "0.99", "--margin", "0.013"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == "9094"
