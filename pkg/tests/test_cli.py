import json
import subprocess
import sys

import pytest
from conftest import TINY_SYNTH

from discoadapt.cli import (
    EXIT_DATA,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    UsageError,
    main,
    parse_fractions,
    resolve_config,
)
from discoadapt.evaluation import read_csv_table

SMALL = ["--preset", "desk", "--set", "hidden_size=4", "--set", "disc_hidden=[6,6]",
         "--set", "recon_hidden=[6,3,6]", "--set", "batch_size=16"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    sets = [f"--set={k}={json.dumps(v)}" for k, v in TINY_SYNTH.items()]
    assert main(["synth", "--seed", "7", "--out", str(out), *sets]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def pretrained(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "pretrain"
    assert main(["pretrain", "--corpus", str(corpus), "--out", str(out), "--epochs", "2", *SMALL]) == EXIT_OK
    return out


def test_synth_is_byte_identical_across_runs(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--seed", "7", "--out", str(tmp_path / name)]) == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert {"source-train.jsonl", "target-test.jsonl", "embeddings.txt", "config.json"} <= set(files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DISCOADAPT_OUTPUT_ROOT", str(tmp_path))
    sets = [f"--set={k}={json.dumps(v)}" for k, v in TINY_SYNTH.items()]
    assert main(["synth", *sets]) == EXIT_OK
    assert (tmp_path / "synth" / "target-dev.jsonl").exists()


def test_pretrain_outputs(pretrained):
    names = {p.name for p in pretrained.iterdir()}
    assert {"config.json", "model.ckpt", "history.json", "f1.csv", "summary.txt"} <= names
    cfg = json.loads((pretrained / "config.json").read_text())
    assert cfg["command"] == "pretrain" and cfg["train"]["hidden_size"] == 4
    assert cfg["train"]["pretrain_epochs"] == 2 and cfg["train"]["lr_pretrain"] == 1e-3


def test_adapt_flags_and_eval(corpus, pretrained, tmp_path):
    out = tmp_path / "adapt"
    code = main(["adapt", "--corpus", str(corpus), "--checkpoint", str(pretrained / "model.ckpt"),
                 "--out", str(out), "--epochs", "1", "--no-spectral-norm", "--no-label-smoothing",
                 "--no-reconstruction", "--labeled-subset", "10", *SMALL])
    assert code == EXIT_OK
    train = json.loads((out / "config.json").read_text())["train"]
    assert train["spectral_norm"] is False and train["label_smoothing"] is False
    assert train["reconstruction"] is False and train["supervised_component"] is True
    assert train["adapt_epochs"] == 1
    history = json.loads((out / "history.json").read_text())
    assert "recon" not in history[0] and "sup" in history[0]
    assert (out / "adapt_state.ckpt").exists()

    ev = tmp_path / "eval"
    assert main(["eval", "--corpus", str(corpus), "--checkpoint", str(out / "model.ckpt"),
                 "--out", str(ev)]) == EXIT_OK
    _, rows = read_csv_table(ev / "f1.csv")
    _, adapt_rows = read_csv_table(out / "f1.csv")
    assert rows[0][1:6] == adapt_rows[0][1:6]


def test_adapt_rejects_non_pretrain_checkpoint(corpus, pretrained, tmp_path):
    out = tmp_path / "a1"
    args = ["--corpus", str(corpus), "--epochs", "1", "--no-reconstruction", *SMALL]
    assert main(["adapt", *args, "--checkpoint", str(pretrained / "model.ckpt"), "--out", str(out)]) == EXIT_OK
    assert main(["adapt", *args, "--checkpoint", str(out / "model.ckpt"), "--out", str(tmp_path / "a2")]) \
        == EXIT_USAGE


def test_labeled_subset_from_file(corpus, pretrained, tmp_path):
    subset = tmp_path / "subset.jsonl"
    subset.write_text("".join(line for line in list(open(corpus / "target-dev.jsonl"))[:8]))
    out = tmp_path / "a"
    assert main(["adapt", "--corpus", str(corpus), "--checkpoint", str(pretrained / "model.ckpt"),
                 "--out", str(out), "--epochs", "1", "--labeled-subset", str(subset), *SMALL]) == EXIT_OK


def test_dann_command(corpus, tmp_path):
    out = tmp_path / "dann"
    assert main(["dann", "--corpus", str(corpus), "--out", str(out), "--epochs", "1", "--lam", "0.5",
                 *SMALL]) == EXIT_OK
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["dann"]["lam"] == 0.5 and cfg["dann"]["epochs"] == 1


def test_sweep_command(corpus, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--corpus", str(corpus), "--out", str(out), "--fractions", "0.5,1.0",
                 "--repeats", "1", "--set", "pretrain_epochs=1", "--set", "adapt_epochs=1", *SMALL]) == EXIT_OK
    _, rows = read_csv_table(out / "sweep.csv")
    assert len(rows) == 2 * 3
    assert {r[1] for r in rows} == {"48", "96"}
    assert "<polyline" in (out / "sweep.svg").read_text()


def test_config_file_with_overrides(corpus, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train": {"seed": 3, "hidden_size": 4}, "pretrain_epochs": 5}))
    out = tmp_path / "p"
    assert main(["pretrain", "--config", str(cfg), "--corpus", str(corpus), "--out", str(out),
                 "--set", "pretrain_epochs=1", "--preset", "desk", "--set", "batch_size=16"]) == EXIT_OK
    train = json.loads((out / "config.json").read_text())["train"]
    assert (train["seed"], train["hidden_size"], train["pretrain_epochs"]) == (3, 4, 1)


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["pretrain", "--nope"],
    ["pretrain", "--set", "learning_rate=0.1"],
    ["pretrain", "--set", "seed=1", "--seed", "2"],
    ["pretrain", "--set", "lr_pretrain=-1", "--corpus", "x"],
    ["sweep", "--set", "seed=1"],
    ["synth", "--set", "connective_strength=2"],
    ["pretrain", "--config", "/nonexistent.json"],
    ["adapt", "--corpus", "x"],
])
def test_usage_errors_exit_1(argv, tmp_path):
    assert main([*argv, *(["--out", str(tmp_path)] if len(argv) > 1 else [])]) == EXIT_USAGE


def test_data_errors_exit_2(corpus, tmp_path):
    assert main(["pretrain", "--corpus", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == EXIT_DATA
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "source-train.jsonl").write_text('{"arg1": "a", "arg2": "b", "label": "Nope", "domain": "source", '
                                            '"id": "1"}\n')
    (bad / "embeddings.txt").write_text("a 1 2\n")
    assert main(["pretrain", "--corpus", str(bad), "--out", str(tmp_path / "o2")]) == EXIT_DATA
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"garbage")
    assert main(["eval", "--corpus", str(corpus), "--checkpoint", str(junk), "--out", str(tmp_path / "o3")]) \
        == EXIT_DATA


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_training_exits_3(corpus, tmp_path):
    code = main(["pretrain", "--corpus", str(corpus), "--out", str(tmp_path / "p"), "--epochs", "2",
                 "--set", "lr_pretrain=1e300", *SMALL[2:]])
    assert code == EXIT_NUMERIC


def test_resolve_config_rules():
    out = resolve_config("adapt", {"train": {"seed": 1}}, {"train.spectral_norm": False}, ["seed=2"])
    assert out["train"] == {"seed": 2, "spectral_norm": False}
    with pytest.raises(UsageError, match="unknown key"):
        resolve_config("adapt", {"train": {"sead": 1}}, {}, [])
    with pytest.raises(UsageError, match="ambiguous"):
        resolve_config("sweep", {}, {}, ["seed=1"])
    with pytest.raises(UsageError, match="conflicting"):
        resolve_config("adapt", {}, {"train.adapt_epochs": 3}, ["adapt_epochs=4"])


@pytest.mark.parametrize("text, expected", [
    ("0.1..1.0", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]),
    ("0.2..1.0:0.4", [0.2, 0.6, 1.0]),
    ("0.1,0.5", [0.1, 0.5]),
])
def test_parse_fractions(text, expected):
    assert parse_fractions(text) == expected


def test_module_entry_point_reports_usage():
    proc = subprocess.run([sys.executable, "-m", "discoadapt", "pretrain", "--set", "nope=1"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
    assert "unknown key 'nope'" in proc.stderr
