import json

import pytest

from fidqae import cli, io, noise

SMALL = ["--data.train_nonfraud_count", "120", "--data.test_nonfraud_count", "60",
         "--train.epochs", "1", "--threads", "1"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    base = ["--out", root / "out", "--dataset", root / "tx.csv"]
    assert run("make-synthetic", "--rows", 400, "--fraud", 40, *base) == 0
    assert run("prepare", *base) == 0
    assert run("train", *base, *SMALL) == 0
    return root, base


# --- configuration -------------------------------------------------------------------


def test_parse_overrides():
    tree = cli.parse_overrides(["--train.epochs", "5", "--noise.p_grid=[0, 0.5]", "--hw.reference", "0101"])
    assert tree == {"train": {"epochs": 5}, "noise": {"p_grid": [0, 0.5]}, "hw": {"reference": "0101"}}
    with pytest.raises(cli.ConfigError):
        cli.parse_overrides(["--train.epochs"])
    with pytest.raises(cli.ConfigError):
        cli.parse_overrides(["stray"])


def test_load_config_merges_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"train": {"batch_size": 8}, "seed": 4}))
    cfg = cli.load_config(str(p), {"train": {"epochs": 2}})
    assert (cfg["seed"], cfg["train"]["batch_size"], cfg["train"]["epochs"]) == (4, 8, 2)
    assert cfg["train"]["learning_rate"] == 0.001
    assert cfg["noise"]["placement"] == noise.DEFAULT_PLACEMENT


@pytest.mark.parametrize("overrides", [
    {"train": {"nope": 1}},
    {"data": {"k": 8}},
    {"train": {"epochs": 0}},
    {"noise": {"p_grid": [1.5]}},
    {"noise": {"placement": "somewhere"}},
    {"thresholds": [-0.1]},
    {"model": 3},
])
def test_bad_config_rejected(overrides):
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, overrides)


def test_exit_codes(tmp_path, capsys):
    missing = tmp_path / "absent.csv"
    assert run("prepare", "--dataset", missing, "--out", tmp_path) == 2
    assert str(missing) in capsys.readouterr().err
    bad = tmp_path / "c.json"
    bad.write_text('{"seed": 1,\n  oops}')
    assert run("train", "--config", bad) == 2
    assert "c.json:2:" in capsys.readouterr().err
    assert run("train", "--config", tmp_path / "none.json") == 2
    assert run("evaluate", "--out", tmp_path) == 2
    assert run("train", "--train.epochs", "0") == 2
    with pytest.raises(SystemExit) as exc:
        run("sweep", "--kind", "weather")
    assert exc.value.code == 2


def test_unreadable_counts_file(tmp_path, capsys):
    p = tmp_path / "counts.json"
    p.write_text("[{]")
    assert run("hw-classify", p, "--out", tmp_path) == 2
    assert "counts.json:1:" in capsys.readouterr().err


# --- pipeline -------------------------------------------------------------------


def test_prepare_outputs(workdir):
    root, _ = workdir
    text = (root / "out" / "reduced.csv").read_text().splitlines()
    assert text[0].startswith("# config_hash=") and "seed=0" in text[0]
    header = text[1].split(",")
    assert header[0] == "row_id" and header[-1] == "Class" and len(header) == 18
    sel = json.loads((root / "out" / "selection.json").read_text())
    assert len(sel["selected"]) == 16


def test_prepare_is_idempotent(workdir):
    root, base = workdir
    before = (root / "out" / "reduced.csv").read_bytes()
    assert run("prepare", *base) == 0
    assert (root / "out" / "reduced.csv").read_bytes() == before


def test_train_outputs_and_determinism(workdir, tmp_path):
    root, base = workdir
    params = json.loads((root / "out" / "params.json").read_text())
    assert len(params["theta"]) == 90
    hist = io.read_csv_rows(root / "out" / "history.csv")
    assert len(hist) == 1
    other = ["--out", tmp_path, "--dataset", root / "tx.csv"]
    assert run("prepare", *other) == 0
    assert run("train", *other, *SMALL) == 0
    assert json.loads((tmp_path / "params.json").read_text())["theta"] == params["theta"]


def test_evaluate(workdir, capsys):
    root, base = workdir
    assert run("evaluate", *base, *SMALL, "--thresholds", "[0, 0.5, 1]") == 0
    out = capsys.readouterr().out
    rows = io.read_csv_rows(root / "out" / "metrics.csv")
    assert [float(r["threshold"]) for r in rows] == [0, 0.5, 1]
    # tau=0 calls everything non-fraud, tau=1 calls (almost) everything fraud
    assert float(rows[0]["recall"]) == 0 and "degenerate=" in out.splitlines()[0]
    assert float(rows[2]["recall"]) == 1
    fid = io.read_csv_rows(root / "out" / "fidelities.csv")
    assert len(fid) == 60 + 40
    doc = json.loads((root / "out" / "metrics.json").read_text())
    assert len(doc["reports"]) == 3 and "config_hash" in doc
    dist = json.loads((root / "out" / "distribution.json").read_text())
    assert 0 <= dist["overlap_coefficient"] <= 1


def test_sweep_prevalence(workdir):
    root, base = workdir
    assert run("sweep", "--kind", "prevalence", *base, *SMALL) == 0
    rows = io.read_csv_rows(root / "out" / "prevalence.csv")
    assert len(rows) == 4 * 5
    assert sorted({int(r["n_fraud"]) for r in rows}) == [8, 16, 24, 32]


def test_sweep_noise(workdir):
    root, base = workdir
    assert run("sweep", "--kind", "noise", *base, *SMALL) == 0
    rows = io.read_csv_rows(root / "out" / "noise.csv")
    assert len(rows) == 5 * 11
    assert [r["channel"] for r in rows[::11]] == list(noise.CHANNELS)
    assert "placement=final_only" in (root / "out" / "noise.csv").read_text().splitlines()[0]


def test_sweep_shots(workdir):
    root, base = workdir
    assert run("sweep", "--kind", "shots", *base, *SMALL, "--noise.shot_grid", "[16, 64]",
               "--noise.channels", '["bit_flip"]') == 0
    rows = io.read_csv_rows(root / "out" / "shots.csv")
    assert [(r["channel"], r["shots"]) for r in rows] == [("bit_flip", "16"), ("bit_flip", "64")]


def test_hw_classify_on_simulated_counts(workdir, capsys):
    root, base = workdir
    dest = root / "counts.json"
    assert run("synth-counts", *base, *SMALL, "--jobs", 40, "--shots", 256, "--dest", dest) == 0
    jobs = json.loads(dest.read_text())
    assert len(jobs) == 40 and sum(j["label"] for j in jobs) == 20
    assert run("hw-classify", dest, *base) == 0
    out = capsys.readouterr().out
    assert "in-sample:" in out and "held-out:" in out
    metrics = json.loads((root / "out" / "hw_metrics.json").read_text())
    assert metrics["in_sample"]["n_jobs"] == 40
    assert metrics["held_out"]["n_fit"] + metrics["held_out"]["n_eval"] == 40
    mdl = json.loads((root / "out" / "hw_model.json").read_text())
    assert len(mdl["in_sample"]["weights"]) == 2


def test_synth_counts_too_many_jobs(workdir):
    root, base = workdir
    assert run("synth-counts", *base, *SMALL, "--jobs", 1000, "--dest", root / "x.json") == 2
