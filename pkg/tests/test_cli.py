import json
import subprocess
import sys

import pytest

from prach_hybrid.cli import main
from prach_hybrid.dataset import read_dataset
from prach_hybrid.evaluation import read_eval_csv
from prach_hybrid.mlp import load_model


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    """A small dataset and model built through the CLI once for the module."""
    d = tmp_path_factory.mktemp("cli")
    data = d / "train.jsonl.gz"
    assert main(["generate", "--snr-list", "-5,5,15", "--instances", "400", "--seed", "3",
                 "--out", str(data)]) == 0
    model = d / "model.json"
    assert main(["train", "--data", str(data), "--seed", "3", "--out", str(model)]) == 0
    return d, data, model


def test_generate_and_train(work, capsys):
    d, data, model = work
    assert len(read_dataset(data)) == 1200
    m = load_model(model)
    meta = m.train_meta
    assert meta["dataset"]["channel"] == "tdlc300" and meta["dataset"]["num_rx"] == 1
    assert meta["dataset"]["n_test"] == 300
    assert 0.5 < meta["test_accuracy"] <= 1.0
    assert meta["cli"]["seed"] == 3


def test_train_prints_accuracies(work, tmp_path, capsys):
    _, data, _ = work
    assert main(["train", "--data", str(data), "--epochs", "2", "--out",
                 str(tmp_path / "m.json")]) == 0
    out = capsys.readouterr().out
    assert "train accuracy" in out and "test accuracy" in out


def test_eval_csv_and_figures(work, tmp_path):
    _, _, model = work
    outs = []
    for name in ("a", "b"):
        csv_path = tmp_path / f"{name}.csv"
        assert main(["eval", "--model", str(model), "--snr-list", "-10,0", "--trials", "200",
                     "--plot", "--gnuplot", "--out", str(csv_path)]) == 0
        outs.append(csv_path)
    rows = read_eval_csv(outs[0])
    assert len(rows) == 4
    assert {r["receiver"] for r in rows} == {"conventional", "hybrid"}
    for r in rows:
        assert 0.0 <= r["p_detect"] <= 1.0 and r["n_trials"] == 200
    for suffix in ("_detection.png", "_ta.png"):
        a = outs[0].with_name("a" + suffix).read_bytes()
        b = outs[1].with_name("b" + suffix).read_bytes()
        assert a[:8] == b"\x89PNG\r\n\x1a\n" and a == b
    assert outs[0].with_suffix(".gp").exists()
    body = [l for l in outs[0].read_text().splitlines() if not l.startswith("#")]
    assert body == [l for l in outs[1].read_text().splitlines() if not l.startswith("#")]


def test_eval_threads_same_rows(work, tmp_path):
    _, _, model = work
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["eval", "--model", str(model), "--snr-list", "-10,0,10", "--trials", "100"]
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--threads", "3", "--out", str(b)]) == 0
    strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("#")]
    assert strip(a) == strip(b)


def test_capture_detect_import(work, tmp_path, capsys):
    _, _, model = work
    cap = tmp_path / "cap.txt"
    assert main(["capture", "--rapids", "3,41", "--snr", "10", "--occasions", "2",
                 "--seed", "1", "--out", str(cap)]) == 0
    capsys.readouterr()
    assert main(["detect", "--capture", str(cap), "--model", str(model)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    parsed = [tuple(t.strip() for t in l.split(",")) for l in lines]
    found = {(p[0], p[3]) for p in parsed}
    # no false detections; a single-antenna Rayleigh fade may hide one user
    assert found <= {("3", "0"), ("41", "0"), ("3", "1"), ("41", "1")}
    assert len(found) >= 3
    for rapid, ta_bins, meters, _ in parsed:
        assert abs(int(ta_bins) - 3) <= 1
        assert float(meters) == pytest.approx(int(ta_bins) * 71.94, abs=0.1)
    out = tmp_path / "imp.jsonl"
    assert main(["import", "--capture", str(cap), "--labels", str(cap) + ".labels.json",
                 "--out", str(out)]) == 0
    wins = read_dataset(out)
    assert len(wins) == 128
    assert sum(w.label == "present" for w in wins) == 4


def test_detect_conventional(tmp_path, capsys):
    cap = tmp_path / "cap.txt"
    assert main(["capture", "--rapids", "17", "--snr", "10", "--out", str(cap)]) == 0
    capsys.readouterr()
    assert main(["detect", "--capture", str(cap), "--detector", "conventional"]) == 0
    assert capsys.readouterr().out.split(",")[0] == "17"


def test_noise_only_capture_prints_nothing(work, tmp_path, capsys):
    _, _, model = work
    cap = tmp_path / "noise.txt"
    assert main(["capture", "--snr", "0", "--out", str(cap)]) == 0
    capsys.readouterr()
    assert main(["detect", "--capture", str(cap), "--model", str(model)]) == 0
    assert capsys.readouterr().out == ""


def test_explain(work, tmp_path, capsys):
    _, data, model = work
    out = tmp_path / "shap.csv"
    assert main(["explain", "--model", str(model), "--data", str(data), "--snr", "15",
                 "--limit", "10", "--plot", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[0])
    assert summary["instances"] == 10
    assert out.with_suffix(".png").exists()
    assert out.with_suffix(".summary.json").exists()


def test_missing_out_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["generate"])
    assert exc.value.code == 2
    assert "--out" in capsys.readouterr().err


def test_unknown_channel_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--channel", "foo", "--out", str(tmp_path / "x")])
    assert exc.value.code == 2
    assert main(["eval", "--channels", "foo", "--out", str(tmp_path / "x.csv")]) == 2


def test_malformed_capture_is_data_error(tmp_path, capsys):
    cap = tmp_path / "bad.txt"
    cap.write_text("# header\n" + ",".join(["0.1"] * 278) + "\n1.0,oops\n")
    assert main(["detect", "--capture", str(cap), "--detector", "conventional"]) == 3
    assert ":3:" in capsys.readouterr().err


def test_bad_model_file_is_data_error(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text("{\"format_version\": 1")
    cap = tmp_path / "cap.txt"
    assert main(["capture", "--out", str(cap)]) == 0
    assert main(["detect", "--capture", str(cap), "--model", str(bad)]) == 3


def test_single_class_training_is_numeric_failure(tmp_path):
    data = tmp_path / "d.jsonl"
    assert main(["generate", "--snr-list", "0", "--instances", "40", "--ratio", "1.0",
                 "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(tmp_path / "m.json")]) == 4


def test_generate_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    args = ["generate", "--snr-list", "0", "--instances", "50", "--seed", "9"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_from_environment(tmp_path, monkeypatch):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    args = ["generate", "--snr-list", "0", "--instances", "20"]
    assert main(args + ["--seed", "12", "--out", str(a)]) == 0
    monkeypatch.setenv("PRACH_SEED", "12")
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_file(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[prach]\nseed = 4\n\n[generate]\nsnr-list = 0,10\ninstances = 30\n")
    out = tmp_path / "d.jsonl"
    assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
    wins = read_dataset(out)
    assert len(wins) == 60 and wins[0].meta["seed"] == 4
    # command-line flags win over the file
    assert main(["generate", "--config", str(cfg), "--instances", "10", "--out", str(out)]) == 0
    assert len(read_dataset(out)) == 20


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[generate]\nbogus = 1\n")
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "prach_hybrid.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("prach_hybrid")


def test_default_desk_scale_training_accuracy(tmp_path, capsys):
    data, model = tmp_path / "desk.jsonl.gz", tmp_path / "desk.json"
    assert main(["generate", "--channel", "tdlc300", "--num-rx", "1", "--instances", "2000",
                 "--out", str(data)]) == 0
    assert len(read_dataset(data)) == 9 * 2000
    assert main(["train", "--data", str(data), "--out", str(model)]) == 0
    assert load_model(model).train_meta["test_accuracy"] >= 0.85


def test_outputs_embed_config(work, tmp_path):
    _, data, _ = work
    rec = read_dataset(data)[0]
    assert rec.meta["generator"].startswith("prach_hybrid")
    assert rec.meta["spec"]["instances_per_snr"] == 400
    cap = tmp_path / "cap.txt"
    assert main(["capture", "--rapids", "5", "--seed", "2", "--out", str(cap)]) == 0
    head = [l for l in cap.read_text().splitlines() if l.startswith("#")]
    assert any(l.startswith("# config: ") and '"seed": 2' in l for l in head)
