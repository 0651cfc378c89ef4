import csv
import json
import shutil
import statistics

import pytest

from ddad.cli import main

CONFIG = """
input_dim = 16
samples_per_class = 100
test_samples_per_class = 50
teacher_epochs = 8
epochs = 2
steps_per_epoch = 3
batch_size = 32
seeds = 1,2
output_dir = out
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("DDAD_OUTPUT_ROOT", raising=False)
    (tmp_path / "c.cfg").write_text(CONFIG)
    return tmp_path


def test_pretrain_eval_distill(workdir, capsys):
    assert main(["pretrain", "--config", "c.cfg"]) == 0
    recorded = json.loads((workdir / "out/teacher.json").read_text())["test_accuracy"]
    assert (workdir / "out/config.resolved.txt").read_text().startswith("task = blobs")
    capsys.readouterr()
    assert main(["eval", "--config", "c.cfg", "--ckpt", "out/teacher.ckpt"]) == 0
    assert capsys.readouterr().out.split()[2] == repr(recorded)

    assert main(["distill", "--config", "c.cfg", "--seed", "4", "--delta", "0.02"]) == 0
    run = workdir / "out/runs/d0.02_g0.1/seed4"
    summary = json.loads((run / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["config"]["seed"] == 4
    assert summary["teacher_fingerprint_before"] == summary["teacher_fingerprint_after"]
    assert (run / "samples.pgm").exists()


def test_failures_exit_nonzero_with_one_line(workdir, capsys):
    assert main(["distill", "--config", "c.cfg"]) == 1  # no teacher yet
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1
    assert main(["eval", "--config", "missing.cfg", "--ckpt", "x"]) == 1
    (workdir / "bad.cfg").write_text("nonsense = 1\n")
    assert main(["pretrain", "--config", "bad.cfg"]) == 1
    assert "nonsense" in capsys.readouterr().err
    assert main(["report", "nowhere"]) == 1
    with pytest.raises(SystemExit):
        main(["distill"])


def test_zero_objective_is_rejected_for_single_runs(workdir):
    assert main(["pretrain", "--config", "c.cfg"]) == 0
    assert main(["distill", "--config", "c.cfg", "--delta", "0", "--gamma", "0"]) == 1


def test_output_root_override(workdir, monkeypatch):
    monkeypatch.setenv("DDAD_OUTPUT_ROOT", str(workdir / "elsewhere"))
    assert main(["pretrain", "--config", "c.cfg"]) == 0
    assert (workdir / "elsewhere/out/teacher.ckpt").exists()
    assert not (workdir / "out").exists()


def test_ablate_and_report(workdir, capsys):
    assert main(["pretrain", "--config", "c.cfg"]) == 0
    assert main(["ablate", "--config", "c.cfg"]) == 0
    table = list(csv.DictReader((workdir / "out/ablation.csv").open()))
    assert [(float(r["delta"]), float(r["gamma"])) for r in table] == \
        [(0.0, 0.0), (0.0, 0.1), (0.01, 0.0), (0.01, 0.1)]

    # independent recomputation of the medians from the per-run CSVs
    for row in table:
        name = f"d{float(row['delta']):g}_g{float(row['gamma']):g}"
        finals = []
        for seed in (1, 2):
            with (workdir / "out/runs" / name / f"seed{seed}/metrics.csv").open() as fh:
                finals.append(float(list(csv.DictReader(fh))[-1]["test_acc"]))
        assert float(row["median_acc"]) == statistics.median(finals)

    capsys.readouterr()
    assert main(["report", "out/runs", "--svg", "plots", "--out", "report.csv"]) == 0
    rows = list(csv.DictReader((workdir / "report.csv").open()))
    assert len(rows) == 8 and len(list((workdir / "plots").glob("*.svg"))) == 16
    for r in rows:
        with open(r["run"] + "/metrics.csv") as fh:
            metrics = list(csv.DictReader(fh))
        assert float(r["final_acc"]) == float(metrics[-1]["test_acc"])
        assert float(r["best_acc"]) == max(float(m["test_acc"]) for m in metrics)
        assert int(r["epochs"]) == len(metrics)


def test_report_identical_dirs_give_identical_rows(workdir, capsys):
    assert main(["pretrain", "--config", "c.cfg"]) == 0
    assert main(["distill", "--config", "c.cfg"]) == 0
    src = workdir / "out/runs/d0.01_g0.1/seed1"
    shutil.copytree(src, workdir / "copy")
    capsys.readouterr()
    assert main(["report", str(src), "copy"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert lines[1].split(",", 1)[1] == lines[2].split(",", 1)[1]
