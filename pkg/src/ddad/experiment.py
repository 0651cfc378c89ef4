"""Experiment orchestration used by the command line and the demo scripts.

Output layout under ``cfg.output_dir``::

    config.resolved.txt      fully resolved config
    teacher.ckpt             pretrained teacher
    teacher.json             teacher accuracy and fingerprint
    runs/d<delta>_g<gamma>[_w<width>]/seed<N>/   one run_ddad output directory each
    ablation.csv / ablation.json                 grid summary
"""
from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from .artifacts import read_metrics_csv, svg_line_plot, write_json, write_text_atomic
from .checkpoint import read_checkpoint, save_checkpoint
from .config import ExperimentConfig, dump_config
from .data import make_dataset
from .models import Network, build_teacher, param_fingerprint
from .trainer import RunArtifacts, evaluate_accuracy, pretrain_teacher, run_ddad

OUTPUT_ROOT_ENV = "DDAD_OUTPUT_ROOT"


def output_dir(cfg: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return Path(root) / cfg.output_dir if root else Path(cfg.output_dir)


def echo_config(cfg: ExperimentConfig) -> Path:
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    return write_text_atomic(out / "config.resolved.txt", dump_config(cfg))


def pretrain(cfg: ExperimentConfig) -> tuple[Network, float]:
    """Train the teacher on real data and save it; returns (teacher, test accuracy)."""
    train, test = make_dataset(cfg)
    teacher = build_teacher(cfg.input_shape, cfg.num_classes, seed=cfg.teacher_seed,
                            width=cfg.teacher_width)
    teacher, history = pretrain_teacher(train, test, teacher, epochs=cfg.teacher_epochs,
                                        lr=cfg.teacher_lr, batch_size=cfg.teacher_batch_size,
                                        seed=cfg.teacher_seed)
    acc = evaluate_accuracy(teacher, test)
    out = output_dir(cfg)
    echo_config(cfg)
    save_checkpoint(teacher, out / "teacher.ckpt", {"test_accuracy": acc})
    write_json(out / "teacher.json", {"test_accuracy": acc,
                                      "fingerprint": param_fingerprint(teacher),
                                      "num_parameters": teacher.num_parameters(),
                                      "history": history})
    return teacher, acc


def load_teacher(cfg: ExperimentConfig, path=None) -> tuple[Network, dict]:
    return read_checkpoint(path or output_dir(cfg) / "teacher.ckpt")


def run_name(delta: float, gamma: float, width: float | None = None) -> str:
    name = f"d{delta:g}_g{gamma:g}"
    return name if width is None else f"{name}_w{width:g}"


def distill(cfg: ExperimentConfig, teacher: Network, seed: int, out: Path | None = None,
            student_width: float | None = None, allow_untrained_generator: bool = False,
            check_every_step: bool = False, **changes) -> RunArtifacts:
    """One data-free run; ``changes`` override DistillConfig fields."""
    dcfg = cfg.with_distill(seed=seed, **changes).distill
    _, test = make_dataset(cfg)
    return run_ddad(teacher, dcfg, test, out_dir=out,
                    generator_hidden=cfg.generator_hidden,
                    generator_upsample=cfg.generator_upsample,
                    student_width=cfg.student_width if student_width is None else student_width,
                    require_objective=not allow_untrained_generator,
                    check_every_step=check_every_step)


def ablate(cfg: ExperimentConfig, teacher: Network, write: bool = True) -> list[dict]:
    """Every (delta, gamma) grid point for every seed, plus per-point medians.

    The (0, 0) point has no generator objective and so runs with an untrained
    generator; it is labelled as that baseline in the summary.
    """
    base = output_dir(cfg) / "runs"
    rows = []
    for delta in cfg.ablate_deltas:
        for gamma in cfg.ablate_gammas:
            accs = []
            for seed in cfg.seeds:
                out = base / run_name(delta, gamma) / f"seed{seed}" if write else None
                art = distill(cfg, teacher, seed, out, allow_untrained_generator=True,
                              delta=delta, gamma=gamma)
                accs.append(art.final_accuracy)
            rows.append({"delta": delta, "gamma": gamma,
                         "label": "untrained generator" if delta == 0 and gamma == 0 else "",
                         "seeds": list(cfg.seeds), "accuracies": accs,
                         "median_accuracy": float(np.median(accs))})
    if write:
        out = output_dir(cfg)
        write_json(out / "ablation.json", {"rows": rows})
        write_text_atomic(out / "ablation.csv", ablation_table(rows))
    return rows


def ablation_table(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta", "gamma", "median_acc", "accuracies", "label"])
    for r in rows:
        w.writerow([r["delta"], r["gamma"], repr(r["median_accuracy"]),
                    " ".join(repr(a) for a in r["accuracies"]), r["label"]])
    return buf.getvalue()


# -- reporting ------------------------------------------------------------------------

REPORT_HEADER = ("run", "seed", "epochs", "final_acc", "best_acc", "final_student_loss",
                 "final_bn_term", "final_disc_term")


def find_runs(dirs) -> list[Path]:
    """Every directory at or below ``dirs`` that holds a metrics.csv."""
    found = []
    for d in dirs:
        d = Path(d)
        if not d.exists():
            raise FileNotFoundError(f"{d}: no such directory")
        found += sorted(p.parent for p in d.rglob("metrics.csv"))
    return found


def summarize_run(path: Path) -> dict:
    records = read_metrics_csv(path / "metrics.csv")
    if not records:
        return {"run": str(path), "seed": "", "epochs": 0, "final_acc": "", "best_acc": "",
                "final_student_loss": "", "final_bn_term": "", "final_disc_term": ""}
    last = records[-1]
    return {"run": str(path), "seed": last.seed, "epochs": len(records),
            "final_acc": last.student_test_accuracy,
            "best_acc": max(r.student_test_accuracy for r in records),
            "final_student_loss": last.student_loss, "final_bn_term": last.bn_term,
            "final_disc_term": last.discrepancy_term}


def report(dirs, svg_dir=None) -> list[dict]:
    rows = [summarize_run(p) for p in find_runs(dirs)]
    if svg_dir is not None:
        svg_dir = Path(svg_dir)
        svg_dir.mkdir(parents=True, exist_ok=True)
        for i, p in enumerate(find_runs(dirs)):
            recs = read_metrics_csv(p / "metrics.csv")
            stem = f"run{i:03d}"
            write_text_atomic(svg_dir / f"{stem}_accuracy.svg", svg_line_plot(
                {"test_acc": [r.student_test_accuracy for r in recs]}, f"{p} accuracy"))
            write_text_atomic(svg_dir / f"{stem}_losses.svg", svg_line_plot(
                {"student": [r.student_loss for r in recs],
                 "disc": [r.discrepancy_term for r in recs]}, f"{p} losses"))
    return rows


def format_report(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in rows:
        w.writerow([r[k] if not isinstance(r[k], float) else repr(r[k]) for k in REPORT_HEADER])
    return buf.getvalue()


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
