"""Command line entry point: ``python -m ddad <command> ...``.

Every command exits 0 only when its outputs were written and checked. On
failure a single ``error: ...`` line goes to stderr and the exit code is 1
(2 for usage errors, from argparse).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .checkpoint import read_checkpoint
from .config import load_config
from .data import make_dataset
from .errors import DDADError
from .trainer import evaluate_accuracy


def _load(args) -> "ex.ExperimentConfig":
    overrides = {}
    for key in ("delta", "gamma", "seed", "output_dir"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise DDADError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return load_config(args.config, overrides)


def _require(paths) -> None:
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise DDADError(f"expected outputs missing: {', '.join(missing)}")


def cmd_pretrain(args) -> int:
    cfg = _load(args)
    _, acc = ex.pretrain(cfg)
    out = ex.output_dir(cfg)
    _require([out / "teacher.ckpt", out / "teacher.json", out / "config.resolved.txt"])
    read_checkpoint(out / "teacher.ckpt")
    print(f"teacher test accuracy {acc:.4f} -> {out / 'teacher.ckpt'}")
    return 0


def _teacher(args, cfg):
    path = Path(args.teacher) if args.teacher else ex.output_dir(cfg) / "teacher.ckpt"
    if not path.is_file():
        raise DDADError(f"teacher checkpoint {path} not found (run pretrain first)")
    return read_checkpoint(path)[0]


def _check_run(out: Path, art) -> None:
    _require([out / n for n in ("metrics.csv", "steps.csv", "summary.json", "student.ckpt",
                                "generator.ckpt")])
    read_checkpoint(out / "student.ckpt")
    if art.invariant_violations:
        raise DDADError(f"{out}: {art.invariant_violations[0]}")


def cmd_distill(args) -> int:
    cfg = _load(args)
    teacher = _teacher(args, cfg)
    d = cfg.distill
    out = ex.output_dir(cfg) / "runs" / ex.run_name(d.delta, d.gamma) / f"seed{d.seed}"
    ex.echo_config(cfg)
    art = ex.distill(cfg, teacher, d.seed, out)
    _check_run(out, art)
    print(f"seed {d.seed} delta {d.delta:g} gamma {d.gamma:g}: "
          f"student test accuracy {art.final_accuracy:.4f} -> {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    net, meta = read_checkpoint(args.ckpt)
    _, test = make_dataset(cfg)
    if tuple(test.inputs.shape[1:]) != net.input_shape:
        raise DDADError(f"checkpoint expects inputs {net.input_shape}, "
                        f"config gives {tuple(test.inputs.shape[1:])}")
    acc = evaluate_accuracy(net, test)
    line = f"test accuracy {acc!r}"
    if "test_accuracy" in meta:
        line += f" (recorded {meta['test_accuracy']!r})"
    print(line)
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    teacher = _teacher(args, cfg)
    ex.echo_config(cfg)
    print("delta,gamma,median_acc")
    rows = ex.ablate(cfg, teacher)
    base = ex.output_dir(cfg)
    _require([base / "ablation.csv", base / "ablation.json"])
    for r in rows:
        for seed in cfg.seeds:
            out = base / "runs" / ex.run_name(r["delta"], r["gamma"]) / f"seed{seed}"
            _require([out / "metrics.csv", out / "student.ckpt"])
        print(f"{r['delta']:g},{r['gamma']:g},{r['median_accuracy']:.4f}"
              + (f"  ({r['label']})" if r["label"] else ""))
    return 0


def cmd_report(args) -> int:
    rows = ex.report(args.dirs, svg_dir=args.svg)
    if not rows:
        raise DDADError("no metrics.csv found under " + " ".join(args.dirs))
    text = ex.format_report(rows)
    if args.out:
        ex.write_text_atomic(Path(args.out), text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddad", description="Data-free distillation experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="key = value config file")
        sp.add_argument("--output-dir", dest="output_dir", help="override output_dir")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
        sp.set_defaults(fn=fn)
        return sp

    with_config("pretrain", cmd_pretrain, "train the teacher on real data")
    sp = with_config("distill", cmd_distill, "one data-free distillation run")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--teacher", help="teacher checkpoint (default: <output_dir>/teacher.ckpt)")
    sp = with_config("eval", cmd_eval, "test accuracy of a checkpoint")
    sp.add_argument("--ckpt", required=True)
    sp = with_config("ablate", cmd_ablate, "run the delta x gamma grid over all seeds")
    sp.add_argument("--teacher")

    sp = sub.add_parser("report", help="summarize metrics.csv files")
    sp.add_argument("dirs", nargs="+", metavar="DIR")
    sp.add_argument("--svg", metavar="DIR", help="also write SVG plots here")
    sp.add_argument("--out", help="write the table to this file as well")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.fn(args)
    except (DDADError, OSError, ValueError, ArithmeticError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
