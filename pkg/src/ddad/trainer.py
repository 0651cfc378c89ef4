"""Teacher pretraining and the two-stage data-free distillation loop.

Each epoch runs ``k_g`` generator steps against the frozen teacher and
student, then ``k_s`` student steps on fresh generated batches with the
teacher and generator frozen. Only :func:`pretrain_teacher` touches real
data; the test split is used for evaluation alone.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import (MetricsRecord, sample_grid, write_json, write_metrics_csv, write_pnm,
                        write_steps_csv, records_as_dicts)
from .checkpoint import save_checkpoint
from .config import DistillConfig
from .data import SyntheticDataset
from .errors import DivergenceError, NonFiniteError
from .losses import (bn_divergence_loss, cross_entropy, discrepancy_loss, generator_loss,
                     soft_kl, student_distill_loss)
from .models import Network, build_generator, build_student, forward_with_bn_capture, \
    param_fingerprint
from .optim import SGD, Adam
from .tensor import Tensor, backward, no_grad, softmax

log = logging.getLogger(__name__)


def _check_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise DivergenceError(f"{what} became non-finite ({value})")
    return value


class _divergence_guard:
    """Report a non-finite intermediate value as a divergence of ``what``."""

    def __init__(self, what: str):
        self.what = what

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if kind is not None and issubclass(kind, NonFiniteError):
            raise DivergenceError(f"{self.what} diverged: {exc}") from exc
        return False


def sample_noise(batch: int, noise_dim: int, rng: np.random.Generator) -> Tensor:
    if batch < 1 or noise_dim < 1:
        raise ValueError(f"noise shape must be positive, got {batch} x {noise_dim}")
    return Tensor(rng.standard_normal((batch, noise_dim)))


def accuracy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels).reshape(-1)
    if labels.size == 0:
        raise ValueError("cannot compute accuracy on an empty dataset")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def predict(net: Network, inputs: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Inference-mode logits; the network's mode is restored afterwards."""
    mode = net.mode
    net.eval()
    try:
        with no_grad():
            chunks = [net(inputs[i:i + batch_size]).data
                      for i in range(0, inputs.shape[0], batch_size)]
    finally:
        net.mode = mode
    return np.concatenate(chunks, axis=0)


def evaluate_accuracy(net: Network, dataset: SyntheticDataset) -> float:
    if len(dataset) == 0:
        raise ValueError("cannot compute accuracy on an empty dataset")
    return accuracy_from_logits(predict(net, dataset.inputs), dataset.labels)


# -- teacher -------------------------------------------------------------------

def pretrain_teacher(train: SyntheticDataset, test: SyntheticDataset | None, net: Network,
                     epochs: int = 30, lr: float = 0.05, batch_size: int = 64,
                     momentum: float = 0.9, weight_decay: float = 5e-4,
                     milestones=(0.5, 0.75), seed: int = 0):
    """Plain supervised training with SGD and a step schedule.

    Returns the trained network and a list of per-epoch dicts (loss, test accuracy).
    """
    rng = np.random.default_rng(seed)
    opt = SGD(net.parameters(), lr, momentum, weight_decay)
    history = []
    net.train()
    for epoch in range(epochs):
        opt.lr = lr * 0.1 ** sum(epoch >= int(round(m * epochs)) for m in milestones)
        losses = []
        for xb, yb in train.batches(batch_size, rng):
            if xb.shape[0] < 2:
                continue
            opt.zero_grad()
            with _divergence_guard("teacher training"):
                loss = cross_entropy(net(xb), yb)
                losses.append(_check_finite(loss.item(), "teacher loss"))
                backward(loss)
                opt.step()
        entry = {"epoch": epoch, "loss": float(np.mean(losses))}
        if test is not None:
            entry["test_acc"] = evaluate_accuracy(net, test)
        history.append(entry)
        log.debug("teacher epoch %d %s", epoch, entry)
    net.eval()
    return net, history


# -- the two stages ----------------------------------------------------------------

def generator_step(generator: Network, teacher: Network, student: Network, cfg: DistillConfig,
                   rng: np.random.Generator, optimizer: Adam) -> tuple[float, float, float]:
    """One update of the generator against both discriminators.

    Returns (generator loss, BN-statistics term, discrepancy term).
    """
    teacher.freeze().train()
    student.freeze().eval()
    generator.freeze(False).train()
    optimizer.zero_grad()
    x = generator(sample_noise(cfg.batch_size, cfg.noise_dim, rng))
    t_logits, records = forward_with_bn_capture(teacher, x)
    bn_term = bn_divergence_loss(records)
    disc_term = discrepancy_loss(softmax(t_logits, cfg.tau), softmax(student(x), cfg.tau))
    loss = generator_loss(bn_term, disc_term, cfg.delta, cfg.gamma)
    _check_finite(loss.item(), "generator loss")
    backward(loss)
    optimizer.step()
    for rec in teacher.bn_records:
        rec.reset()
    return loss.item(), bn_term.item(), disc_term.item()


def student_step(student: Network, teacher: Network, generator: Network, cfg: DistillConfig,
                 rng: np.random.Generator, optimizer: SGD) -> float:
    """One update of the student on a freshly generated batch."""
    teacher.freeze().eval()
    generator.freeze().eval()
    student.freeze(False).train()
    optimizer.zero_grad()
    with no_grad():
        x = generator(sample_noise(cfg.batch_size, cfg.noise_dim, rng))
        t_logits = teacher(x)
        t_probs = softmax(t_logits, cfg.tau)
    s_logits = student(x)
    loss = student_distill_loss(t_probs, softmax(s_logits, cfg.tau))
    if cfg.student_kl_weight > 0:
        loss = loss + cfg.student_kl_weight * soft_kl(t_logits, s_logits, cfg.tau)
    value = _check_finite(loss.item(), "student loss")
    backward(loss)
    optimizer.step()
    return value


# -- the full loop -------------------------------------------------------------------

@dataclass
class RunArtifacts:
    config: DistillConfig
    teacher_fingerprint_before: str
    teacher_fingerprint_after: str
    metrics: list[MetricsRecord]
    steps: list[tuple] = field(default_factory=list)
    invariant_violations: list[str] = field(default_factory=list)
    final_student_checkpoint: Path | None = None
    sample_dump: Path | None = None
    student: Network | None = None
    generator: Network | None = None
    status: str = "ok"

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].student_test_accuracy if self.metrics else float("nan")


def run_ddad(teacher: Network, cfg: DistillConfig, test: SyntheticDataset,
             out_dir=None, student: Network | None = None, generator: Network | None = None,
             generator_hidden: int = 64, generator_upsample: str = "nearest",
             student_width: float = 0.5, check_every_step: bool = False,
             require_objective: bool = True) -> RunArtifacts:
    """Distill a student from ``teacher`` using generated samples only.

    ``teacher`` may also be a checkpoint path. Outputs are written to
    ``out_dir`` when given: metrics.csv, steps.csv, summary.json,
    student.ckpt, generator.ckpt and a sample grid (samples.pgm/.ppm).
    """
    if not isinstance(teacher, Network):
        from .checkpoint import load_checkpoint
        teacher = load_checkpoint(teacher)
    cfg.validate(require_objective=require_objective)
    num_classes = teacher.output_shape[0]
    if student is None:
        student = build_student(teacher.input_shape, num_classes, seed=10_000 * cfg.seed + 1,
                                width=student_width)
    if generator is None:
        generator = build_generator(cfg.noise_dim, teacher.input_shape,
                                    seed=10_000 * cfg.seed + 2, hidden=generator_hidden,
                                    upsample=generator_upsample)
    rng = np.random.default_rng(cfg.seed)
    g_opt = Adam(generator.parameters(), lr=cfg.lr_generator)
    s_opt = SGD(student.parameters(), cfg.lr_student, cfg.momentum, cfg.weight_decay)

    fp_before = param_fingerprint(teacher)
    art = RunArtifacts(cfg, fp_before, fp_before, [], student=student, generator=generator)
    start = time.perf_counter()
    best, since_best = -1.0, 0

    def check(net: Network, before: str, what: str, epoch: int) -> None:
        if param_fingerprint(net) != before:
            art.invariant_violations.append(f"epoch {epoch}: {what} changed")

    try:
        for epoch in range(cfg.epochs):
            g_stats = []
            s_fp = param_fingerprint(student)
            for step in range(cfg.k_g):
                g_stats.append(generator_step(generator, teacher, student, cfg, rng, g_opt))
                art.steps.append((epoch, "G", step, g_stats[-1][0]))
                if check_every_step:
                    check(student, s_fp, "student during generator step", epoch)
            check(student, s_fp, "student during generator stage", epoch)

            s_opt.lr = cfg.student_lr_at(epoch)
            s_losses = []
            g_fp = param_fingerprint(generator)
            for step in range(cfg.k_s):
                s_losses.append(student_step(student, teacher, generator, cfg, rng, s_opt))
                art.steps.append((epoch, "S", step, s_losses[-1]))
                if check_every_step:
                    check(generator, g_fp, "generator during student step", epoch)
            check(generator, g_fp, "generator during student stage", epoch)

            g_arr = np.array(g_stats) if g_stats else np.full((1, 3), np.nan)
            acc = evaluate_accuracy(student, test)
            art.metrics.append(MetricsRecord(
                epoch=epoch, generator_loss=float(g_arr[:, 0].mean()),
                bn_term=float(g_arr[:, 1].mean()), discrepancy_term=float(g_arr[:, 2].mean()),
                student_loss=float(np.mean(s_losses)) if s_losses else float("nan"),
                student_test_accuracy=acc, wallclock_seconds=time.perf_counter() - start,
                seed=cfg.seed))
            log.info("seed %d epoch %d acc %.4f bn %.4f disc %.4f", cfg.seed, epoch, acc,
                     art.metrics[-1].bn_term, art.metrics[-1].discrepancy_term)
            if cfg.early_stop_patience:
                if acc > best:
                    best, since_best = acc, 0
                else:
                    since_best += 1
                    if since_best >= cfg.early_stop_patience:
                        break
    except Exception as exc:
        art.status = "failed"
        if out_dir is not None:
            _write_outputs(art, teacher, Path(out_dir), partial=True)
        if isinstance(exc, NonFiniteError):
            raise DivergenceError(f"distillation diverged: {exc}") from exc
        raise
    finally:
        teacher.freeze().eval()
        student.freeze(False).eval()
        generator.freeze(False).eval()

    art.teacher_fingerprint_after = param_fingerprint(teacher)
    if art.teacher_fingerprint_after != fp_before:
        art.invariant_violations.append("teacher changed during the run")
    if out_dir is not None:
        _write_outputs(art, teacher, Path(out_dir))
    return art


def generate_samples(generator: Network, n: int, noise_dim: int, seed: int = 0) -> np.ndarray:
    with no_grad():
        mode = generator.mode
        generator.eval()
        x = generator(sample_noise(n, noise_dim, np.random.default_rng(seed))).data
        generator.mode = mode
    return x


def _write_outputs(art: RunArtifacts, teacher: Network, out: Path, partial: bool = False) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out / "metrics.csv", art.metrics)
    write_steps_csv(out / "steps.csv", art.steps)
    summary = {
        "status": "partial" if partial else art.status,
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(art.config).items()},
        "teacher_fingerprint_before": art.teacher_fingerprint_before,
        "teacher_fingerprint_after": art.teacher_fingerprint_after,
        "invariant_violations": art.invariant_violations,
        "epochs_completed": len(art.metrics),
        "final_test_accuracy": art.final_accuracy if art.metrics else None,
        "metrics": records_as_dicts(art.metrics),
    }
    if not partial:
        art.final_student_checkpoint = save_checkpoint(art.student, out / "student.ckpt",
                                                       {"seed": art.config.seed})
        save_checkpoint(art.generator, out / "generator.ckpt", {"seed": art.config.seed})
        samples = generate_samples(art.generator, 32, art.config.noise_dim, art.config.seed)
        suffix = "ppm" if samples.ndim == 4 and samples.shape[1] == 3 else "pgm"
        if samples.ndim == 4 and samples.shape[1] not in (1, 3):
            samples = samples[:, :1]
        art.sample_dump = write_pnm(out / f"samples.{suffix}", sample_grid(samples))
        summary["student_checkpoint"] = art.final_student_checkpoint.name
        summary["student_fingerprint"] = param_fingerprint(art.student)
        summary["sample_dump"] = art.sample_dump.name
    write_json(out / "summary.json", summary)
