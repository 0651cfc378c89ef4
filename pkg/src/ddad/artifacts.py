"""On-disk run outputs: metrics CSV, JSON summary, PGM/PPM sample grids, SVG plots."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .checkpoint import atomic_write_bytes

CSV_HEADER = ("epoch", "gen_loss", "bn_term", "disc_term", "student_loss", "test_acc",
              "seconds", "seed")


@dataclass
class MetricsRecord:
    epoch: int
    generator_loss: float
    bn_term: float
    discrepancy_term: float
    student_loss: float
    student_test_accuracy: float
    wallclock_seconds: float
    seed: int

    def row(self) -> list[str]:
        return [str(self.epoch), repr(self.generator_loss), repr(self.bn_term),
                repr(self.discrepancy_term), repr(self.student_loss),
                repr(self.student_test_accuracy), f"{self.wallclock_seconds:.3f}",
                str(self.seed)]

    @classmethod
    def from_row(cls, row: dict) -> "MetricsRecord":
        return cls(int(row["epoch"]), float(row["gen_loss"]), float(row["bn_term"]),
                   float(row["disc_term"]), float(row["student_loss"]),
                   float(row["test_acc"]), float(row["seconds"]), int(row["seed"]))


def write_text_atomic(path, text: str) -> Path:
    atomic_write_bytes(path, text.encode())
    return Path(path)


def write_metrics_csv(path, records: list[MetricsRecord]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(rec.row())
    return write_text_atomic(path, buf.getvalue())


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [MetricsRecord.from_row(row) for row in reader]


def write_steps_csv(path, steps: list[tuple]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("epoch", "stage", "step", "loss"))
    for epoch, stage, step, loss in steps:
        writer.writerow((epoch, stage, step, repr(loss)))
    return write_text_atomic(path, buf.getvalue())


def write_json(path, payload: dict) -> Path:
    return write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def records_as_dicts(records: list[MetricsRecord]) -> list[dict]:
    return [asdict(r) for r in records]


# -- images -------------------------------------------------------------------

def _to_bytes(x: np.ndarray) -> np.ndarray:
    return np.clip(np.round((x + 1.0) * 127.5), 0, 255).astype(np.uint8)


def sample_grid(samples: np.ndarray, columns: int = 8, pad: int = 1) -> np.ndarray:
    """Tile N x C x H x W samples in [-1, 1] into one H' x W' x C uint8 image.

    Flat samples (N x D) are drawn as one row of pixels each.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 2:
        return _to_bytes(samples)[:, :, None]
    n, c, h, w = samples.shape
    columns = max(1, min(columns, n))
    rows = -(-n // columns)
    grid = np.zeros((rows * (h + pad) + pad, columns * (w + pad) + pad, c), dtype=np.uint8)
    tiles = _to_bytes(samples).transpose(0, 2, 3, 1)
    for i in range(n):
        r, col = divmod(i, columns)
        y, x = pad + r * (h + pad), pad + col * (w + pad)
        grid[y:y + h, x:x + w] = tiles[i]
    return grid


def write_pnm(path, image: np.ndarray) -> Path:
    """Binary PGM (one channel) or PPM (three channels)."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim == 2:
        image = image[:, :, None]
    h, w, c = image.shape
    if c == 1:
        magic = b"P5"
    elif c == 3:
        magic = b"P6"
    else:
        raise ValueError(f"PNM needs 1 or 3 channels, got {c}")
    header = magic + f"\n{w} {h}\n255\n".encode()
    atomic_write_bytes(path, header + image.tobytes())
    return Path(path)


def read_pnm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    magic, rest = blob[:2], blob[2:]
    fields, pos = [], 0
    while len(fields) < 3:
        while rest[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not rest[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(rest[start:pos]))
    pos += 1
    w, h, _ = fields
    c = {b"P5": 1, b"P6": 3}[magic]
    return np.frombuffer(rest[pos:], dtype=np.uint8).reshape(h, w, c)


# -- plots ----------------------------------------------------------------------

def svg_line_plot(series: dict[str, list[float]], title: str, width: int = 480,
                  height: int = 300) -> str:
    """A dependency-free SVG line chart of one or more series."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    values = [v for ys in series.values() for v in ys]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1.0
    longest = max((len(ys) for ys in series.values()), default=1)
    m = 40
    sx = (width - 2 * m) / max(1, longest - 1)
    sy = (height - 2 * m) / (hi - lo)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{m}" y="20" font-size="14">{escape(title)}</text>',
             f'<rect x="{m}" y="{m}" width="{width - 2 * m}" height="{height - 2 * m}" '
             f'fill="none" stroke="#888"/>',
             f'<text x="4" y="{m + 4}" font-size="10">{hi:.3g}</text>',
             f'<text x="4" y="{height - m}" font-size="10">{lo:.3g}</text>']
    for j, (name, ys) in enumerate(series.items()):
        color = colors[j % len(colors)]
        pts = " ".join(f"{m + i * sx:.1f},{height - m - (y - lo) * sy:.1f}"
                       for i, y in enumerate(ys))
        parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        parts.append(f'<text x="{width - m + 2}" y="{m + 12 * (j + 1)}" font-size="10" '
                     f'fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
