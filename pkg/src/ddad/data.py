"""Synthetic labelled datasets standing in for real image corpora.

All inputs lie in [-1, 1] so a tanh generator can reach them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError


@dataclass
class SyntheticDataset:
    inputs: np.ndarray
    labels: np.ndarray
    split: str

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def batches(self, batch_size: int, rng: np.random.Generator | None = None):
        """Yield (inputs, labels) minibatches, shuffled when ``rng`` is given."""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start:start + batch_size]
            yield self.inputs[idx], self.labels[idx]


def _balanced_labels(num_classes: int, per_class: int) -> np.ndarray:
    return np.repeat(np.arange(num_classes), per_class)


def blob_centers(num_classes: int, dim: int, rng: np.random.Generator,
                 radius: float = 0.6) -> np.ndarray:
    """Class means in random directions on a sphere of the given radius."""
    centers = rng.standard_normal((num_classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    return radius * centers


def _blobs(centers, labels, noise, rng):
    x = centers[labels] + noise * rng.standard_normal((labels.size, centers.shape[1]))
    return np.clip(x, -1.0, 1.0)


def _rings(num_classes, labels, noise, rng):
    radii = 0.9 * (labels + 1) / num_classes
    r = radii + noise * rng.standard_normal(labels.size)
    theta = rng.uniform(0.0, 2 * np.pi, labels.size)
    return np.clip(np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1), -1.0, 1.0)


def _textures(num_classes, labels, size, channels, noise, rng):
    """Oriented stripe patterns; each class has its own angle and frequency."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    angles = np.pi * np.arange(num_classes) / num_classes
    freqs = 2.0 + (np.arange(num_classes) % 3)
    out = np.empty((labels.size, channels, size, size))
    for i, k in enumerate(labels):
        phase = rng.uniform(0, 2 * np.pi)
        proj = np.cos(angles[k]) * xx + np.sin(angles[k]) * yy
        pattern = 0.7 * np.sin(2 * np.pi * freqs[k] * proj + phase)
        out[i] = pattern + noise * rng.standard_normal((channels, size, size))
    return np.clip(out, -1.0, 1.0)


def make_dataset(cfg: ExperimentConfig, seed: int | None = None):
    """Return (train, test) splits for the configured task.

    Both splits share class structure (drawn from ``seed``) and use independent
    sample streams, so they never share a sample.
    """
    seed = cfg.data_seed if seed is None else seed
    k = cfg.num_classes
    if k < 2:
        raise ConfigError("num_classes must be at least 2")
    if cfg.samples_per_class < 1 or cfg.test_samples_per_class < 1:
        raise ConfigError("sample counts must be positive")
    if cfg.noise < 0:
        raise ConfigError("noise must be nonnegative")
    structure = np.random.default_rng([seed, 0])
    centers = blob_centers(k, cfg.input_dim, structure) if cfg.task == "blobs" else None
    splits = []
    for stream, (name, per_class) in enumerate(
            [("train", cfg.samples_per_class), ("test", cfg.test_samples_per_class)], 1):
        rng = np.random.default_rng([seed, stream])
        labels = _balanced_labels(k, per_class)
        if cfg.task == "blobs":
            x = _blobs(centers, labels, cfg.noise, rng)
        elif cfg.task == "rings":
            x = _rings(k, labels, cfg.noise, rng)
        elif cfg.task == "tiny-images":
            x = _textures(k, labels, cfg.image_size, cfg.image_channels, cfg.noise, rng)
        else:
            raise ConfigError(f"unknown task {cfg.task!r}")
        perm = rng.permutation(labels.size)
        splits.append(SyntheticDataset(x[perm], labels[perm], name))
    return splits[0], splits[1]
