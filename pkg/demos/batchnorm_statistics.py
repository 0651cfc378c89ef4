"""
Batch-norm statistics as a training signal
==========================================

A trained teacher stores per-channel running means and variances. A
batch of inputs can be scored by how far its own batch statistics drift
from those stored values, measured as a Gaussian KL per channel.
"""

import numpy as np

from ddad.config import ExperimentConfig
from ddad.data import make_dataset
from ddad.losses import bn_divergence_loss
from ddad.models import build_teacher, forward_with_bn_capture
from ddad.tensor import no_grad
from ddad.trainer import evaluate_accuracy, pretrain_teacher

cfg = ExperimentConfig(input_dim=16, samples_per_class=200, test_samples_per_class=100)
train, test = make_dataset(cfg)
teacher, _ = pretrain_teacher(train, test, build_teacher((16,), 4), epochs=10)
print("teacher accuracy", evaluate_accuracy(teacher, test))

# %%
# Freeze the teacher: in training mode it still measures batch statistics,
# but it keeps normalizing with what it stored.
teacher.freeze().train()
rng = np.random.default_rng(1)

for name, batch in [("real data", test.inputs[:128]),
                    ("uniform noise", rng.uniform(-1, 1, (128, 16))),
                    ("zeros + tiny noise", 0.01 * rng.normal(size=(128, 16)))]:
    with no_grad():
        _, records = forward_with_bn_capture(teacher, batch)
    print(f"{name:>20}: statistics divergence {bn_divergence_loss(records).item():.4f}")

# %%
# Real data matches the stored statistics far better than noise does, which
# is what lets a generator learn from the teacher alone.
teacher.eval()
