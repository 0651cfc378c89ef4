"""
Checkpoints, fingerprints and the command line
==============================================

Save a network, reload it, and check that its fingerprint and predictions
survive. Then drive the same pipeline through the command line entry point.
"""

import tempfile
from pathlib import Path

import numpy as np

from ddad.checkpoint import read_checkpoint, save_checkpoint
from ddad.cli import main
from ddad.models import build_student, param_fingerprint

workdir = Path(tempfile.mkdtemp())
net = build_student((8,), 3, seed=4)
path = save_checkpoint(net, workdir / "student.ckpt", {"note": "demo"})
loaded, meta = read_checkpoint(path)
print("metadata", meta)
print("same fingerprint", param_fingerprint(net) == param_fingerprint(loaded))
x = np.random.default_rng(0).normal(size=(5, 8))
print("same outputs", np.array_equal(net.eval()(x).data, loaded.eval()(x).data))

# %%
# A corrupted byte is caught by the trailing checksum.
blob = bytearray(path.read_bytes())
blob[100] ^= 1
(workdir / "bad.ckpt").write_bytes(bytes(blob))
try:
    read_checkpoint(workdir / "bad.ckpt")
except OSError as exc:
    print("rejected:", exc)

# %%
# The command line: pretrain, distill one seed, then summarize.
cfg = workdir / "small.cfg"
cfg.write_text("input_dim = 16\nepochs = 3\nsteps_per_epoch = 10\n"
               f"output_dir = {workdir / 'out'}\n")
main(["pretrain", "--config", str(cfg)])
main(["distill", "--config", str(cfg), "--seed", "1"])
main(["report", str(workdir / "out" / "runs")])
