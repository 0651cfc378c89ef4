"""
Switching each critic off
=========================

Run the four corners of the (delta, gamma) grid for a few seeds and
compare median student accuracy. The (0, 0) corner trains the student on
an untrained generator.
"""

from ddad import experiment as ex
from ddad.config import ExperimentConfig
from ddad.data import make_dataset
from ddad.models import build_teacher
from ddad.trainer import pretrain_teacher

cfg = ExperimentConfig(seeds=(1, 2, 3)).with_distill(epochs=12)
train, test = make_dataset(cfg)
teacher, _ = pretrain_teacher(train, test, build_teacher(cfg.input_shape, cfg.num_classes),
                              epochs=cfg.teacher_epochs)

# %%
rows = ex.ablate(cfg, teacher, write=False)
print(ex.ablation_table(rows))
