"""
VQ against SSVQ on the toy task
==============================

Pretrains one float network per seed, then fine-tunes three compressed
copies: VQ (d=4, K=64), SSVQ with freezing and SSVQ without (both d=8,
K=16). Pass a seed count on the command line (default 10).
"""

import sys

import numpy as np
from scipy import stats

from ssvq.freeze import FreezeConfig
from ssvq.train import desk_configs, make_task, pretrain, qat_train_ssvq, qat_train_vq

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 10
acc = []
for seed in range(n_seeds):
    task = make_task(seed=seed)
    pre = pretrain(task, seed).net
    cfg, freeze = desk_configs(seed)
    row = [
        qat_train_vq(pre, task, 64, 4, cfg).final_val_acc,
        qat_train_ssvq(pre, task, 16, 8, 1.0, cfg, freeze).final_val_acc,
        qat_train_ssvq(pre, task, 16, 8, 1.0, cfg, FreezeConfig(interval=freeze.interval, enabled=False)).final_val_acc,
    ]
    acc.append(row)
    print(f"seed {seed}: vq {row[0]:.4f}  ssvq {row[1]:.4f}  ssvq/no-freeze {row[2]:.4f}")

acc = np.array(acc)
print("\nmean  vq {:.4f}  ssvq {:.4f}  ssvq/no-freeze {:.4f}".format(*acc.mean(axis=0)))
if n_seeds > 1:
    p = stats.ttest_rel(acc[:, 1], acc[:, 0], alternative="greater").pvalue
    print(f"paired one-sided t-test, ssvq > vq: p = {p:.2e}")
