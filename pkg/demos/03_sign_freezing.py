"""
Watching signs oscillate and freeze
==================================

Fine-tunes the toy classifier in SSVQ form twice, with and without the
freezing rule, and prints how many signs flip per step and how many end up
frozen.
"""

from ssvq.freeze import FreezeConfig
from ssvq.train import desk_configs, make_task, pretrain, qat_train_ssvq

task = make_task(seed=0)
pre = pretrain(task, seed=0)
print(f"float accuracy after pretraining: {pre.final_val_acc:.4f}")

cfg, freeze = desk_configs(seed=0)
runs = {
    "freezing": qat_train_ssvq(pre.net, task, 16, 8, 1.0, cfg, freeze),
    "no freezing": qat_train_ssvq(pre.net, task, 16, 8, 1.0, cfg, FreezeConfig(interval=freeze.interval, enabled=False)),
}
for name, r in runs.items():
    flips = [rec["sign_flip_count"] for rec in r.trace]
    print(f"\n{name}: accuracy {r.initial_val_acc:.4f} -> {r.final_val_acc:.4f}")
    for t in range(0, cfg.steps, 200):
        window = flips[t:t + 200]
        print(f"  steps {t + 1:4d}-{t + len(window):4d}: {sum(window):5d} flips, "
              f"frozen {r.trace[t + len(window) - 1]['frozen_count']}")

log = runs["freezing"].freeze_log
if log:
    e = log[0]
    print(f"\nfirst freeze: step {e.iteration}, layer {e.layer} ({e.row}, {e.col}) "
          f"-> {e.frozen_sign:+d} after {e.p_c} positive / {e.n_c} negative votes")
