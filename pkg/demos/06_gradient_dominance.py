"""
Do a few members dictate a codeword's update?
============================================

A codeword's gradient is the sum of its members' gradients. When a handful
of members have large gradients, the sum points wherever they point and the
rest are ignored. This script measures that on a constructed example and on
the toy network right after VQ compression.
"""

import numpy as np

from ssvq.core import rng_for
from ssvq.train import desk_configs, forward_backward, make_task, pretrain, qat_train_vq
from ssvq.vq import VQModel, gradient_dominance_report

# constructed: one member in forty carries 50x the gradient norm
rng = np.random.default_rng(0)
g = rng.normal(size=(320, 4))
g[::40] *= 50
m = VQModel(np.zeros((8, 4)), np.repeat(np.arange(8), 40), (160, 8))
rep = gradient_dominance_report(g.reshape(160, 8), m)
print("constructed:", ", ".join(f"{r['subset']} {r['fraction']:.0%}: {r['cosine']:.3f}" for r in rep.rows()))

# toy network, 20 steps into VQ fine-tuning
task = make_task(seed=0)
cfg, _ = desk_configs(0, steps=20)
r = qat_train_vq(pretrain(task, 0).net, task, 64, 4, cfg)
idx = rng_for(0, "analyze").choice(len(task.X_train), 1024, replace=False)
_, gW, _ = forward_backward(r.net.weights, r.net.biases, task.X_train[idx], task.y_train[idx])
for i, vm in enumerate(r.models):
    rep = gradient_dominance_report(gW[i], vm)
    top, bottom = rep.per_codeword_top[0.10], rep.per_codeword_bottom[0.50]
    both = ~np.isnan(top) & ~np.isnan(bottom)
    print(f"layer {i}:", ", ".join(f"{x['subset']} {x['fraction']:.0%}: {x['cosine']:.3f}" for x in rep.rows()),
          f"| top10 > bottom50 on {np.sum(top[both] > bottom[both])}/{both.sum()} codewords")
