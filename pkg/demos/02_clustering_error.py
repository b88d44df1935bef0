"""
Clustering error at a matched bit budget
=======================================

Clustering magnitudes with long subvectors and few codewords costs about the
same reconstruction error as plain VQ with short subvectors and many
codewords, at a similar number of bits per weight.
"""

import numpy as np

from ssvq.core import rng_for
from ssvq.signsplit import ssvq_decode, ssvq_encode
from ssvq.storage import cr_ssvq, cr_vq
from ssvq.vq import vq_decode, vq_encode

print(f"CR  vq(d=4, K=64) {cr_vq(256, 256, 4, 64):.2f}   ssvq(d=8, K=16) {cr_ssvq(256, 256, 8, 16):.2f}")
ratios = []
for i in range(5):
    W = rng_for(i, "demo").normal(size=(256, 256))
    mse_vq = np.mean((vq_decode(vq_encode(W, 64, 4, seed=i)) - W) ** 2)
    mse_ss = np.mean((ssvq_decode(ssvq_encode(W, 16, 8, seed=i)) - W) ** 2)
    ratios.append(mse_ss / mse_vq)
    print(f"matrix {i}: vq {mse_vq:.4f}  ssvq {mse_ss:.4f}  ratio {mse_ss / mse_vq:.3f}")
print(f"mean ratio {np.mean(ratios):.3f}")
