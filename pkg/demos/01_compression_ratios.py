"""
How many bits does a compressed layer cost?
==========================================

Counts the three parts of a compressed layer (indices, codebook, sign mask)
and turns them into compression ratios, first for one matrix and then for
whole models.
"""

from ssvq.storage import (
    DEIT_TINY_LINEARS,
    aggregate_cr,
    bit_budget,
    cr_ssvq,
    cr_vq,
    mobilenet_v2_layers,
)

# A single 256x256 layer. VQ with d=4, K=64 against SSVQ with d=8, K=16:
# SSVQ pays one sign bit per weight but needs far fewer index bits.
for method, d, K in (("vq", 4, 64), ("ssvq", 8, 16)):
    b = bit_budget(256, 256, d, K, method)
    print(f"{method:4s} d={d} K={K:3d}  indices {b.b_a:6d}  codebook {b.b_c:5d}  "
          f"signs {b.b_s:6d}  total {b.compressed:6d} bits")
print(f"CR: vq {cr_vq(256, 256, 4, 64):.2f}, ssvq {cr_ssvq(256, 256, 8, 16):.2f}\n")

# Whole DeiT-Tiny (the 48 block linears), one codebook per layer. Codebooks
# are counted at 16 bits per entry here, which is what reproduces the
# published whole-model ratios; the on-disk container uses 8.
print("DeiT-Tiny, 16-bit codebooks")
for method, d, Ks in (("ssvq", 8, (8, 16, 32, 64, 128)), ("vq", 4, (64, 128)), ("vq", 8, (256, 512))):
    row = ", ".join(f"K={K}: {aggregate_cr(DEIT_TINY_LINEARS, d, K, method, q_c=16):.2f}" for K in Ks)
    print(f"  {method} d={d}  {row}")

mbv2 = mobilenet_v2_layers()
print(f"\nMobileNet-V2 convolutions (no stem, no classifier), vq d=4 K=64: "
      f"{aggregate_cr(mbv2, 4, 64, 'vq', q_c=16):.2f}")
