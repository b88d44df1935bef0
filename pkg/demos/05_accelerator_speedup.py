"""
Streaming DeiT-Tiny weights through the accelerator model
========================================================

Runs the first two transformer layers with int8 weights and with byte-
aligned SSVQ weights (K=256, d=8: one index byte per 8 weights plus one
sign bit per weight) and compares cycles layer by layer.
"""

from ssvq.hwsim import SimConfig, preset_layers, simulate, speedup_report

cfg = SimConfig()
base = preset_layers(["layer1", "layer2"], "int8")
comp = preset_layers(["layer1", "layer2"], "ssvq", 256, 8)
rep = speedup_report(list(zip(base, simulate(base, cfg))), list(zip(comp, simulate(comp, cfg))), cfg)

print(f"{'layer':24s} {'int8':>8s} {'ssvq':>8s} {'speedup':>8s}")
for r in rep["layers"]:
    print(f"{r['layer']:24s} {r['baseline_cycles']:8d} {r['compressed_cycles']:8d} {r['speedup']:8.2f}")
s = rep["summary"]
print(f"\ntotal {s['baseline_cycles']} -> {s['compressed_cycles']} cycles, speedup {s['speedup']:.2f}")
print(f"weight traffic ratio {s['traffic_ratio']} = {float(s['traffic_ratio']):.3f}")
print(f"MAC utilization {s['baseline_util']:.1%} -> {s['compressed_util']:.1%}")

# doubling the DRAM bandwidth shrinks the gap: the int8 run was memory bound
wide = SimConfig(dram_bits_per_cycle=256)
rep2 = speedup_report(list(zip(base, simulate(base, wide))), list(zip(comp, simulate(comp, wide))), wide)
print(f"with 256 bits/cycle the speedup is {rep2['summary']['speedup']:.2f}")
