"""Tile-level cycle model of a weight-streaming transformer accelerator.

The modelled machine has an off-chip DRAM channel of fixed bandwidth, an
activation buffer and a weight buffer on chip, and an array of PEs built
from MAC lanes. A GEMM ``(M x K) @ (K x N)`` is split into weight tiles of
``weight_tile_rows`` output rows, each of which must fit in half the weight
buffer (the other half is being filled), so loading tile ``i+1`` overlaps
computing tile ``i``::

    total = fill + sum_i max(compute_i, load_{i+1}) + compute_last + decode_depth

For compressed formats a decoder sits between DRAM and the weight buffer.
It gathers codewords by index and applies the sign mask (mask bit 0 means
two's-complement negation). It runs at stream rate, so it only adds its
pipeline depth once per layer.

DRAM is a constant-bandwidth stream (no row-buffer or refresh effects).
Intermediate activations stay in the activation buffer; only layers marked
``load_input`` read their input from DRAM.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from importlib import resources

import numpy as np

from .errors import BufferOverflow, IndexOutOfRange, MismatchedSpecs

__all__ = [
    "SimConfig",
    "LayerSpec",
    "CycleStats",
    "decode_weight_stream",
    "weight_traffic_bits",
    "bits_per_weight",
    "simulate_layer",
    "simulate",
    "speedup_report",
    "load_presets",
    "preset_layers",
    "layer_from_quantized",
]

FORMATS = ("int8", "vq", "ssvq")


@dataclass(frozen=True)
class SimConfig:
    dram_bits_per_cycle: int = 128
    act_buffer_bytes: int = 512 * 1024
    weight_buffer_bytes: int = 512 * 1024
    num_pes: int = 64
    mac_lanes_per_pe: int = 16
    multipliers_per_lane: int = 16
    decode_words_per_cycle: int = 128
    decode_pipeline_depth: int = 4
    act_bytes: int = 1
    weight_tile_rows: int = 32

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 1 and k != "decode_pipeline_depth":
                raise ValueError(f"{k} must be positive")

    @property
    def macs_per_cycle(self) -> int:
        return self.num_pes * self.mac_lanes_per_pe * self.multipliers_per_lane

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown SimConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    M: int
    K: int
    N: int
    kind: str = "matmul"
    weight_format: str = "int8"
    codebook_k: int = 256
    codebook_d: int = 8
    weights: bool = True
    load_input: bool = False
    tile_rows: int | None = None

    def __post_init__(self):
        if min(self.M, self.K, self.N) < 1:
            raise ValueError(f"{self.name}: GEMM dims must be positive")
        if self.weight_format not in FORMATS:
            raise ValueError(f"unknown weight format {self.weight_format!r}")
        if self.weights and self.weight_format != "int8" and self.K % self.codebook_d:
            raise ValueError(f"{self.name}: codebook d={self.codebook_d} must divide K={self.K}")

    @property
    def macs(self) -> int:
        return self.M * self.K * self.N

    def shape_key(self):
        return (self.name, self.M, self.K, self.N, self.weights, self.load_input)


@dataclass
class CycleStats:
    layer: str
    total_cycles: int = 0
    weight_load_cycles: int = 0
    act_load_cycles: int = 0
    compute_cycles: int = 0
    decode_cycles: int = 0
    weight_bits: int = 0
    act_bits: int = 0
    macs: int = 0
    mac_utilization: float = 0.0
    tiles: int = 0

    @property
    def dram_bits(self) -> int:
        return self.weight_bits + self.act_bits

    def record(self) -> dict:
        out = asdict(self)
        out["dram_bits"] = self.dram_bits
        return out


# -- decode path --------------------------------------------------------------


def decode_weight_stream(codebook_bytes, assignment_bytes, mask_bits, d: int | None = None) -> np.ndarray:
    """Reconstruct int8 weight words the way the hardware decoder does.

    Args:
        codebook_bytes: ``(K, d)`` (or flat with ``d`` given) uint8 in [0, 127].
        assignment_bytes: one codeword index per byte.
        mask_bits: one bit per output word, 1 keeps the value and 0 takes
            the 8-bit two's complement.

    Returns:
        Flat int8 array of ``len(assignment_bytes) * d`` weights.
    """
    cb = np.asarray(codebook_bytes, dtype=np.uint8)
    if cb.ndim == 1:
        if d is None:
            raise ValueError("flat codebook needs d")
        cb = cb.reshape(-1, d)
    if np.any(cb > 127):
        raise ValueError("codebook bytes must have MSB = 0")
    a = np.asarray(assignment_bytes, dtype=np.int64)
    if a.size and (a.min() < 0 or a.max() >= len(cb)):
        raise IndexOutOfRange(f"assignment outside [0, {len(cb)})")
    words = cb[a].ravel()
    mask = np.asarray(mask_bits, dtype=np.uint8).ravel()
    if mask.shape != words.shape:
        raise ValueError(f"{mask.size} mask bits for {words.size} words")
    negated = ((~words).astype(np.uint16) + 1).astype(np.uint8)
    return np.where(mask == 1, words, negated).view(np.int8)


# -- traffic accounting -------------------------------------------------------


def _row_bits(spec: LayerSpec, rows: int) -> int:
    n = rows * spec.K
    if spec.weight_format == "int8":
        return 8 * n
    bits = 8 * (n // spec.codebook_d)
    if spec.weight_format == "ssvq":
        bits += n
    return bits


def _codebook_bits(spec: LayerSpec) -> int:
    return 0 if spec.weight_format == "int8" else spec.codebook_k * spec.codebook_d * 8


def weight_traffic_bits(spec: LayerSpec) -> int:
    """Exact DRAM bits needed to stream a layer's weights once."""
    if not spec.weights:
        return 0
    return _codebook_bits(spec) + _row_bits(spec, spec.N)


def bits_per_weight(spec: LayerSpec) -> Fraction:
    """Weight traffic per weight, codebook included, as an exact fraction."""
    return Fraction(weight_traffic_bits(spec), spec.N * spec.K)


# -- timing -------------------------------------------------------------------


def _cdiv(a: int, b: int) -> int:
    return -(-a // b)


def _tile_rows(spec: LayerSpec, cfg: SimConfig) -> int:
    capacity = cfg.weight_buffer_bytes // 2
    fit = capacity // spec.K
    if spec.tile_rows is not None:
        if spec.tile_rows * spec.K > capacity:
            raise BufferOverflow(
                f"{spec.name}: tile of {spec.tile_rows} rows x {spec.K} bytes exceeds {capacity} bytes"
            )
        return spec.tile_rows
    if fit < 1:
        raise BufferOverflow(f"{spec.name}: a single weight row ({spec.K} bytes) exceeds {capacity} bytes")
    return min(spec.N, fit, cfg.weight_tile_rows)


def _act_rows(spec: LayerSpec, cfg: SimConfig) -> int:
    per_row = (spec.K + spec.N) * cfg.act_bytes
    fit = (cfg.act_buffer_bytes // 2) // per_row
    if fit < 1:
        raise BufferOverflow(f"{spec.name}: one activation row ({per_row} bytes) exceeds the act buffer")
    return min(spec.M, fit)


def simulate_layer(spec: LayerSpec, cfg: SimConfig = SimConfig()) -> CycleStats:
    """Cycle estimate for one GEMM under double-buffered weight streaming."""
    bw = cfg.dram_bits_per_cycle
    stats = CycleStats(spec.name, macs=spec.macs)
    m_rows = _act_rows(spec, cfg)
    m_tiles = [min(m_rows, spec.M - s) for s in range(0, spec.M, m_rows)]

    if spec.load_input:
        stats.act_bits = spec.M * spec.K * cfg.act_bytes * 8
        stats.act_load_cycles = _cdiv(stats.act_bits, bw)

    loads, computes = [], []
    if spec.weights:
        rows = _tile_rows(spec, cfg)
        w_tiles = [min(rows, spec.N - s) for s in range(0, spec.N, rows)]
        cb_bits = _codebook_bits(spec)
        stats.weight_bits = cb_bits
        stats.weight_load_cycles = _cdiv(cb_bits, bw)
        for mt in m_tiles:
            for r in w_tiles:
                bits = _row_bits(spec, r)
                load = _cdiv(bits, bw)
                if spec.weight_format != "int8":
                    dec = _cdiv(r * spec.K, cfg.decode_words_per_cycle)
                    stats.decode_cycles += dec
                    load = max(load, dec)
                stats.weight_bits += bits
                stats.weight_load_cycles += load
                loads.append(load)
                computes.append(_cdiv(mt * r * spec.K, cfg.macs_per_cycle))
    else:
        for mt in m_tiles:
            loads.append(0)
            computes.append(_cdiv(mt * spec.N * spec.K, cfg.macs_per_cycle))

    stats.tiles = len(computes)
    stats.compute_cycles = sum(computes)
    total = stats.act_load_cycles + _cdiv(_codebook_bits(spec) if spec.weights else 0, bw) + loads[0]
    for i in range(len(computes) - 1):
        total += max(computes[i], loads[i + 1])
    total += computes[-1]
    if spec.weights and spec.weight_format != "int8":
        total += cfg.decode_pipeline_depth
    stats.total_cycles = total
    stats.mac_utilization = spec.macs / (total * cfg.macs_per_cycle)
    return stats


def simulate(specs, cfg: SimConfig = SimConfig()) -> list[CycleStats]:
    return [simulate_layer(s, cfg) for s in specs]


def _totals(stats) -> dict:
    keys = ("total_cycles", "weight_load_cycles", "act_load_cycles", "compute_cycles",
            "decode_cycles", "weight_bits", "act_bits", "macs")
    return {k: sum(getattr(s, k) for s in stats) for k in keys}


def speedup_report(baseline, compressed, cfg: SimConfig = SimConfig()) -> dict:
    """Compare two simulations of the same layers.

    ``baseline``/``compressed`` are lists of ``(LayerSpec, CycleStats)``
    pairs. Returns per-layer rows plus an aggregate with cycle speedup,
    weight-traffic ratio (an exact :class:`~fractions.Fraction`) and
    utilization change.
    """
    if len(baseline) != len(compressed):
        raise MismatchedSpecs("baseline and compressed runs cover different layer counts")
    rows = []
    for (bs, bst), (cs, cst) in zip(baseline, compressed):
        if bs.shape_key() != cs.shape_key():
            raise MismatchedSpecs(f"layer {bs.name!r} does not match {cs.name!r}")
        rows.append({
            "layer": bs.name,
            "baseline_cycles": bst.total_cycles,
            "compressed_cycles": cst.total_cycles,
            "speedup": bst.total_cycles / cst.total_cycles,
            "traffic_ratio": (bst.weight_bits / cst.weight_bits) if cst.weight_bits else None,
            "baseline_util": bst.mac_utilization,
            "compressed_util": cst.mac_utilization,
        })
    bt = _totals([s for _, s in baseline])
    ct = _totals([s for _, s in compressed])
    macs = bt["macs"]
    summary = {
        "baseline_cycles": bt["total_cycles"],
        "compressed_cycles": ct["total_cycles"],
        "speedup": bt["total_cycles"] / ct["total_cycles"],
        "baseline_weight_bits": bt["weight_bits"],
        "compressed_weight_bits": ct["weight_bits"],
        "traffic_ratio": Fraction(bt["weight_bits"], ct["weight_bits"]) if ct["weight_bits"] else None,
        "baseline_util": macs / (bt["total_cycles"] * cfg.macs_per_cycle),
        "compressed_util": macs / (ct["total_cycles"] * cfg.macs_per_cycle),
    }
    summary["util_delta"] = summary["compressed_util"] - summary["baseline_util"]
    return {"layers": rows, "summary": summary}


# -- presets and containers ---------------------------------------------------


def load_presets(path=None) -> dict:
    """Read a layer-preset JSON file (the bundled DeiT-Tiny one by default)."""
    if path is None:
        text = resources.files("ssvq").joinpath("data/deit_tiny.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)["presets"]


def preset_layers(names=("layer1", "layer2"), weight_format: str = "int8", codebook_k: int = 256,
                  codebook_d: int = 8, path=None) -> list[LayerSpec]:
    presets = load_presets(path)
    specs = []
    for name in names:
        if name not in presets:
            raise KeyError(f"unknown preset {name!r}; have {sorted(presets)}")
        for entry in presets[name]:
            entry = dict(entry)
            entry["name"] = f"{name}.{entry['name']}"
            specs.append(LayerSpec(weight_format=weight_format, codebook_k=codebook_k,
                                   codebook_d=codebook_d, **entry))
    return specs


def layer_from_quantized(q, M: int, name: str = "layer", int8: bool = False) -> LayerSpec:
    """LayerSpec for a stored layer (``O x I`` weights, ``M`` input rows)."""
    fmt = "int8" if int8 else q.method
    return LayerSpec(name, M=M, K=q.I, N=q.O, weight_format=fmt, codebook_k=q.K, codebook_d=q.d)


def with_format(specs, weight_format: str, **kw) -> list[LayerSpec]:
    return [replace(s, weight_format=weight_format, **kw) for s in specs]
