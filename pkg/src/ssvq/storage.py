"""Compression-ratio accounting and the ``.ssvq`` container format.

Layout (little-endian throughout)::

    header   : b"SSVQ" | u16 version | u32 layer_count
    per layer: u8 method (0=vq, 1=ssvq) | u8 flags (bit0: aligned index section)
               u32 O | u32 I | u16 d | u16 K | f64 codebook_scale | u64 payload_bits
               codebook        K*d bytes (ssvq: u8 in [0, 127]; vq: two's-complement i8)
               assignments     N*ceil(log2 K) bits, MSB-first, zero-padded to a byte
               sign mask       O*I bits (ssvq only), row-major, MSB-first, 1 = positive
               aligned indices N bytes (only if flags bit0), one index per byte

``payload_bits`` counts the codebook, packed assignment and sign-mask bits,
excluding padding. It equals the denominator of the compression ratio, so
the file itself serves as the CR oracle. The aligned section is what the
accelerator simulator streams; it is not part of the CR payload.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import as_weight_matrix
from .errors import (
    CorruptHeader,
    IndexOutOfRange,
    InvalidShape,
    NegativeEntry,
    ShapeMismatch,
    TruncatedStream,
    UnsupportedK,
)
from .signsplit import SSVQModel, sign
from .vq import VQModel

__all__ = [
    "BitBudget",
    "index_bits",
    "bit_budget",
    "cr_vq",
    "cr_ssvq",
    "aggregate_cr",
    "DEIT_TINY_LINEARS",
    "mobilenet_v2_layers",
    "quantize_codebook",
    "quantize_codebook_signed",
    "QuantizedLayer",
    "quantize_model",
    "serialize",
    "deserialize",
    "write_container",
    "read_container",
    "write_weights",
    "read_weights",
]

MAGIC = b"SSVQ"
VERSION = 1
_HEADER = struct.Struct("<4sHI")
_LAYER = struct.Struct("<BBIIHHdQ")
_METHODS = {"vq": 0, "ssvq": 1}
_METHOD_NAMES = {v: k for k, v in _METHODS.items()}

WEIGHTS_MAGIC = b"SSVW"
_WHEADER = struct.Struct("<4sHI")
_WDIMS = struct.Struct("<II")


# -- compression ratios -------------------------------------------------------


def index_bits(K: int) -> int:
    """``ceil(log2 K)``: bits needed to address ``K`` codewords (0 when K == 1)."""
    if K < 1:
        raise InvalidShape(f"K must be >= 1, got {K}")
    return (int(K) - 1).bit_length()


@dataclass(frozen=True)
class BitBudget:
    b_f: int
    q_c: int
    b_a: int
    b_c: int
    b_s: int
    n_weights: int = 0

    @property
    def compressed(self) -> int:
        return self.b_a + self.b_c + self.b_s

    @property
    def original(self) -> int:
        return self.n_weights * self.b_f


def _check_layer(O, I, d, K):
    if min(O, I, d, K) < 1:
        raise InvalidShape("O, I, d and K must be positive")
    if (O * I) % d:
        raise InvalidShape(f"d={d} does not divide O*I={O * I}")


def bit_budget(O: int, I: int, d: int, K: int, method: str = "vq", b_f: int = 32,
               q_c: int = 8) -> BitBudget:
    _check_layer(O, I, d, K)
    N = O * I // d
    b_s = O * I if method == "ssvq" else 0
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}")
    return BitBudget(b_f, q_c, N * index_bits(K), K * d * q_c, b_s, O * I)


def cr_vq(O: int, I: int, d: int, K: int, b_f: float = 32, q_c: float = 8) -> float:
    """``d*b_f / (ceil(log2 K) + K*d^2*q_c/(O*I))``."""
    _check_layer(O, I, d, K)
    den = index_bits(K) + K * d * d * q_c / (O * I)
    if den <= 0:
        raise InvalidShape("zero storage cost: CR is unbounded")
    return d * b_f / den


def cr_ssvq(O: int, I: int, d: int, K: int, b_f: float = 32, q_c: float = 8) -> float:
    """``d*b_f / (d + ceil(log2 K) + K*d^2*q_c/(O*I))``; the ``d`` term is the sign mask."""
    _check_layer(O, I, d, K)
    return d * b_f / (d + index_bits(K) + K * d * d * q_c / (O * I))


def aggregate_cr(shapes, d: int, K: int, method: str, b_f: int = 32, q_c: int = 8) -> float:
    """Whole-model CR with one codebook per layer: total dense bits / total compressed bits."""
    dense = compressed = 0
    for O, I in shapes:
        dense += O * I * b_f
        compressed += bit_budget(O, I, d, K, method, b_f, q_c).compressed
    return dense / compressed


# (out, in) of the four linear layers in each of DeiT-Tiny's 12 blocks
DEIT_TINY_LINEARS = [(576, 192), (192, 192), (768, 192), (192, 768)] * 12


def mobilenet_v2_layers(include_stem: bool = False, include_classifier: bool = False) -> list:
    """``(out, in*kh*kw)`` shapes of MobileNet-V2 convolutions (width 1.0)."""
    blocks = [(1, 16, 1), (6, 24, 2), (6, 32, 3), (6, 64, 4), (6, 96, 3), (6, 160, 3), (6, 320, 1)]
    shapes = [(32, 27)] if include_stem else []
    c = 32
    for t, c_out, n in blocks:
        for _ in range(n):
            hidden = c * t
            if t != 1:
                shapes.append((hidden, c))
            shapes.append((hidden, 9))
            shapes.append((c_out, hidden))
            c = c_out
    shapes.append((1280, 320))
    if include_classifier:
        shapes.append((1000, 1280))
    return shapes


# -- codebook quantization ----------------------------------------------------


def quantize_codebook(codebook) -> tuple[np.ndarray, float]:
    """Zero-anchored 7-bit quantization of a non-negative codebook.

    Returns:
        ``(bytes, scale)`` with ``bytes`` uint8 in ``[0, 127]`` and
        ``codebook ~= bytes * scale``. An all-zero codebook gets scale 1.
    """
    cb = np.asarray(codebook, dtype=np.float64)
    if np.any(cb < 0):
        raise NegativeEntry("codebook entries must be non-negative")
    top = float(cb.max()) if cb.size else 0.0
    scale = top / 127 if top > 0 else 1.0
    q = np.clip(np.round(cb / scale), 0, 127).astype(np.uint8)
    return q, scale


def quantize_codebook_signed(codebook) -> tuple[np.ndarray, float]:
    """Symmetric int8 quantization (range ``[-127, 127]``) for VQ codebooks."""
    cb = np.asarray(codebook, dtype=np.float64)
    top = float(np.abs(cb).max()) if cb.size else 0.0
    scale = top / 127 if top > 0 else 1.0
    q = np.clip(np.round(cb / scale), -127, 127).astype(np.int8)
    return q, scale


@dataclass
class QuantizedLayer:
    """One layer as stored on disk: integer codebook, indices and sign mask."""

    method: str
    O: int
    I: int
    d: int
    K: int
    scale: float
    codebook_q: np.ndarray  # (K, d) uint8 (ssvq) or int8 (vq)
    assignments: np.ndarray  # (N,) int64
    signs: np.ndarray | None = None  # (O, I) int8 in {-1, +1}; ssvq only

    @property
    def N(self) -> int:
        return self.O * self.I // self.d

    def budget(self, b_f: int = 32) -> BitBudget:
        return bit_budget(self.O, self.I, self.d, self.K, self.method, b_f, 8)

    def int8_weights(self) -> np.ndarray:
        """Decoded weights in the integer domain (``codeword byte * sign``)."""
        w = self.codebook_q.astype(np.int16)[self.assignments].reshape(self.O, self.I)
        if self.signs is not None:
            w = w * self.signs
        return w.astype(np.int8)

    def decode(self) -> np.ndarray:
        return self.int8_weights().astype(np.float64) * self.scale

    def to_model(self):
        codebook = self.codebook_q.astype(np.float64) * self.scale
        if self.method == "vq":
            return VQModel(codebook, self.assignments.copy(), (self.O, self.I))
        return SSVQModel(codebook, self.assignments.copy(), self.signs.astype(np.float64))

    def __eq__(self, other):
        if not isinstance(other, QuantizedLayer):
            return NotImplemented
        same_signs = (self.signs is None and other.signs is None) or (
            self.signs is not None and other.signs is not None and np.array_equal(self.signs, other.signs)
        )
        return (
            (self.method, self.O, self.I, self.d, self.K, self.scale)
            == (other.method, other.O, other.I, other.d, other.K, other.scale)
            and self.codebook_q.dtype == other.codebook_q.dtype
            and np.array_equal(self.codebook_q, other.codebook_q)
            and np.array_equal(self.assignments, other.assignments)
            and same_signs
        )


def quantize_model(model) -> QuantizedLayer:
    """Quantize a float VQ/SSVQ model's codebook to 8 bits."""
    if isinstance(model, QuantizedLayer):
        return model
    if isinstance(model, SSVQModel):
        model.validate()
        q, scale = quantize_codebook(model.codebook)
        O, I = model.shape
        return QuantizedLayer("ssvq", O, I, model.d, model.K, scale, q,
                              np.asarray(model.assignments, dtype=np.int64), model.signs())
    if isinstance(model, VQModel):
        model.validate()
        q, scale = quantize_codebook_signed(model.codebook)
        O, I = model.shape
        return QuantizedLayer("vq", O, I, model.d, model.K, scale, q,
                              np.asarray(model.assignments, dtype=np.int64))
    raise TypeError(f"cannot quantize {type(model).__name__}")


# -- bit packing --------------------------------------------------------------


def _pack_indices(a: np.ndarray, b: int) -> bytes:
    if b == 0:
        return b""
    bits = np.unpackbits(a.astype(np.uint8)[:, None], axis=1)[:, 8 - b:]
    return np.packbits(bits.ravel()).tobytes()


def _unpack_indices(buf: bytes, n: int, b: int) -> np.ndarray:
    if b == 0:
        return np.zeros(n, dtype=np.int64)
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))
    _check_padding(bits, n * b)
    cols = np.zeros((n, 8), dtype=np.uint8)
    cols[:, 8 - b:] = bits[: n * b].reshape(n, b)
    return np.packbits(cols, axis=1).ravel().astype(np.int64)


def _check_padding(bits: np.ndarray, used: int) -> None:
    if np.any(bits[used:]):
        raise CorruptHeader("non-zero padding bits")


def _nbytes(bits: int) -> int:
    return (bits + 7) // 8


def pack_sign_mask(signs) -> bytes:
    """Pack a ``{-1, +1}`` matrix into bytes, row-major, MSB first, 1 = positive."""
    return np.packbits((np.asarray(signs) > 0).ravel()).tobytes()


def unpack_sign_mask(buf: bytes, O: int, I: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))
    _check_padding(bits, O * I)
    return np.where(bits[: O * I].reshape(O, I) == 1, 1, -1).astype(np.int8)


# -- container ----------------------------------------------------------------


def _layer_record(q: QuantizedLayer, aligned: bool) -> bytes:
    if q.K > 256:
        raise UnsupportedK(f"K={q.K} exceeds the 8-bit index format (max 256)")
    if q.N == 0 or q.N * q.d != q.O * q.I:
        raise ShapeMismatch("layer dimensions are inconsistent")
    if len(q.assignments) != q.N:
        raise ShapeMismatch(f"expected {q.N} assignments, got {len(q.assignments)}")
    if q.assignments.min() < 0 or q.assignments.max() >= q.K:
        raise IndexOutOfRange(f"assignment outside [0, {q.K})")
    b = index_bits(q.K)
    cb = np.ascontiguousarray(q.codebook_q).reshape(q.K, q.d)
    if q.method == "ssvq":
        if cb.dtype != np.uint8 or cb.max(initial=0) > 127:
            raise ValueError("ssvq codebook bytes must be uint8 in [0, 127]")
        if q.signs is None or q.signs.shape != (q.O, q.I):
            raise ShapeMismatch("ssvq layer needs an (O, I) sign mask")
    elif cb.dtype != np.int8:
        raise ValueError("vq codebook bytes must be int8")
    parts = [cb.tobytes(), _pack_indices(q.assignments, b)]
    payload_bits = q.K * q.d * 8 + q.N * b
    if q.method == "ssvq":
        parts.append(pack_sign_mask(q.signs))
        payload_bits += q.O * q.I
    if aligned:
        parts.append(q.assignments.astype(np.uint8).tobytes())
    head = _LAYER.pack(_METHODS[q.method], int(aligned), q.O, q.I, q.d, q.K, q.scale, payload_bits)
    return head + b"".join(parts)


def serialize(models, aligned: bool = False) -> bytes:
    """Serialize one model or a list of models (float or already quantized)."""
    if not isinstance(models, (list, tuple)):
        models = [models]
    layers = [quantize_model(m) for m in models]
    body = b"".join(_layer_record(q, aligned) for q in layers)
    return _HEADER.pack(MAGIC, VERSION, len(layers)) + body


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedStream(f"need {n} bytes at offset {self.pos}, stream has {len(self.data)}")
        out = bytes(self.data[self.pos : self.pos + n])
        self.pos += n
        return out


def deserialize(data: bytes, with_flags: bool = False):
    """Parse a container into :class:`QuantizedLayer` records.

    With ``with_flags=True`` returns ``(layers, aligned_flags)``.
    """
    r = _Reader(data)
    magic, version, count = _HEADER.unpack(r.take(_HEADER.size))
    if magic != MAGIC:
        raise CorruptHeader(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptHeader(f"unsupported version {version}")
    layers, flags = [], []
    for _ in range(count):
        method, flag, O, I, d, K, scale, payload_bits = _LAYER.unpack(r.take(_LAYER.size))
        if method not in _METHOD_NAMES or flag & ~1:
            raise CorruptHeader(f"bad method/flags {method}/{flag}")
        if min(O, I, d, K) < 1 or (O * I) % d:
            raise CorruptHeader(f"bad layer dims O={O} I={I} d={d} K={K}")
        if K > 256:
            raise UnsupportedK(f"K={K} exceeds the 8-bit index format")
        name = _METHOD_NAMES[method]
        N, b = O * I // d, index_bits(K)
        expected = K * d * 8 + N * b + (O * I if name == "ssvq" else 0)
        if payload_bits != expected:
            raise CorruptHeader(f"payload_bits {payload_bits} != {expected}")
        dtype = np.uint8 if name == "ssvq" else np.int8
        cb = np.frombuffer(r.take(K * d), dtype=dtype).reshape(K, d).copy()
        if name == "ssvq" and cb.max(initial=0) > 127:
            raise CorruptHeader("codebook byte has MSB set")
        a = _unpack_indices(r.take(_nbytes(N * b)), N, b)
        if a.max(initial=0) >= K:
            raise CorruptHeader("assignment index >= K")
        signs = unpack_sign_mask(r.take(_nbytes(O * I)), O, I) if name == "ssvq" else None
        if flag & 1:
            aligned = np.frombuffer(r.take(N), dtype=np.uint8).astype(np.int64)
            if not np.array_equal(aligned, a):
                raise CorruptHeader("aligned index section disagrees with packed section")
        layers.append(QuantizedLayer(name, O, I, d, K, scale, cb, a, signs))
        flags.append(bool(flag & 1))
    if r.pos != len(r.data):
        raise CorruptHeader(f"{len(r.data) - r.pos} trailing bytes")
    return (layers, flags) if with_flags else layers


def write_container(path, models, aligned: bool = False) -> bytes:
    data = serialize(models, aligned)
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def read_container(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def aligned_payload_bits(q: QuantizedLayer) -> int:
    """Bits the accelerator streams for a layer: codebook, one byte per index, sign mask."""
    bits = q.K * q.d * 8 + q.N * 8
    if q.method == "ssvq":
        bits += _nbytes(q.O * q.I) * 8
    return bits


# -- dense weight files -------------------------------------------------------


def write_weights(path, matrices) -> None:
    """Write matrices as ``b"SSVW" | u16 version | u32 count`` then ``u32 O, u32 I, f32[O*I]`` each."""
    with open(path, "wb") as fh:
        fh.write(_WHEADER.pack(WEIGHTS_MAGIC, 1, len(matrices)))
        for W in matrices:
            W = as_weight_matrix(W)
            fh.write(_WDIMS.pack(*W.shape))
            fh.write(W.astype("<f4").tobytes())


def read_weights(path) -> list:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    magic, version, count = _WHEADER.unpack(r.take(_WHEADER.size))
    if magic != WEIGHTS_MAGIC or version != 1:
        raise CorruptHeader(f"not a weights file (magic {magic!r}, version {version})")
    out = []
    for _ in range(count):
        O, I = _WDIMS.unpack(r.take(_WDIMS.size))
        if O < 1 or I < 1:
            raise CorruptHeader(f"bad matrix dims {O}x{I}")
        out.append(np.frombuffer(r.take(4 * O * I), dtype="<f4").astype(np.float64).reshape(O, I))
    if r.pos != len(r.data):
        raise CorruptHeader("trailing bytes in weights file")
    return out
