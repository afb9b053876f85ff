"""Symmetric uniform quantization with power-of-two layer scales.

Weights quantize to signed integers in [-2^(b-1), 2^(b-1)-1], stored as
offset-binary unsigned codes (code = q + 2^(b-1)); activations are
unsigned a-bit codes.  All scales are powers of two so integer and
float evaluation of the same network agree bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuantSpec:
    """Bit widths and per-layer scales of a quantized network.

    ``layer_scales`` are the weight full-scale values (power of two);
    ``out_shifts`` are the per-layer right-shifts applied when
    requantizing accumulator outputs back to a-bit activations (the last
    layer keeps raw logits and its shift is ignored).
    """

    w_bits: int
    a_bits: int
    layer_scales: tuple
    out_shifts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.w_bits < 1 or self.a_bits < 1:
            raise ValueError("bit widths must be >= 1")
        if any(s <= 0 for s in self.layer_scales):
            raise ValueError("layer scales must be positive")

    @property
    def zero_code(self) -> int:
        return 1 << (self.w_bits - 1)

    @property
    def a_max(self) -> int:
        return (1 << self.a_bits) - 1

    def w_lsb(self, layer: int) -> float:
        return self.layer_scales[layer] / (1 << (self.w_bits - 1))


def pow2_scale(max_abs: float) -> float:
    """Smallest power of two >= max_abs (1.0 for an all-zero tensor)."""
    if max_abs <= 0:
        return 1.0
    return 2.0 ** math.ceil(math.log2(max_abs))


def quantize_weights(w: np.ndarray, spec: QuantSpec, layer: int = 0) -> np.ndarray:
    """Quantize one layer's weights to offset-binary unsigned codes."""
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    half = 1 << (spec.w_bits - 1)
    lsb = spec.w_lsb(layer)
    q = np.clip(np.round(w / lsb), -half, half - 1).astype(np.int64)
    return (q + half).astype(np.uint16)


def dequantize_weights(codes: np.ndarray, spec: QuantSpec, layer: int = 0) -> np.ndarray:
    half = 1 << (spec.w_bits - 1)
    return (codes.astype(np.int64) - half) * spec.w_lsb(layer)


def quantize_input(x: np.ndarray, a_bits: int) -> np.ndarray:
    """Map floats in [0, 1] to unsigned a-bit activation codes."""
    amax = (1 << a_bits) - 1
    return np.clip(np.round(np.asarray(x, dtype=float) * (1 << a_bits)), 0, amax).astype(np.int64)


def requantize(acc: np.ndarray, shift: int, a_bits: int) -> np.ndarray:
    """Accumulator -> a-bit activation codes via a power-of-two shift."""
    amax = (1 << a_bits) - 1
    scaled = np.asarray(acc, dtype=float) * (2.0 ** (-shift))
    return np.clip(np.round(scaled), 0, amax).astype(np.int64)
