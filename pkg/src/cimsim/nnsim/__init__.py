"""Quantized-network mapping and noisy bit-serial inference."""

from .quant import QuantSpec, quantize_weights, dequantize_weights, requantize, quantize_input
from .container import read_cimw, write_cimw
from .mapping import MappedLayer, MappedNetwork, map_network, inject_static
from .forward import int_forward, noisy_forward

__all__ = [
    "QuantSpec",
    "quantize_weights",
    "dequantize_weights",
    "requantize",
    "quantize_input",
    "read_cimw",
    "write_cimw",
    "MappedLayer",
    "MappedNetwork",
    "map_network",
    "inject_static",
    "int_forward",
    "noisy_forward",
]
