"""Noise-analysis toolkit for RRAM compute-in-memory inference.

The package models a virtual multi-module RRAM test chip read through
tunable flash ADCs, calibrates ADC references at global / per-module /
per-ADC granularity, extracts per-cell effective bits and residual error
distributions, and injects the resulting static and dynamic noise into
quantized neural networks for supervised and reinforcement-learning
evaluation.
"""

__version__ = "0.1.0"
