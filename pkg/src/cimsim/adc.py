"""4-bit flash ADC with a tunable reference ladder and comparator mismatch.

The converter holds 15 comparators whose references form an arithmetic
ladder (offset + j * step).  Decoding counts how many effective
references the input voltage clears, giving codes 0..15.  Mismatch
splits into a static per-comparator offset (fixed per ADC instance) and
an i.i.d. per-conversion threshold noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_COMPARATORS = 15
N_STATES = 16

#: Default mismatch magnitudes, as fractions of the reference step.
#: Calibrated so per-module reference tuning leaves a visible noise
#: penalty that per-ADC tuning recovers.
SIGMA_STATIC_FRACTION = 0.75
SIGMA_DYNAMIC_FRACTION = 0.20


@dataclass(frozen=True)
class AdcRefConfig:
    """Reference-generator tunables: offset, step size, BL target voltage.

    ``v_blt`` does not move the comparator ladder; it sets the full-scale
    voltage of the analog front end (see the crossbar transfer function).
    """

    offset: float
    step: float
    v_blt: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")
        if self.v_blt <= self.offset:
            raise ValueError("v_blt must exceed offset")

    def to_dict(self) -> dict:
        return {"offset": self.offset, "step": self.step, "v_blt": self.v_blt}

    @classmethod
    def from_dict(cls, d: dict) -> "AdcRefConfig":
        return cls(offset=d["offset"], step=d["step"], v_blt=d["v_blt"])


@dataclass(frozen=True)
class ComparatorMismatch:
    """Per-comparator static offsets plus per-conversion noise sigma."""

    static_offsets: np.ndarray
    dynamic_sigma: float

    def __post_init__(self):
        arr = np.asarray(self.static_offsets, dtype=float)
        if arr.shape != (N_COMPARATORS,):
            raise ValueError(f"need exactly {N_COMPARATORS} static offsets")
        if self.dynamic_sigma < 0:
            raise ValueError("dynamic_sigma must be >= 0")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "static_offsets", arr)

    @classmethod
    def zero(cls) -> "ComparatorMismatch":
        return cls(np.zeros(N_COMPARATORS), 0.0)


def thresholds(cfg: AdcRefConfig) -> np.ndarray:
    """The 15 nominal comparator references, strictly increasing."""
    return cfg.offset + cfg.step * np.arange(N_COMPARATORS)


def sample_mismatch(
    adc_sigma_static: float, dynamic_sigma: float, rng: np.random.Generator
) -> ComparatorMismatch:
    """Draw one ADC instance's mismatch realization."""
    if adc_sigma_static < 0 or dynamic_sigma < 0:
        raise ValueError("mismatch sigmas must be >= 0")
    if adc_sigma_static == 0.0:
        offs = np.zeros(N_COMPARATORS)
    else:
        offs = rng.normal(0.0, adc_sigma_static, N_COMPARATORS)
    return ComparatorMismatch(offs, dynamic_sigma)


def decode_with_noise(v, cfg: AdcRefConfig, mismatch: ComparatorMismatch, noise) -> np.ndarray:
    """Decode voltages against perturbed references; pure given ``noise``.

    ``v`` may be scalar or any array shape; ``noise`` must broadcast to
    ``v.shape + (15,)`` and holds the per-conversion threshold noise in
    volts.
    """
    v = np.asarray(v, dtype=float)
    eff = thresholds(cfg) + mismatch.static_offsets + np.asarray(noise, dtype=float)
    code = np.sum(v[..., None] >= eff, axis=-1)
    return code


def decode(v, cfg: AdcRefConfig, mismatch: ComparatorMismatch, rng: np.random.Generator):
    """Decode a voltage (or array of voltages) to codes in 0..15."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("input voltage must be finite")
    if mismatch.dynamic_sigma == 0.0:
        noise = np.zeros(v.shape + (N_COMPARATORS,))
    else:
        noise = rng.normal(0.0, mismatch.dynamic_sigma, v.shape + (N_COMPARATORS,))
    code = decode_with_noise(v, cfg, mismatch, noise)
    if v.ndim == 0:
        return int(code)
    return code


@dataclass(frozen=True)
class AdcParams:
    """Bundle of defaults used when instantiating a module's 8 ADC lanes."""

    cfg: AdcRefConfig = field(default_factory=lambda: AdcRefConfig(offset=0.04, step=0.03, v_blt=1.0))
    sigma_static: float | None = None
    sigma_dynamic: float | None = None

    def resolved_sigmas(self) -> tuple[float, float]:
        stat = self.sigma_static
        dyn = self.sigma_dynamic
        if stat is None:
            stat = SIGMA_STATIC_FRACTION * self.cfg.step
        if dyn is None:
            dyn = SIGMA_DYNAMIC_FRACTION * self.cfg.step
        return stat, dyn
