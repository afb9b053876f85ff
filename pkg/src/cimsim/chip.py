"""Virtual chip: a set of modules plus their calibration state.

This is the orchestration layer used by the pipeline, the drift
experiments, and the task harnesses: build N modules, tune references
at a scope, extract noise profiles, and (for drift studies) stress the
cells and re-extract with the calibration held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import calib as _calib
from . import effbits as _effbits
from .adc import AdcParams
from .calib import (
    GLOBAL,
    PER_ADC,
    PER_MODULE,
    BinMap,
    SearchGrid,
    TunedRef,
    characterize,
    tune_from_traces,
    unit_key,
)
from .crossbar import N_LANES, CrossbarModule, TransferParams, apply_stress_to_module, build_module, random_bit_pattern
from .device import CellDistParams, DriftParams, StressEvent
from .effbits import NoiseProfile, eb_statistics, fit_module
from .nnsim.mapping import MappedNetwork, inject_static, map_network, with_profiles
from .streams import substream

DEFAULT_N_MODULES = 10


@dataclass
class VirtualChip:
    """Modules plus the tuning applied to their ADC lanes."""

    modules: list[CrossbarModule]
    scope: str = PER_MODULE
    tuned: dict[str, TunedRef] | None = None
    seed: int = 0

    def binmaps_for(self, module: CrossbarModule) -> list[BinMap]:
        """Per-lane binmaps from the tuning state (identity-ish if untuned)."""
        if self.tuned is None:
            raise ValueError("chip has not been calibrated")
        maps = []
        for lane in range(N_LANES):
            maps.append(self._unit_for(module.module_id, lane).binmap)
        return maps

    def _unit_for(self, module_id: int, lane: int) -> TunedRef:
        assert self.tuned is not None
        if self.scope == PER_ADC:
            return self.tuned[unit_key(PER_ADC, module_id, lane)]
        if self.scope == PER_MODULE:
            return self.tuned[unit_key(PER_MODULE, module_id)]
        return self.tuned[unit_key(GLOBAL)]


def build_chip(
    seed: int,
    n_modules: int = DEFAULT_N_MODULES,
    dist: CellDistParams | None = None,
    adc_params: AdcParams | None = None,
    xfer: TransferParams | None = None,
    p_lrs: float = 0.5,
) -> VirtualChip:
    """Build n modules with 50/50 random patterns under the master seed."""
    dist = dist or CellDistParams()
    adc_params = adc_params or AdcParams()
    xfer = xfer or TransferParams()
    modules = []
    for mid in range(n_modules):
        bits = random_bit_pattern(substream(seed, "bits", mid), p_lrs)
        modules.append(
            build_module(dist, bits, adc_params, xfer, substream(seed, "build", mid), module_id=mid)
        )
    return VirtualChip(modules=modules, seed=seed)


def calibrate_chip(
    chip: VirtualChip,
    scope: str,
    grid: SearchGrid | None = None,
    n_vectors: int = 256,
) -> VirtualChip:
    """Characterize and tune the chip's references at ``scope``.

    The tuned configs are written back into the module lanes, so later
    characterization (e.g. effective-bit extraction) reads through them.
    """
    grid = grid or _calib.default_grid()
    traces = [
        characterize(m, n_vectors, substream(chip.seed, "calib", m.module_id))[1]
        for m in chip.modules
    ]
    tuned = tune_from_traces(traces, scope, grid)
    modules = []
    for m in chip.modules:
        lanes = []
        for lane in range(N_LANES):
            if scope == PER_ADC:
                cfg = tuned[unit_key(PER_ADC, m.module_id, lane)].cfg
            elif scope == PER_MODULE:
                cfg = tuned[unit_key(PER_MODULE, m.module_id)].cfg
            else:
                cfg = tuned[unit_key(GLOBAL)].cfg
            lanes.append((cfg, m.lanes[lane][1]))
        modules.append(replace(m, lanes=lanes))
    return VirtualChip(modules=modules, scope=scope, tuned=tuned, seed=chip.seed)


def extract_profiles(
    chip: VirtualChip,
    n_vectors: int = 256,
    stage: str = "extract",
) -> tuple[list[NoiseProfile], list[_effbits.EffBitGroup]]:
    """Characterize through the tuned references and fit noise profiles.

    Returns profiles sorted by unit key plus the raw per-group fits.
    The profile scope granularity follows the chip's tuning scope.
    """
    if chip.tuned is None:
        raise ValueError("calibrate the chip before extracting profiles")
    all_groups = []
    for m in chip.modules:
        _, trace = characterize(m, n_vectors, substream(chip.seed, stage, m.module_id))
        groups = fit_module(m, trace, chip.binmaps_for(m))
        all_groups.extend(groups)
    profiles = eb_statistics(all_groups, chip.scope)
    return profiles, all_groups


def drift_chip(chip: VirtualChip, stress: StressEvent, drift: DriftParams) -> VirtualChip:
    """Uniform stress on every cell of every module; calibration kept."""
    modules = [apply_stress_to_module(m, stress, drift) for m in chip.modules]
    return VirtualChip(modules=modules, scope=chip.scope, tuned=chip.tuned, seed=chip.seed)


def apply_drift_to_network(
    net: MappedNetwork,
    chip: VirtualChip,
    schedule: list[StressEvent],
    drift: DriftParams,
    n_vectors: int = 256,
) -> tuple[MappedNetwork, VirtualChip]:
    """Stress the backing chip through ``schedule`` and re-inject the net.

    References and binmaps stay fixed at their pre-drift calibration (the
    deployed configuration); the modules are re-characterized and
    re-fitted after the stress, and the refreshed profiles are injected
    into the network.
    """
    for i, ev in enumerate(schedule):
        chip = drift_chip(chip, ev, drift)
    profiles, _ = extract_profiles(chip, n_vectors=n_vectors, stage="extract-drift")
    refreshed = with_profiles(net, profiles)
    injected = inject_static(refreshed, substream(chip.seed, "inject-drift", len(schedule)))
    return injected, chip
