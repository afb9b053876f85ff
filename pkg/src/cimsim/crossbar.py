"""Crossbar module: 81x64 cell grid, acc-9 groups, 8 ADC lanes.

Every column is split into 9 accumulation groups of 9 consecutive rows;
a group read activates up to 9 wordlines and produces one bitline
voltage, decoded by the ADC lane that owns the column (8 consecutive
columns per lane).  The analog transfer is a saturating divider
``v = v_blt * G / (G + g_half)`` over the activated conductance sum G.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .adc import AdcParams, AdcRefConfig, ComparatorMismatch, decode
from .device import (
    HRS,
    CellDistParams,
    DriftParams,
    StressEvent,
    sample_conductance_array,
    stressed_conductance,
)

N_ROWS = 81
N_COLS = 64
GROUP_SIZE = 9
N_GROUPS = 9  # per column
N_LANES = 8
COLS_PER_LANE = 8

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class TransferParams:
    """Analog front-end parameters of the read path."""

    v_read: float = 1.0
    g_half: float = 4.5

    def __post_init__(self):
        if self.v_read <= 0 or self.g_half <= 0:
            raise ValueError("v_read and g_half must be positive")


@dataclass(frozen=True)
class AccGroupId:
    column: int
    group: int

    def __post_init__(self):
        if not (0 <= self.column < N_COLS):
            raise ValueError("column out of range")
        if not (0 <= self.group < N_GROUPS):
            raise ValueError("group out of range")

    @property
    def rows(self) -> slice:
        return slice(GROUP_SIZE * self.group, GROUP_SIZE * (self.group + 1))

    @property
    def lane(self) -> int:
        return self.column // COLS_PER_LANE


@dataclass
class CrossbarModule:
    """One virtual module; treated as immutable during reads.

    Drift tracking is an explicit opt-in: when ``track_reads`` is set,
    every read bumps the addressed group's HRS cells' stress counters,
    but conductance updates only happen in the batched stress phase.
    """

    bits: np.ndarray          # (81, 64) uint8, programmed pattern
    g: np.ndarray             # (81, 64) float64, conductances
    stress_cycles: np.ndarray  # (81, 64) int64
    lanes: list[tuple[AdcRefConfig, ComparatorMismatch]]
    xfer: TransferParams
    dist: CellDistParams
    module_id: int = 0
    track_reads: bool = False

    def __post_init__(self):
        if self.bits.shape != (N_ROWS, N_COLS):
            raise ValueError(f"bit pattern must be {N_ROWS}x{N_COLS}")
        if self.g.shape != (N_ROWS, N_COLS):
            raise ValueError("conductance grid shape mismatch")
        if len(self.lanes) != N_LANES:
            raise ValueError(f"need exactly {N_LANES} ADC lanes")

    def lane_for(self, column: int) -> tuple[AdcRefConfig, ComparatorMismatch]:
        return self.lanes[column // COLS_PER_LANE]

    def group_bits(self) -> np.ndarray:
        """Bits regrouped to (group, cell, column)."""
        return self.bits.reshape(N_GROUPS, GROUP_SIZE, N_COLS)

    def group_g(self) -> np.ndarray:
        """Conductances regrouped to (group, cell, column)."""
        return self.g.reshape(N_GROUPS, GROUP_SIZE, N_COLS)

    def with_lane_cfg(self, lane: int, cfg: AdcRefConfig) -> "CrossbarModule":
        lanes = list(self.lanes)
        lanes[lane] = (cfg, lanes[lane][1])
        return replace(self, lanes=lanes)

    def with_all_cfgs(self, cfg: AdcRefConfig) -> "CrossbarModule":
        return replace(self, lanes=[(cfg, mm) for _, mm in self.lanes])


def random_bit_pattern(rng: np.random.Generator, p_lrs: float = 0.5) -> np.ndarray:
    """The 50/50 (by default) random characterization pattern."""
    return (rng.random((N_ROWS, N_COLS)) < p_lrs).astype(np.uint8)


def build_module(
    dist: CellDistParams,
    bit_pattern: np.ndarray,
    adc_params: AdcParams,
    xfer: TransferParams,
    rng: np.random.Generator,
    module_id: int = 0,
) -> CrossbarModule:
    """Program a module and sample its cell and ADC mismatch realizations.

    Cell conductances and the 8 lanes' mismatch draws come from disjoint
    substreams of ``rng`` (via spawn), so rebuilding with the same seed
    is bit-identical.
    """
    bit_pattern = np.asarray(bit_pattern, dtype=np.uint8)
    if bit_pattern.shape != (N_ROWS, N_COLS):
        raise ValueError(f"bit pattern must be {N_ROWS}x{N_COLS}")
    cell_stream, *lane_streams = rng.spawn(1 + N_LANES)
    g = sample_conductance_array(bit_pattern, dist, cell_stream)
    sigma_static, sigma_dynamic = adc_params.resolved_sigmas()
    lanes = []
    for lane_rng in lane_streams:
        from .adc import sample_mismatch

        mm = sample_mismatch(sigma_static, sigma_dynamic, lane_rng)
        lanes.append((adc_params.cfg, mm))
    return CrossbarModule(
        bits=bit_pattern,
        g=g,
        stress_cycles=np.zeros((N_ROWS, N_COLS), dtype=np.int64),
        lanes=lanes,
        xfer=xfer,
        dist=dist,
        module_id=module_id,
    )


def _check_wl(wl) -> np.ndarray:
    wl = np.asarray(wl, dtype=np.uint8)
    if wl.shape != (GROUP_SIZE,):
        raise ValueError(f"wordline input must have {GROUP_SIZE} entries")
    if not np.all((wl == 0) | (wl == 1)):
        raise ValueError("wordline entries must be 0/1")
    return wl


def golden_sum(module: CrossbarModule, gid: AccGroupId, wl) -> int:
    """Ideal digital output: count of activated LRS cells."""
    wl = _check_wl(wl)
    return int(np.dot(wl, module.bits[gid.rows, gid.column]))


def normalized_voltage(module: CrossbarModule, G) -> np.ndarray:
    """Transfer function before the v_blt scale: G / (G + g_half)."""
    G = np.asarray(G, dtype=float)
    return G / (G + module.xfer.g_half)


def mac_voltage(module: CrossbarModule, gid: AccGroupId, wl) -> float:
    """Bitline voltage for a group read: v_blt * G / (G + g_half)."""
    wl = _check_wl(wl)
    G = float(np.dot(wl, module.g[gid.rows, gid.column]))
    cfg, _ = module.lane_for(gid.column)
    return cfg.v_blt * float(normalized_voltage(module, G))


def read_group(module: CrossbarModule, gid: AccGroupId, wl, rng: np.random.Generator) -> int:
    """Analog group read followed by the owning lane's ADC decode."""
    v = mac_voltage(module, gid, wl)
    cfg, mm = module.lane_for(gid.column)
    code = decode(v, cfg, mm, rng)
    if module.track_reads:
        rows = gid.rows
        hrs = module.bits[rows, gid.column] == HRS
        module.stress_cycles[rows, gid.column][hrs] += 1
    return int(code)


def batch_normalized_voltages(module: CrossbarModule, wl_batch: np.ndarray) -> np.ndarray:
    """Normalized voltages for per-group wordline batches.

    ``wl_batch`` has shape (n_groups, n_cols, n_vectors, 9); the result
    is (n_groups, n_cols, n_vectors).  Used by characterization, where
    every group gets its own vector set.
    """
    gg = module.group_g()  # (9, 9, 64) as (group, cell, col)
    G = np.einsum("ncvi,inc->ncv", wl_batch.astype(float), gg.transpose(1, 0, 2))
    return normalized_voltage(module, G)


def batch_golden_sums(module: CrossbarModule, wl_batch: np.ndarray) -> np.ndarray:
    gb = module.group_bits()  # (group, cell, col)
    return np.einsum("ncvi,inc->ncv", wl_batch.astype(np.int64), gb.transpose(1, 0, 2).astype(np.int64))


def apply_stress_to_module(
    module: CrossbarModule, stress: StressEvent, drift: DriftParams
) -> CrossbarModule:
    """Uniform stress over every cell; returns the drifted module."""
    g_lrs_nom = module.dist.g_lrs_nom
    g = module.g.copy()
    for bit in (0, 1):
        mask = module.bits == bit
        g[mask] = stressed_conductance(module.g[mask], bit, stress, drift, g_lrs_nom)
    return replace(
        module,
        g=g,
        stress_cycles=module.stress_cycles + stress.cycles,
    )


def to_snapshot(module: CrossbarModule) -> dict:
    """Versioned JSON-safe snapshot (cells, lane configs, mismatch)."""
    return {
        "version": SNAPSHOT_VERSION,
        "module_id": module.module_id,
        "bits": module.bits.tolist(),
        "g": module.g.tolist(),
        "stress_cycles": module.stress_cycles.tolist(),
        "lanes": [
            {
                "cfg": cfg.to_dict(),
                "static_offsets": mm.static_offsets.tolist(),
                "dynamic_sigma": mm.dynamic_sigma,
            }
            for cfg, mm in module.lanes
        ],
        "xfer": {"v_read": module.xfer.v_read, "g_half": module.xfer.g_half},
        "dist": {
            "g_lrs_mu": module.dist.g_lrs_mu,
            "g_lrs_sigma": module.dist.g_lrs_sigma,
            "g_hrs_mu": module.dist.g_hrs_mu,
            "g_hrs_sigma": module.dist.g_hrs_sigma,
        },
    }


def from_snapshot(snap: dict) -> CrossbarModule:
    if snap.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {snap.get('version')!r}")
    lanes = [
        (
            AdcRefConfig.from_dict(entry["cfg"]),
            ComparatorMismatch(np.array(entry["static_offsets"]), entry["dynamic_sigma"]),
        )
        for entry in snap["lanes"]
    ]
    return CrossbarModule(
        bits=np.array(snap["bits"], dtype=np.uint8),
        g=np.array(snap["g"], dtype=float),
        stress_cycles=np.array(snap["stress_cycles"], dtype=np.int64),
        lanes=lanes,
        xfer=TransferParams(**snap["xfer"]),
        dist=CellDistParams(**snap["dist"]),
        module_id=snap["module_id"],
    )


def save_snapshot(module: CrossbarModule, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_snapshot(module), fh, sort_keys=True)


def load_snapshot(path) -> CrossbarModule:
    with open(path) as fh:
        return from_snapshot(json.load(fh))
