"""Experiment configuration: a sectioned, typed key-value text file.

The format is INI-style (configparser) with a fixed schema; unknown
sections or keys and type errors are rejected so a config never
silently drifts.  The only environment override honored anywhere is
``CIM_SEED``, which replaces ``run.seed``.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import os
from dataclasses import dataclass, field

from .adc import AdcParams, AdcRefConfig
from .calib import GLOBAL, PER_ADC, PER_MODULE, SearchGrid
from .crossbar import TransferParams
from .device import CYCLE_SECONDS, CellDistParams, DriftParams


class ConfigError(ValueError):
    pass


def _parse_axis(text: str) -> tuple:
    """Grid axis: either 'a,b,c' or 'start:stop:count'."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"axis spec must be start:stop:count, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ConfigError("axis count must be >= 1")
        if count == 1:
            return (start,)
        step = (stop - start) / (count - 1)
        return tuple(round(start + i * step, 12) for i in range(count))
    return tuple(float(v) for v in text.split(","))


_SCHEMA = {
    "run": {
        "seed": int,
        "output_dir": str,
        "pipeline": str,
        "scope": str,
        "n_modules": int,
        "vectors": int,
        "threads": int,
    },
    "device": {
        "g_lrs_mu": float,
        "g_lrs_sigma": float,
        "g_hrs_mu": float,
        "g_hrs_sigma": float,
    },
    "drift": {
        "alpha_hrs": float,
        "beta_lrs": float,
        "v_ref_bl": float,
        "gamma_v": float,
        "cycle_seconds": float,
        "stress_v_bl": float,
        "stress_cycles": int,
        "stress_events": int,
    },
    "adc": {
        "offset": float,
        "step": float,
        "v_blt": float,
        "sigma_static": float,
        "sigma_dynamic": float,
    },
    "xfer": {"v_read": float, "g_half": float},
    "grid": {"offsets": _parse_axis, "steps": _parse_axis, "v_blts": _parse_axis},
    "quant": {"w_bits": int, "a_bits": int},
    "paths": {"weights": str, "dataset": str, "mapped": str},
    "gridworld": {"n": int, "n_holes": int, "n_missions": int},
}

_SCOPES = {"global": GLOBAL, "module": PER_MODULE, "adc": PER_ADC}


@dataclass
class ExperimentConfig:
    seed: int = 12345
    output_dir: str = "out"
    pipeline: tuple = ()
    scope: str = PER_MODULE
    n_modules: int = 10
    vectors: int = 256
    threads: int = 1
    device: CellDistParams = field(default_factory=CellDistParams)
    drift: DriftParams = field(default_factory=DriftParams)
    cycle_seconds: float = CYCLE_SECONDS
    stress_v_bl: float = 1.3
    stress_cycles: int = 50000
    stress_events: int = 10
    adc: AdcParams = field(default_factory=AdcParams)
    xfer: TransferParams = field(default_factory=TransferParams)
    grid: SearchGrid | None = None
    w_bits: int = 4
    a_bits: int = 6
    weights_path: str = ""
    dataset_path: str = ""
    mapped_path: str = ""
    gridworld_n: int = 5
    gridworld_holes: int = 3
    n_missions: int = 10000
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        canon = repr(sorted((s, sorted(kv.items())) for s, kv in self.raw.items()))
        return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a config file (all keys optional) into an ExperimentConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    raw: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            raw[section] = {}
            for key, value in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                caster = _SCHEMA[section][key]
                try:
                    raw[section][key] = caster(value)
                except ConfigError:
                    raise
                except Exception as exc:
                    raise ConfigError(f"bad value for {section}.{key}: {value!r} ({exc})")
    for section, kv in (overrides or {}).items():
        raw.setdefault(section, {}).update(kv)

    cfg = ExperimentConfig(raw=raw)
    run = raw.get("run", {})
    cfg.seed = int(run.get("seed", cfg.seed))
    if "CIM_SEED" in os.environ:
        cfg.seed = int(os.environ["CIM_SEED"])
    cfg.output_dir = run.get("output_dir", cfg.output_dir)
    pipeline = run.get("pipeline", "")
    cfg.pipeline = tuple(s.strip() for s in pipeline.split(",") if s.strip())
    scope_name = run.get("scope", "module")
    if scope_name not in _SCOPES:
        raise ConfigError(f"run.scope must be one of {sorted(_SCOPES)}")
    cfg.scope = _SCOPES[scope_name]
    cfg.n_modules = int(run.get("n_modules", cfg.n_modules))
    cfg.vectors = int(run.get("vectors", cfg.vectors))
    cfg.threads = int(run.get("threads", cfg.threads))
    if cfg.threads < 1:
        raise ConfigError("run.threads must be >= 1")

    dev = raw.get("device", {})
    try:
        cfg.device = CellDistParams(
            g_lrs_mu=dev.get("g_lrs_mu", 0.0),
            g_lrs_sigma=dev.get("g_lrs_sigma", 0.05),
            g_hrs_mu=dev.get("g_hrs_mu", math.log(0.1)),
            g_hrs_sigma=dev.get("g_hrs_sigma", 0.15),
        )
        dr = raw.get("drift", {})
        cfg.drift = DriftParams(
            alpha_hrs=dr.get("alpha_hrs", DriftParams.alpha_hrs),
            beta_lrs=dr.get("beta_lrs", DriftParams.beta_lrs),
            v_ref_bl=dr.get("v_ref_bl", DriftParams.v_ref_bl),
            gamma_v=dr.get("gamma_v", DriftParams.gamma_v),
        )
        cfg.cycle_seconds = dr.get("cycle_seconds", CYCLE_SECONDS)
        cfg.stress_v_bl = dr.get("stress_v_bl", 1.3)
        cfg.stress_cycles = int(dr.get("stress_cycles", 50000))
        cfg.stress_events = int(dr.get("stress_events", 10))
        adc = raw.get("adc", {})
        ref = AdcRefConfig(
            offset=adc.get("offset", 0.04),
            step=adc.get("step", 0.03),
            v_blt=adc.get("v_blt", 1.0),
        )
        cfg.adc = AdcParams(
            cfg=ref,
            sigma_static=adc.get("sigma_static"),
            sigma_dynamic=adc.get("sigma_dynamic"),
        )
        xf = raw.get("xfer", {})
        cfg.xfer = TransferParams(v_read=xf.get("v_read", 1.0), g_half=xf.get("g_half", 4.5))
        grid = raw.get("grid", {})
        if grid:
            from .calib import default_grid

            dflt = default_grid()
            cfg.grid = SearchGrid(
                offsets=tuple(grid.get("offsets", dflt.offsets)),
                steps=tuple(grid.get("steps", dflt.steps)),
                v_blts=tuple(grid.get("v_blts", dflt.v_blts)),
            )
        q = raw.get("quant", {})
        cfg.w_bits = int(q.get("w_bits", 4))
        cfg.a_bits = int(q.get("a_bits", 6))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc))
    paths = raw.get("paths", {})
    cfg.weights_path = paths.get("weights", "")
    cfg.dataset_path = paths.get("dataset", "")
    cfg.mapped_path = paths.get("mapped", "")
    gw = raw.get("gridworld", {})
    cfg.gridworld_n = int(gw.get("n", 5))
    cfg.gridworld_holes = int(gw.get("n_holes", 3))
    cfg.n_missions = int(gw.get("n_missions", 10000))
    return cfg
