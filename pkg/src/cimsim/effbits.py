"""Effective-bit extraction and noise-profile statistics.

Per accumulation group, the decoded-and-mapped responses to random
wordline vectors are fit by least-absolute-deviation regression with 9
unknowns (one real value per cell, no intercept).  The fitted values are
the static noise model; the fit residuals, pooled per scope unit, are
the dynamic error model that gets resampled at inference time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calib import (
    GLOBAL,
    PER_ADC,
    PER_MODULE,
    BinMap,
    CharacterizationTrace,
    unit_key,
)
from .crossbar import GROUP_SIZE, N_COLS, N_GROUPS, N_LANES, CrossbarModule
from .device import LRS

IRLS_EPS = 1e-8
IRLS_MAX_ITER = 200
IRLS_TOL = 1e-9


def lad_fit(X: np.ndarray, y: np.ndarray, eps: float = IRLS_EPS,
            max_iter: int = IRLS_MAX_ITER, tol: float = IRLS_TOL) -> np.ndarray:
    """Least-absolute-deviation fit of y ~ X b via IRLS.

    Starts from ordinary least squares and reweights by 1/max(|r|, eps);
    keeps the best iterate and stops once the L1 objective has failed to
    improve by at least ``tol`` for a few consecutive iterations (the
    iteration is not strictly monotone on tied data).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    best = beta.copy()
    best_obj = float(np.abs(y - X @ beta).sum())
    stall = 0
    for _ in range(max_iter):
        r = y - X @ beta
        w = 1.0 / np.maximum(np.abs(r), eps)
        Xw = X * w[:, None]
        try:
            beta = np.linalg.solve(X.T @ Xw, Xw.T @ y)
        except np.linalg.LinAlgError:
            break
        obj = float(np.abs(y - X @ beta).sum())
        if obj < best_obj - tol:
            best, best_obj, stall = beta.copy(), obj, 0
        else:
            stall += 1
            if stall >= 8:
                break
    return best


def _unidentifiable_cells(X: np.ndarray) -> list[int]:
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    null = vt[s < 1e-9 * max(s[0], 1.0)]
    if null.size == 0:
        return []
    return sorted(int(i) for i in np.where(np.any(np.abs(null) > 1e-8, axis=0))[0])


@dataclass
class EffBitGroup:
    """LAD fit result for one accumulation group."""

    eb: np.ndarray           # (9,) fitted effective bit per cell
    residuals: np.ndarray    # (n,) y - X @ eb over the fitting set
    objective: float         # sum |residuals|
    programmed_bits: np.ndarray | None = None  # (9,) when known
    module_id: int = 0
    group: int = 0
    column: int = 0

    @property
    def lane(self) -> int:
        return self.column // 8


def fit_effective_bits(samples) -> EffBitGroup:
    """Fit one group's effective bits from (wordline, mapped value) samples.

    ``samples`` is a list of (wl, y) pairs or an (X, y) array tuple;
    requires at least 9 samples and a full-rank 9-column design.
    """
    if isinstance(samples, tuple) and len(samples) == 2:
        X, y = samples
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
    else:
        X = np.asarray([wl for wl, _ in samples], dtype=float)
        y = np.asarray([v for _, v in samples], dtype=float)
    if X.ndim != 2 or X.shape[1] != GROUP_SIZE:
        raise ValueError(f"design matrix must have {GROUP_SIZE} columns")
    if X.shape[0] < GROUP_SIZE:
        raise ValueError(f"need at least {GROUP_SIZE} samples")
    if np.linalg.matrix_rank(X) < GROUP_SIZE:
        bad = _unidentifiable_cells(X)
        raise ValueError(f"design matrix is rank-deficient; unidentifiable cells: {bad}")
    eb = lad_fit(X, y)
    residuals = y - X @ eb
    return EffBitGroup(eb=eb, residuals=residuals, objective=float(np.abs(residuals).sum()))


def fit_module(
    module: CrossbarModule, trace: CharacterizationTrace, binmaps: list[BinMap]
) -> list[EffBitGroup]:
    """Fit every group of a characterized module.

    ``binmaps`` holds one BinMap per ADC lane (duplicate a module-level
    map 8 times for module-scope extraction); responses are the mapped
    values, not raw codes.
    """
    if len(binmaps) != N_LANES:
        raise ValueError(f"need {N_LANES} binmaps (one per lane)")
    mapped = np.empty(len(trace), dtype=np.int64)
    for lane in range(N_LANES):
        sel = trace.lane == lane
        mapped[sel] = binmaps[lane].value(trace.code[sel])
    order = np.lexsort((trace.column, trace.group))
    n_per = trace.n_vectors
    groups = []
    gb = module.group_bits()
    for idx in range(N_GROUPS * N_COLS):
        sel = order[idx * n_per:(idx + 1) * n_per]
        g = int(trace.group[sel[0]])
        c = int(trace.column[sel[0]])
        fit = fit_effective_bits((trace.wl[sel], mapped[sel]))
        fit.programmed_bits = gb[g, :, c]
        fit.module_id = module.module_id
        fit.group = g
        fit.column = c
        groups.append(fit)
    return groups


@dataclass
class ResidualDistribution:
    """Empirical residual (dynamic-error) distribution.

    Keeps the histogram for reporting and the exact samples for
    bootstrap resampling at injection time.
    """

    edges: np.ndarray    # (bins+1,)
    masses: np.ndarray   # (bins,), sums to 1
    samples: np.ndarray  # exact pooled residuals

    @property
    def degenerate_zero(self) -> bool:
        # exact fits leave float dust ~1e-14; anything this far below the
        # rounding threshold can never move a partial, so skip sampling
        return bool(np.all(np.abs(self.samples) < 1e-9))

    def resample(self, shape, rng: np.random.Generator) -> np.ndarray:
        # uniform draws scaled by the sample count, so a fixed stream
        # yields strongly correlated noise across distributions of
        # different sizes (common random numbers for paired comparisons)
        idx = (rng.random(size=shape) * len(self.samples)).astype(np.int64)
        return self.samples[idx]

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "masses": self.masses.tolist(),
            "samples": self.samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResidualDistribution":
        return cls(
            edges=np.array(d["edges"], dtype=float),
            masses=np.array(d["masses"], dtype=float),
            samples=np.array(d["samples"], dtype=float),
        )

    @classmethod
    def degenerate(cls) -> "ResidualDistribution":
        return cls(edges=np.array([-0.5, 0.5]), masses=np.array([1.0]), samples=np.zeros(1))


def residual_distribution(groups: list[EffBitGroup], bins: int = 64) -> ResidualDistribution:
    """Pool residuals across groups into an equal-width histogram."""
    if not groups:
        raise ValueError("no groups to pool")
    samples = np.concatenate([g.residuals for g in groups])
    lo, hi = float(samples.min()), float(samples.max())
    if lo == hi:
        # degenerate: all residuals identical
        edges = np.array([lo - 0.5, hi + 0.5])
        masses = np.array([1.0])
    else:
        hist, edges = np.histogram(samples, bins=bins, range=(lo, hi))
        masses = hist / hist.sum()
    return ResidualDistribution(edges=edges, masses=masses, samples=np.sort(samples))


@dataclass
class NoiseProfile:
    """Per-scope-unit static and dynamic noise statistics.

    mu/sigma pairs are the population mean/std (divide by n) of the
    fitted effective bits of programmed-0 and programmed-1 cells; the
    residual distribution carries the dynamic error.
    """

    scope: str
    mu0: float
    sigma0: float
    mu1: float
    sigma1: float
    residual: ResidualDistribution = field(default_factory=ResidualDistribution.degenerate)

    def to_dict(self) -> dict:
        d = {
            "scope": self.scope,
            "mu0": self.mu0,
            "sigma0": self.sigma0,
            "mu1": self.mu1,
            "sigma1": self.sigma1,
            "residual_hist": {
                "edges": self.residual.edges.tolist(),
                "masses": self.residual.masses.tolist(),
            },
            "residual_samples": self.residual.samples.tolist(),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseProfile":
        residual = ResidualDistribution(
            edges=np.array(d["residual_hist"]["edges"], dtype=float),
            masses=np.array(d["residual_hist"]["masses"], dtype=float),
            samples=np.array(d["residual_samples"], dtype=float),
        )
        return cls(
            scope=d["scope"], mu0=d["mu0"], sigma0=d["sigma0"],
            mu1=d["mu1"], sigma1=d["sigma1"], residual=residual,
        )

    @classmethod
    def ideal(cls) -> "NoiseProfile":
        """Noiseless profile: exact bits, zero dynamic error."""
        return cls(scope="ideal", mu0=0.0, sigma0=0.0, mu1=1.0, sigma1=0.0,
                   residual=ResidualDistribution.degenerate())


def eb_statistics(groups: list[EffBitGroup], scope: str, bins: int = 64) -> list[NoiseProfile]:
    """Noise profiles per scope unit from fitted groups.

    The 0-cell and 1-cell populations are curated independently; a unit
    whose characterization pattern left it without cells of either state
    is a configuration bug and raises.
    """
    def key_of(g: EffBitGroup) -> str:
        if scope == GLOBAL:
            return unit_key(GLOBAL)
        if scope == PER_MODULE:
            return unit_key(PER_MODULE, g.module_id)
        if scope == PER_ADC:
            return unit_key(PER_ADC, g.module_id, g.lane)
        raise ValueError(f"unknown scope {scope!r}")

    buckets: dict[str, list[EffBitGroup]] = {}
    for g in groups:
        if g.programmed_bits is None:
            raise ValueError("groups must carry programmed bits for eb statistics")
        buckets.setdefault(key_of(g), []).append(g)

    profiles = []
    for key in sorted(buckets, key=_unit_sort_key):
        unit = buckets[key]
        eb = np.concatenate([g.eb for g in unit])
        bits = np.concatenate([g.programmed_bits for g in unit])
        eb0 = eb[bits != LRS]
        eb1 = eb[bits == LRS]
        if eb0.size == 0 or eb1.size == 0:
            raise ValueError(f"scope unit {key} has no cells of one programmed state")
        profiles.append(
            NoiseProfile(
                scope=key,
                mu0=float(eb0.mean()),
                sigma0=float(eb0.std()),  # population (ddof=0)
                mu1=float(eb1.mean()),
                sigma1=float(eb1.std()),
                residual=residual_distribution(unit, bins=bins),
            )
        )
    return profiles


def _unit_sort_key(key: str):
    parts = key.split(":")
    return (parts[0],) + tuple(int(p) for p in parts[1:])


def eb_map(module: CrossbarModule, groups: list[EffBitGroup]) -> tuple[np.ndarray, np.ndarray]:
    """(81, 64) grid of fitted eb values plus per-lane |residual| totals."""
    grid = np.full((N_GROUPS * GROUP_SIZE, N_COLS), np.nan)
    lane_err = np.zeros(N_LANES)
    for g in groups:
        if g.module_id != module.module_id:
            raise ValueError("group does not belong to this module")
        grid[g.group * GROUP_SIZE:(g.group + 1) * GROUP_SIZE, g.column] = g.eb
        lane_err[g.lane] += g.objective
    return grid, lane_err
