"""Module characterization, absolute binning, and reference tuning.

Characterization drives every acc-9 group with random 9-bit wordline
vectors and tallies a golden-value x ADC-state count matrix.  Absolute
binning assigns each ADC state to the golden value that most often
produced it (staircase-enforced).  Tuning is an exhaustive grid search
over (offset, step, v_blt) at global, per-module, or per-ADC scope; the
comparator noise draws recorded in the trace are reused for every
candidate, so the search is a deterministic function of the trace and
the tuned score can never exceed the score of any config in the grid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .adc import N_COMPARATORS, N_STATES, AdcRefConfig
from .crossbar import (
    COLS_PER_LANE,
    GROUP_SIZE,
    N_COLS,
    N_GROUPS,
    N_LANES,
    CrossbarModule,
    TransferParams,
    batch_golden_sums,
    batch_normalized_voltages,
)
from .device import CellDistParams

N_GOLDEN = GROUP_SIZE + 1  # sums 0..9

GLOBAL = "global"
PER_MODULE = "module"
PER_ADC = "adc"
SCOPES = (GLOBAL, PER_MODULE, PER_ADC)


@dataclass(frozen=True)
class TuningScope:
    kind: str

    def __post_init__(self):
        if self.kind not in SCOPES:
            raise ValueError(f"scope must be one of {SCOPES}")


def unit_key(scope: str, module_id: int | None = None, lane: int | None = None) -> str:
    if scope == GLOBAL:
        return "global"
    if scope == PER_MODULE:
        return f"module:{module_id}"
    if scope == PER_ADC:
        return f"adc:{module_id}:{lane}"
    raise ValueError(f"unknown scope {scope!r}")


@dataclass
class ResponseCounts:
    """counts[g][s]: trials with golden value g decoded to ADC state s."""

    counts: np.ndarray  # (10, 16) int64

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (N_GOLDEN, N_STATES):
            raise ValueError(f"counts must be {N_GOLDEN}x{N_STATES}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class BinMap:
    """ADC state -> golden value assignment (monotone staircase)."""

    assign: np.ndarray  # (16,) int

    def __post_init__(self):
        self.assign = np.asarray(self.assign, dtype=np.int64)
        if self.assign.shape != (N_STATES,):
            raise ValueError(f"assign must have {N_STATES} entries")
        if np.any(np.diff(self.assign) < 0):
            raise ValueError("assign must be monotone non-decreasing")
        if self.assign.min() < 0 or self.assign.max() > N_GOLDEN - 1:
            raise ValueError("assigned values must be in 0..9")

    def value(self, code):
        return self.assign[code]


@dataclass
class CharacterizationTrace:
    """Raw per-trial record of one module characterization.

    Trials are laid out (group, column, vector) C-order.  ``u`` holds the
    noiseless normalized bitline voltage (before the v_blt scale) and
    ``noise`` the per-comparator dynamic noise draws, so any candidate
    reference config can be re-decoded from the trace with common random
    numbers.
    """

    module_id: int
    n_vectors: int
    group: np.ndarray    # (n,) uint8
    column: np.ndarray   # (n,) uint8
    lane: np.ndarray     # (n,) uint8
    wl: np.ndarray       # (n, 9) uint8
    golden: np.ndarray   # (n,) uint8
    u: np.ndarray        # (n,) float64
    noise: np.ndarray    # (n, 15) float32, volts
    static_offsets: np.ndarray  # (8, 15) float64, per-lane
    code: np.ndarray     # (n,) uint8, decoded at the module's current cfg

    def __len__(self) -> int:
        return self.golden.shape[0]

    def lane_counts(self) -> np.ndarray:
        """(8, 10, 16) counts split by owning ADC lane."""
        key = (self.lane.astype(np.int64) * N_GOLDEN + self.golden) * N_STATES + self.code
        flat = np.bincount(key, minlength=N_LANES * N_GOLDEN * N_STATES)
        return flat.reshape(N_LANES, N_GOLDEN, N_STATES)

    def module_counts(self) -> ResponseCounts:
        return ResponseCounts(self.lane_counts().sum(axis=0))


def decode_trace(trace: CharacterizationTrace, cfgs: list[AdcRefConfig]) -> np.ndarray:
    """Re-decode the trace under per-lane configs, reusing the recorded noise."""
    codes = np.empty(len(trace), dtype=np.uint8)
    j = np.arange(N_COMPARATORS)
    for lane in range(N_LANES):
        cfg = cfgs[lane]
        sel = trace.lane == lane
        v = cfg.v_blt * trace.u[sel]
        eff = cfg.offset + cfg.step * j + trace.static_offsets[lane] + trace.noise[sel].astype(float)
        codes[sel] = np.sum(v[:, None] >= eff, axis=1).astype(np.uint8)
    return codes


def characterize(
    module: CrossbarModule, n_vectors: int, rng: np.random.Generator
) -> tuple[ResponseCounts, CharacterizationTrace]:
    """Drive every acc-9 group and tally responses.

    Each of the 9x64 groups receives ``n_vectors`` i.i.d. uniform 9-bit
    vectors.  Returns module-aggregated counts plus the raw trace.
    """
    if n_vectors < 0:
        raise ValueError("n_vectors must be >= 0")
    n = N_GROUPS * N_COLS * n_vectors
    lane_grid = np.repeat(np.arange(N_LANES, dtype=np.uint8), COLS_PER_LANE)
    if n_vectors == 0:
        empty = CharacterizationTrace(
            module_id=module.module_id,
            n_vectors=0,
            group=np.zeros(0, np.uint8),
            column=np.zeros(0, np.uint8),
            lane=np.zeros(0, np.uint8),
            wl=np.zeros((0, GROUP_SIZE), np.uint8),
            golden=np.zeros(0, np.uint8),
            u=np.zeros(0, float),
            noise=np.zeros((0, N_COMPARATORS), np.float32),
            static_offsets=np.stack([mm.static_offsets for _, mm in module.lanes]),
            code=np.zeros(0, np.uint8),
        )
        return ResponseCounts(np.zeros((N_GOLDEN, N_STATES), np.int64)), empty

    wl = rng.integers(0, 2, size=(N_GROUPS, N_COLS, n_vectors, GROUP_SIZE), dtype=np.uint8)
    u = batch_normalized_voltages(module, wl)          # (9, 64, n_vectors)
    golden = batch_golden_sums(module, wl)             # (9, 64, n_vectors)

    group_idx, col_idx = np.meshgrid(np.arange(N_GROUPS), np.arange(N_COLS), indexing="ij")
    group_f = np.repeat(group_idx[:, :, None], n_vectors, axis=2).reshape(n).astype(np.uint8)
    col_f = np.repeat(col_idx[:, :, None], n_vectors, axis=2).reshape(n).astype(np.uint8)
    lane_f = lane_grid[col_f]

    dyn = np.array([mm.dynamic_sigma for _, mm in module.lanes])
    noise = rng.standard_normal((n, N_COMPARATORS)).astype(np.float32)
    noise *= dyn[lane_f][:, None].astype(np.float32)

    trace = CharacterizationTrace(
        module_id=module.module_id,
        n_vectors=n_vectors,
        group=group_f,
        column=col_f,
        lane=lane_f,
        wl=wl.reshape(n, GROUP_SIZE),
        golden=golden.reshape(n).astype(np.uint8),
        u=u.reshape(n),
        noise=noise,
        static_offsets=np.stack([mm.static_offsets for _, mm in module.lanes]),
        code=np.zeros(n, np.uint8),
    )
    trace.code = decode_trace(trace, [cfg for cfg, _ in module.lanes])
    return trace.module_counts(), trace


def golden_histogram(trace: CharacterizationTrace) -> np.ndarray:
    """10-bin histogram of golden values over the trace."""
    if len(trace) == 0:
        raise ValueError("trace is empty")
    return np.bincount(trace.golden, minlength=N_GOLDEN)


def absolute_binning(counts: ResponseCounts) -> BinMap:
    """Dominant-representation state assignment, staircase-enforced.

    Each state maps to the golden value with the highest count (ties
    toward the smaller value); never-observed states inherit the
    assignment of the state below (state 0 defaults to value 0), and a
    running max enforces monotonicity.
    """
    c = counts.counts
    assign = np.zeros(N_STATES, dtype=np.int64)
    prev = 0
    for s in range(N_STATES):
        col = c[:, s]
        a = prev if col.sum() == 0 else int(np.argmax(col))
        prev = max(a, prev)
        assign[s] = prev
    return BinMap(assign)


def score_config(counts: ResponseCounts, binmap: BinMap, weights=None) -> int:
    """Sum of |assigned value - golden| over all recorded trials.

    ``weights`` optionally reweights golden values (length-10); default
    uniform.
    """
    diff = np.abs(binmap.assign[None, :] - np.arange(N_GOLDEN)[:, None])
    if weights is not None:
        diff = diff * np.asarray(weights, dtype=float)[:, None]
        return float(np.sum(counts.counts * diff))
    return int(np.sum(counts.counts * diff))


@dataclass(frozen=True)
class SearchGrid:
    """Exhaustive (offset, step, v_blt) candidate grid."""

    offsets: tuple
    steps: tuple
    v_blts: tuple

    def __post_init__(self):
        if not (self.offsets and self.steps and self.v_blts):
            raise ValueError("search grid must be non-empty")

    def configs(self) -> list[AdcRefConfig]:
        """Candidates ordered by (offset, step, v_blt): argmin tie-break order."""
        out = []
        for o in sorted(self.offsets):
            for s in sorted(self.steps):
                for v in sorted(self.v_blts):
                    out.append(AdcRefConfig(offset=o, step=s, v_blt=v))
        return out

    def __contains__(self, cfg: AdcRefConfig) -> bool:
        return (
            any(np.isclose(cfg.offset, o) for o in self.offsets)
            and any(np.isclose(cfg.step, s) for s in self.steps)
            and any(np.isclose(cfg.v_blt, v) for v in self.v_blts)
        )


def default_grid() -> SearchGrid:
    """16 offsets x 16 steps x 4 v_blt values; contains the default config."""
    offsets = tuple(round(0.02 + 0.01 * k, 6) for k in range(16))
    steps = tuple(round(0.010 + 0.0025 * k, 6) for k in range(16))
    v_blts = (1.0, 1.1, 1.2, 1.3)
    return SearchGrid(offsets, steps, v_blts)


def singleton_grid(cfg: AdcRefConfig) -> SearchGrid:
    return SearchGrid((cfg.offset,), (cfg.step,), (cfg.v_blt,))


@dataclass
class TunedRef:
    """Search result for one scope unit."""

    cfg: AdcRefConfig
    binmap: BinMap
    score: int
    trials: int

    @property
    def mean_abs_error(self) -> float:
        return self.score / self.trials if self.trials else 0.0

    def to_dict(self, scope_key: str) -> dict:
        return {
            "scope": scope_key,
            "offset": self.cfg.offset,
            "step": self.cfg.step,
            "v_blt": self.cfg.v_blt,
            "score": int(self.score),
            "trials": int(self.trials),
            "binmap": self.binmap.assign.tolist(),
        }


try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a standard install here
    _HAVE_NUMBA = False

    def _njit(*a, **k):
        def wrap(fn):
            return fn

        return wrap


@_njit(cache=True)
def _grid_counts_kernel(u, noise, static_offsets, lane, golden,
                        o0, d_o, n_o, steps, v_blts, counts):  # pragma: no cover - jit
    n = u.shape[0]
    n_s = steps.shape[0]
    n_v = v_blts.shape[0]
    cnt = np.zeros(n_o + 1, np.int64)
    eff = np.zeros((static_offsets.shape[0], N_COMPARATORS))
    for si in range(n_s):
        s = steps[si]
        for ln in range(static_offsets.shape[0]):
            for j in range(N_COMPARATORS):
                eff[ln, j] = static_offsets[ln, j] + s * j
        for vi in range(n_v):
            v = v_blts[vi]
            for i in range(n):
                vu = v * u[i]
                ln = lane[i]
                for k in range(n_o + 1):
                    cnt[k] = 0
                for j in range(N_COMPARATORS):
                    a = vu - noise[i, j] - eff[ln, j]
                    b = int(np.floor((a - o0) / d_o)) + 1
                    if b < 0:
                        b = 0
                    elif b > n_o:
                        b = n_o
                    cnt[b] += 1
                code = N_COMPARATORS
                g = golden[i]
                for k in range(n_o):
                    code -= cnt[k]
                    counts[(k * n_s + si) * n_v + vi, ln, g, code] += 1


def _counts_for_grid(trace: CharacterizationTrace, grid: SearchGrid) -> tuple[np.ndarray, list[AdcRefConfig]]:
    """Per-lane response counts for every grid candidate.

    Returns (counts[c, lane, golden, state], candidates) where the
    candidate order matches :meth:`SearchGrid.configs`.  Candidates are
    re-decoded from the trace's stored voltages and noise draws, so all
    of them see identical randomness.
    """
    offsets = np.array(sorted(grid.offsets), dtype=float)
    steps = np.array(sorted(grid.steps), dtype=float)
    v_blts = np.array(sorted(grid.v_blts), dtype=float)
    n_o, n_s, n_v = len(offsets), len(steps), len(v_blts)
    n = len(trace)
    uniform = n_o == 1 or np.allclose(np.diff(offsets), offsets[1] - offsets[0])
    d_o = float(offsets[1] - offsets[0]) if n_o > 1 else 1.0

    counts = np.zeros((n_o * n_s * n_v, N_LANES, N_GOLDEN, N_STATES), dtype=np.int64)
    if _HAVE_NUMBA and uniform and n:
        _grid_counts_kernel(
            trace.u, trace.noise.astype(np.float64), trace.static_offsets,
            trace.lane.astype(np.int64), trace.golden.astype(np.int64),
            float(offsets[0]), d_o, n_o, steps, v_blts, counts,
        )
    elif n:
        _counts_for_grid_numpy(trace, offsets, steps, v_blts, uniform, d_o, counts)
    cands = [
        AdcRefConfig(offset=float(o), step=float(s), v_blt=float(v))
        for o in offsets
        for s in steps
        for v in v_blts
    ]
    return counts, cands


def _counts_for_grid_numpy(trace, offsets, steps, v_blts, uniform, d_o, counts) -> None:
    """Vectorized reference implementation of the grid-count kernel."""
    n_o, n_s, n_v = len(offsets), len(steps), len(v_blts)
    n = len(trace)
    j_steps = np.arange(N_COMPARATORS, dtype=float)
    so = trace.static_offsets[trace.lane].astype(np.float64)  # (n, 15)
    base = -(so + trace.noise.astype(np.float64))
    lane64 = trace.lane.astype(np.int64)
    golden64 = trace.golden.astype(np.int64)
    row_base = np.arange(n, dtype=np.int64) * (n_o + 1)
    k_idx = np.arange(n_o, dtype=np.int64)
    for si, s in enumerate(steps):
        shift = base - s * j_steps  # (n, 15)
        for vi, v in enumerate(v_blts):
            A = shift + (v * trace.u)[:, None]
            # bins[i, j] = number of grid offsets <= A[i, j]
            if uniform:
                bins = np.floor((A - offsets[0]) / d_o).astype(np.int64) + 1
                np.clip(bins, 0, n_o, out=bins)
            else:
                bins = np.searchsorted(offsets, A.ravel(), side="right").reshape(A.shape)
            rowhist = np.bincount(
                (bins + row_base[:, None]).ravel(), minlength=n * (n_o + 1)
            ).reshape(n, n_o + 1)
            cum = np.cumsum(rowhist, axis=1)
            codes = N_COMPARATORS - cum[:, :n_o]  # (n, n_o); codes[i,k] under offset k
            key = ((k_idx[None, :] * N_LANES + lane64[:, None]) * N_GOLDEN + golden64[:, None]) * N_STATES + codes
            flat = np.bincount(key.ravel(), minlength=n_o * N_LANES * N_GOLDEN * N_STATES)
            per_off = flat.reshape(n_o, N_LANES, N_GOLDEN, N_STATES)
            for oi in range(n_o):
                counts[(oi * n_s + si) * n_v + vi] += per_off[oi]


def _bin_and_score_many(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized absolute binning + scoring over leading axes.

    ``counts`` has shape (..., 10, 16); returns (assign (..., 16),
    score (...,)).  Matches :func:`absolute_binning` / :func:`score_config`.
    """
    col_tot = counts.sum(axis=-2)  # (..., 16)
    raw = np.argmax(counts, axis=-2)  # first max = smaller golden on ties
    assign = np.zeros(counts.shape[:-2] + (N_STATES,), dtype=np.int64)
    prev = np.zeros(counts.shape[:-2], dtype=np.int64)
    for s in range(N_STATES):
        a = np.where(col_tot[..., s] == 0, prev, raw[..., s])
        prev = np.maximum(a, prev)
        assign[..., s] = prev
    g = np.arange(N_GOLDEN)
    diff = np.abs(assign[..., None, :] - g[:, None])  # (..., 10, 16)
    score = np.sum(counts * diff, axis=(-2, -1))
    return assign, score


def _best_candidate(scores: np.ndarray) -> int:
    # candidates are ordered by (offset, step, v_blt); argmin takes the first
    # minimum, which realizes the smaller-offset-then-step tie-break.
    return int(np.argmin(scores))


def tune_multi(
    traces: list[CharacterizationTrace], scopes: tuple, grid: SearchGrid
) -> dict[str, dict[str, TunedRef]]:
    """Tune several scopes over the same traces, sharing the grid counts."""
    per_module = []
    cands = None
    for trace in traces:
        counts, cands = _counts_for_grid(trace, grid)
        per_module.append(counts)
    return {
        scope: _tune_from_counts(traces, per_module, cands, scope)
        for scope in scopes
    }


def tune_from_traces(
    traces: list[CharacterizationTrace], scope: str, grid: SearchGrid
) -> dict[str, TunedRef]:
    """Grid-search references for every unit of ``scope`` over fixed traces."""
    return tune_multi(traces, (scope,), grid)[scope]


def _tune_from_counts(
    traces: list[CharacterizationTrace],
    per_module: list[np.ndarray],
    cands: list[AdcRefConfig],
    scope: str,
) -> dict[str, TunedRef]:
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}")
    out: dict[str, TunedRef] = {}
    if scope == PER_ADC:
        for trace, counts in zip(traces, per_module):
            lane_trials = np.bincount(trace.lane, minlength=N_LANES)
            assign, scores = _bin_and_score_many(counts.transpose(1, 0, 2, 3))  # (8, C, ...)
            for lane in range(N_LANES):
                best = _best_candidate(scores[lane])
                out[unit_key(scope, trace.module_id, lane)] = TunedRef(
                    cfg=cands[best],
                    binmap=BinMap(assign[lane, best]),
                    score=int(scores[lane, best]),
                    trials=int(lane_trials[lane]),
                )
    elif scope == PER_MODULE:
        for trace, counts in zip(traces, per_module):
            mod_counts = counts.sum(axis=1)  # (C, 10, 16)
            assign, scores = _bin_and_score_many(mod_counts)
            best = _best_candidate(scores)
            out[unit_key(scope, trace.module_id)] = TunedRef(
                cfg=cands[best],
                binmap=BinMap(assign[best]),
                score=int(scores[best]),
                trials=len(trace),
            )
    else:  # GLOBAL
        total = sum(c.sum(axis=1) for c in per_module)
        assign, scores = _bin_and_score_many(total)
        best = _best_candidate(scores)
        out[unit_key(scope)] = TunedRef(
            cfg=cands[best],
            binmap=BinMap(assign[best]),
            score=int(scores[best]),
            trials=sum(len(t) for t in traces),
        )
    return out


def tune_references(
    modules: list[CrossbarModule],
    scope: str,
    grid: SearchGrid,
    n_vectors: int,
    rng: np.random.Generator,
) -> dict[str, TunedRef]:
    """Characterize ``modules`` and grid-search references at ``scope``."""
    if n_vectors < 1:
        raise ValueError("n_vectors must be >= 1")
    streams = rng.spawn(len(modules))
    traces = [characterize(m, n_vectors, s)[1] for m, s in zip(modules, streams)]
    return tune_from_traces(traces, scope, grid)


def score_at_config(
    traces: list[CharacterizationTrace], cfg: AdcRefConfig, scope: str = PER_MODULE
) -> dict[str, TunedRef]:
    """Score a single fixed config per scope unit (singleton-grid search)."""
    return tune_from_traces(traces, scope, singleton_grid(cfg))


def ideal_ref_config(
    dist: CellDistParams, xfer: TransferParams, v_blt: float = 1.0, n_step: int = 6000
) -> AdcRefConfig:
    """Analytically ideal references for a zero-sigma module.

    For golden value g the activated conductance sum lies in
    [g*g_lrs, g*g_lrs + (9-g)*g_hrs]; consecutive clusters leave voltage
    gaps, and a config is exact iff some comparator threshold lands in
    every gap.  The search scans step sizes, intersects the exact
    feasible offset intervals, and returns the config with the largest
    safety margin.  Raises if the on/off ratio leaves no gaps or no
    arithmetic ladder fits.
    """
    gl, gh = dist.g_lrs_nom, dist.g_hrs_nom
    if (GROUP_SIZE) * gh >= gl:
        raise ValueError("on/off ratio too small: golden clusters overlap")
    u = lambda G: G / (G + xfer.g_half)
    lo = np.array([u((g - 1) * gl + (GROUP_SIZE + 1 - g) * gh) for g in range(1, GROUP_SIZE + 1)])
    hi = np.array([u(g * gl) for g in range(1, GROUP_SIZE + 1)])

    best = None  # (margin, offset, step)
    span = hi[-1] - lo[0]
    for s in np.linspace(span / (N_COMPARATORS - 1) * 0.55, span / 4, n_step):
        # feasible offsets for gap k: union over j of (lo[k]-j*s, hi[k]-j*s)
        intervals = [(lo[0] - j * s, hi[0] - j * s) for j in range(N_COMPARATORS)]
        for k in range(1, GROUP_SIZE):
            gaps_k = [(lo[k] - j * s, hi[k] - j * s) for j in range(N_COMPARATORS)]
            merged = []
            for a1, b1 in intervals:
                for a2, b2 in gaps_k:
                    a, b = max(a1, a2), min(b1, b2)
                    if a < b:
                        merged.append((a, b))
            intervals = merged
            if not intervals:
                break
        if not intervals:
            continue
        a, b = max(intervals, key=lambda ab: ab[1] - ab[0])
        margin = (b - a) / 2
        if a >= 0 and (best is None or margin > best[0]):
            best = (margin, (a + b) / 2, s)
    if best is None:
        raise ValueError("no exact arithmetic reference ladder exists for these parameters")
    _, offset, step = best
    return AdcRefConfig(offset=offset * v_blt, step=step * v_blt, v_blt=v_blt)
