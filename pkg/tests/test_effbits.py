import numpy as np
import pytest

from cimsim.calib import PER_ADC, PER_MODULE, absolute_binning, characterize
from cimsim.effbits import (
    EffBitGroup,
    NoiseProfile,
    ResidualDistribution,
    eb_map,
    eb_statistics,
    fit_effective_bits,
    fit_module,
    lad_fit,
    residual_distribution,
)
from cimsim.streams import substream
from conftest import ALL_WL, ideal_module, lad_linprog


def test_ideal_fit_recovers_bits_exactly():
    bits = np.array([1, 0, 1, 0, 1, 0, 1, 0, 1], dtype=float)
    y = ALL_WL @ bits
    fit = fit_effective_bits((ALL_WL, y))
    assert np.max(np.abs(fit.eb - bits)) < 1e-6
    assert fit.objective < 1e-6


def test_all_zero_responses():
    y = np.zeros(len(ALL_WL))
    fit = fit_effective_bits((ALL_WL, y))
    assert np.max(np.abs(fit.eb)) < 1e-9


def test_single_outlier_is_ignored():
    bits = np.array([1, 0, 1, 0, 1, 0, 1, 0, 1], dtype=float)
    y = ALL_WL @ bits
    y[100] += 1.0
    fit = fit_effective_bits((ALL_WL, y))
    assert np.max(np.abs(fit.eb - bits)) < 1e-6
    assert fit.objective == pytest.approx(1.0, abs=1e-6)


def test_objective_residual_consistency():
    rng = substream(40, "f")
    X = rng.integers(0, 2, (64, 9)).astype(float)
    y = X @ rng.random(9) + rng.normal(0, 0.2, 64)
    fit = fit_effective_bits((X, y))
    assert fit.objective == pytest.approx(np.abs(fit.residuals).sum(), rel=1e-12)


def test_rank_deficient_names_cells():
    rng = substream(39, "rank")
    X = rng.integers(0, 2, (40, 9)).astype(float)
    X[:, 4] = 0.0  # cell 4 never activated
    with pytest.raises(ValueError, match=r"\[4\]"):
        fit_effective_bits((X, np.zeros(40)))
    with pytest.raises(ValueError):
        fit_effective_bits((ALL_WL[:5], np.zeros(5)))


def test_lad_matches_lp_oracle_on_small_batch():
    worst = 0.0
    for seed in range(10):
        rng = substream(41, "lp", seed)
        X = rng.integers(0, 2, (64, 9)).astype(float)
        b = rng.integers(0, 2, 9).astype(float)
        y = X @ b
        k = int(rng.integers(1, 12))
        idx = rng.choice(64, k, replace=False)
        y[idx] += rng.choice([-2.0, -1.0, 1.0, 2.0], k)
        beta = lad_fit(X, y)
        obj = np.abs(y - X @ beta).sum()
        _, obj_lp = lad_linprog(X, y)
        worst = max(worst, abs(obj - obj_lp) / obj_lp)
    assert worst < 1e-6


def test_fit_optimality_vs_programmed_bits():
    # the fitted objective can never exceed the objective of the true bits
    mod, _ = ideal_module(seed=42)
    _, trace = characterize(mod, 64, substream(42, "c"))
    bm = absolute_binning(trace.module_counts())
    groups = fit_module(mod, trace, [bm] * 8)
    for g in groups[::37]:
        sel = (trace.group == g.group) & (trace.column == g.column)
        X = trace.wl[sel].astype(float)
        y = bm.assign[trace.code[sel]].astype(float)
        obj_bits = np.abs(y - X @ g.programmed_bits).sum()
        assert g.objective <= obj_bits + 1e-9


def test_residual_distribution_degenerate_and_symmetric():
    zeros = [EffBitGroup(eb=np.zeros(9), residuals=np.zeros(50), objective=0.0)]
    d = residual_distribution(zeros)
    assert d.degenerate_zero
    assert d.masses.tolist() == [1.0]

    sym = [EffBitGroup(eb=np.zeros(9), residuals=np.array([-1.0, 1.0] * 25), objective=50.0)]
    d2 = residual_distribution(sym, bins=2)
    assert d2.samples.mean() == 0.0
    assert np.allclose(d2.masses, [0.5, 0.5])


def test_residual_distribution_order_invariant():
    rng = substream(43, "r")
    res = rng.normal(0, 0.3, 200)
    a = residual_distribution([EffBitGroup(np.zeros(9), res, float(np.abs(res).sum()))])
    b = residual_distribution([EffBitGroup(np.zeros(9), res[::-1].copy(), float(np.abs(res).sum()))])
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.masses, b.masses)


def test_residual_resample_draws_from_samples():
    d = ResidualDistribution(edges=np.array([-1.5, 1.5]), masses=np.array([1.0]),
                             samples=np.array([-1.0, 0.0, 2.0]))
    draws = d.resample(5000, substream(44, "s"))
    assert set(np.unique(draws)) <= {-1.0, 0.0, 2.0}
    assert (draws == 2.0).mean() == pytest.approx(1 / 3, abs=0.03)


def test_eb_statistics_hand_example():
    # documented estimator: population std (divide by n)
    g0 = EffBitGroup(
        eb=np.array([0.1, -0.1, 0.9, 1.1, 0, 0, 0, 0, 0]),
        residuals=np.zeros(4),
        objective=0.0,
        programmed_bits=np.array([0, 0, 1, 1, 0, 0, 0, 0, 0]),
    )
    # restrict to the four cells of interest by marking the rest LRS in a
    # second group so both populations stay non-empty
    g1 = EffBitGroup(
        eb=np.array([0.1, -0.1, 0.9, 1.1, 1, 1, 1, 1, 1]),
        residuals=np.zeros(4),
        objective=0.0,
        programmed_bits=np.array([0, 0, 1, 1, 1, 1, 1, 1, 1]),
    )
    profiles = eb_statistics([g1], PER_MODULE)
    p = profiles[0]
    assert p.mu0 == pytest.approx(0.0)
    assert p.sigma0 == pytest.approx(0.1)
    eb1 = np.array([0.9, 1.1, 1, 1, 1, 1, 1])
    assert p.mu1 == pytest.approx(eb1.mean())
    assert p.sigma1 == pytest.approx(eb1.std())


def test_eb_statistics_ideal_pipeline():
    mod, _ = ideal_module(seed=45)
    _, trace = characterize(mod, 64, substream(45, "c"))
    bm = absolute_binning(trace.module_counts())
    groups = fit_module(mod, trace, [bm] * 8)
    profiles = eb_statistics(groups, PER_MODULE)
    assert len(profiles) == 1
    p = profiles[0]
    assert p.mu0 == pytest.approx(0.0, abs=1e-9)
    assert p.sigma0 == pytest.approx(0.0, abs=1e-9)
    assert p.mu1 == pytest.approx(1.0, abs=1e-9)
    assert p.sigma1 == pytest.approx(0.0, abs=1e-9)
    assert p.residual.degenerate_zero


def test_eb_statistics_per_adc_unit_count_and_no_leakage():
    mod, _ = ideal_module(seed=46)
    _, trace = characterize(mod, 32, substream(46, "c"))
    bm = absolute_binning(trace.module_counts())
    groups = fit_module(mod, trace, [bm] * 8)
    profiles = eb_statistics(groups, PER_ADC)
    assert len(profiles) == 8
    assert [p.scope for p in profiles] == [f"adc:0:{lane}" for lane in range(8)]
    # residual sample counts partition the trace: 8 cols x 9 groups x 32
    assert all(len(p.residual.samples) == 8 * 9 * 32 for p in profiles)


def test_eb_statistics_missing_state_rejected():
    g = EffBitGroup(
        eb=np.ones(9), residuals=np.zeros(4), objective=0.0,
        programmed_bits=np.ones(9, dtype=int),
    )
    with pytest.raises(ValueError, match="no cells"):
        eb_statistics([g], PER_MODULE)


def test_eb_map_ideal_matches_pattern_and_lane_errors():
    mod, _ = ideal_module(seed=47)
    _, trace = characterize(mod, 64, substream(47, "c"))
    bm = absolute_binning(trace.module_counts())
    groups = fit_module(mod, trace, [bm] * 8)
    grid, lane_err = eb_map(mod, groups)
    assert grid.shape == (81, 64)
    assert np.max(np.abs(grid - mod.bits)) < 1e-6
    assert np.all(lane_err < 1e-6)


def test_eb_map_flags_skewed_lane():
    from cimsim.adc import AdcParams, ComparatorMismatch
    from cimsim.crossbar import TransferParams, build_module, random_bit_pattern
    from cimsim.calib import ideal_ref_config
    from conftest import zero_sigma_dist

    dist = zero_sigma_dist()
    cfg = ideal_ref_config(dist, TransferParams())
    adcp = AdcParams(cfg=cfg, sigma_static=0.0, sigma_dynamic=0.0)
    bits = random_bit_pattern(substream(48, "bits"))
    mod = build_module(dist, bits, adcp, TransferParams(), substream(48, "build"))
    lanes = list(mod.lanes)
    lanes[5] = (cfg, ComparatorMismatch(lanes[5][1].static_offsets - 0.02, 0.0))
    mod.lanes = lanes
    _, trace = characterize(mod, 64, substream(48, "c"))
    bm = absolute_binning(trace.module_counts())
    groups = fit_module(mod, trace, [bm] * 8)
    _, lane_err = eb_map(mod, groups)
    assert np.argmax(lane_err) == 5
    assert lane_err[5] > 3 * max(np.delete(lane_err, 5).max(), 1e-12)
