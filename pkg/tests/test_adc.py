import numpy as np
import pytest

from cimsim.adc import (
    N_COMPARATORS,
    AdcRefConfig,
    ComparatorMismatch,
    decode,
    sample_mismatch,
    thresholds,
)
from cimsim.streams import substream

ZERO = ComparatorMismatch.zero()


def test_threshold_progression():
    t = thresholds(AdcRefConfig(offset=0.1, step=0.02, v_blt=1.0))
    assert np.allclose(t, 0.1 + 0.02 * np.arange(15))
    t = thresholds(AdcRefConfig(offset=0.0, step=1.0, v_blt=20.0))
    assert np.array_equal(t, np.arange(15.0))


def test_threshold_span_identity():
    rng = substream(4, "t")
    for _ in range(50):
        cfg = AdcRefConfig(offset=float(rng.uniform(0, 0.2)), step=float(rng.uniform(0.005, 0.05)), v_blt=1.0)
        t = thresholds(cfg)
        assert t[14] - t[0] == pytest.approx(14 * cfg.step, rel=1e-12)
        assert np.all(np.diff(t) > 0)


def test_decode_extremes_and_midpoint():
    cfg = AdcRefConfig(offset=0.1, step=0.02, v_blt=1.0)
    rng = substream(5, "d")
    assert decode(0.0, cfg, ZERO, rng) == 0
    assert decode(0.9, cfg, ZERO, rng) == 15
    # v = offset + 3.5 * step clears thresholds j = 0..3
    assert decode(cfg.offset + 3.5 * cfg.step, cfg, ZERO, rng) == 4


def test_decode_monotone_and_bounded():
    cfg = AdcRefConfig(offset=0.05, step=0.03, v_blt=1.0)
    rng = substream(6, "m")
    vs = np.linspace(-0.1, 1.2, 400)
    codes = decode(vs, cfg, ZERO, rng)
    assert np.all(np.diff(codes) >= 0)
    assert codes.min() >= 0 and codes.max() <= 15


def test_quantization_consistency_at_thresholds():
    cfg = AdcRefConfig(offset=0.05, step=0.03, v_blt=1.0)
    rng = substream(7, "q")
    eps = 1e-9
    t = thresholds(cfg)
    for j in range(15):
        above = decode(t[j] + eps, cfg, ZERO, rng)
        below = decode(t[j] - eps, cfg, ZERO, rng)
        assert above - below == 1


def test_non_finite_rejected():
    cfg = AdcRefConfig(offset=0.05, step=0.03, v_blt=1.0)
    with pytest.raises(ValueError):
        decode(float("nan"), cfg, ZERO, substream(8, "n"))


def test_sample_mismatch_zero_and_replay():
    mm = sample_mismatch(0.0, 0.0, substream(9, "z"))
    assert np.all(mm.static_offsets == 0.0)
    a = sample_mismatch(0.01, 0.002, substream(10, "r"))
    b = sample_mismatch(0.01, 0.002, substream(10, "r"))
    assert np.array_equal(a.static_offsets, b.static_offsets)


def test_mismatch_distinct_across_substreams():
    draws = [sample_mismatch(0.01, 0.0, substream(11, "lane", k)).static_offsets for k in range(8)]
    for i in range(8):
        for j in range(i + 1, 8):
            assert not np.array_equal(draws[i], draws[j])


def test_dynamic_noise_perturbs_decode():
    cfg = AdcRefConfig(offset=0.05, step=0.03, v_blt=1.0)
    mm = ComparatorMismatch(np.zeros(N_COMPARATORS), dynamic_sigma=0.05)
    rng = substream(12, "dyn")
    v = cfg.offset + 4.0 * cfg.step
    codes = {decode(v, cfg, mm, rng) for _ in range(200)}
    assert len(codes) > 1


def test_config_validation():
    with pytest.raises(ValueError):
        AdcRefConfig(offset=-0.1, step=0.02, v_blt=1.0)
    with pytest.raises(ValueError):
        AdcRefConfig(offset=0.1, step=0.0, v_blt=1.0)
    with pytest.raises(ValueError):
        AdcRefConfig(offset=0.5, step=0.02, v_blt=0.4)
    with pytest.raises(ValueError):
        ComparatorMismatch(np.zeros(14), 0.0)
