import numpy as np
import pytest

from cimsim.effbits import NoiseProfile, ResidualDistribution
from cimsim.nnsim import (
    MappedNetwork,
    QuantSpec,
    dequantize_weights,
    inject_static,
    int_forward,
    map_network,
    noisy_forward,
    quantize_input,
    quantize_weights,
    read_cimw,
    write_cimw,
)
from cimsim.nnsim.forward import quantize_network
from cimsim.nnsim.mapping import load_mapped, save_mapped, with_profiles
from cimsim.streams import substream
from cimsim.tasks.cnn import glyph_arch
from cimsim.tasks.dqn import gridworld_arch

SPEC4 = QuantSpec(w_bits=4, a_bits=6, layer_scales=(1.0,), out_shifts=(0,))


def test_quantize_zero_and_saturation():
    codes = quantize_weights(np.array([0.0]), SPEC4)
    assert codes[0] == 8  # offset-binary zero
    top = quantize_weights(np.array([1.0]), SPEC4)
    assert top[0] == 15
    bottom = quantize_weights(np.array([-2.0]), SPEC4)
    assert bottom[0] == 0


def test_quantize_round_trip_error_bound():
    rng = substream(50, "q")
    spec = QuantSpec(w_bits=6, a_bits=6, layer_scales=(2.0,), out_shifts=(0,))
    lsb = spec.w_lsb(0)
    w = rng.uniform(-2.0 + lsb, 2.0 - lsb, 500)
    back = dequantize_weights(quantize_weights(w, spec), spec)
    assert np.max(np.abs(back - w)) <= lsb / 2 + 1e-12


def test_quantize_rejects_non_finite():
    with pytest.raises(ValueError):
        quantize_weights(np.array([np.nan]), SPEC4)


def _random_profiles(n, rng, sigma=0.05, residual_sigma=0.0):
    profs = []
    for i in range(n):
        res = ResidualDistribution.degenerate()
        if residual_sigma:
            samples = np.sort(rng.normal(0, residual_sigma, 400))
            res = ResidualDistribution(edges=np.array([samples.min(), samples.max()]),
                                       masses=np.array([1.0]), samples=samples)
        profs.append(NoiseProfile(scope=f"adc:0:{i}", mu0=0.0, sigma0=sigma,
                                  mu1=1.0, sigma1=sigma, residual=res))
    return profs


def test_mapping_group_chunking_and_padding():
    spec = QuantSpec(w_bits=4, a_bits=6, layer_scales=(1.0, 1.0), out_shifts=(2, 0))
    arch = {"input_shape": (18,), "layers": [
        {"kind": "fc", "out": 10, "relu": True},
        {"kind": "fc", "out": 4, "relu": False},
    ]}
    rng = substream(51, "m")
    codes = [
        quantize_weights(rng.uniform(-1, 1, (18, 10)), spec, 0),
        quantize_weights(rng.uniform(-1, 1, (10, 4)), spec, 1),
    ]
    net = map_network(codes, arch, spec, [NoiseProfile.ideal()], substream(51, "map"))
    assert net.layers[0].n_groups == 2 and net.layers[0].padding == 0
    assert net.layers[1].n_groups == 2 and net.layers[1].padding == 8
    # padding rows are programmed-0 cells on every plane
    assert np.all(net.layers[1].planes[:, 1, 1:, :] == 0)


def test_mapping_is_lossless():
    rng = substream(52, "l")
    spec = QuantSpec(w_bits=5, a_bits=6, layer_scales=(1.0,), out_shifts=(0,))
    codes = [quantize_weights(rng.uniform(-1, 1, (31, 7)), spec, 0)]
    arch = {"input_shape": (31,), "layers": [{"kind": "fc", "out": 7, "relu": False}]}
    net = map_network(codes, arch, spec, [NoiseProfile.ideal()], substream(52, "map"))
    planes = net.layers[0].planes
    rebuilt = sum((planes[p].astype(np.int64) << p) for p in range(spec.w_bits))
    rebuilt = rebuilt.reshape(-1, 7)[:31]
    assert np.array_equal(rebuilt, codes[0].astype(np.int64))


def test_profile_assignment_replay():
    rng = substream(53, "p")
    spec = QuantSpec(w_bits=4, a_bits=6, layer_scales=(1.0,), out_shifts=(0,))
    codes = [quantize_weights(rng.uniform(-1, 1, (80, 5)), spec, 0)]
    arch = {"input_shape": (80,), "layers": [{"kind": "fc", "out": 5, "relu": False}]}
    profs = _random_profiles(80, rng)
    a = map_network(codes, arch, spec, profs, substream(53, "map"))
    b = map_network(codes, arch, spec, profs, substream(53, "map"))
    assert np.array_equal(a.layers[0].profile_idx, b.layers[0].profile_idx)
    assert len(set(a.layers[0].profile_idx.tolist())) == a.layers[0].n_groups


def test_inject_ideal_is_identity_and_replayable():
    rng = substream(54, "i")
    spec = QuantSpec(w_bits=4, a_bits=6, layer_scales=(1.0,), out_shifts=(0,))
    codes = [quantize_weights(rng.uniform(-1, 1, (27, 6)), spec, 0)]
    arch = {"input_shape": (27,), "layers": [{"kind": "fc", "out": 6, "relu": False}]}
    ideal = map_network(codes, arch, spec, [NoiseProfile.ideal()], substream(54, "map"))
    injected = inject_static(ideal, substream(54, "inj"))
    assert np.array_equal(injected.layers[0].eb, ideal.layers[0].planes.astype(float))

    noisy = map_network(codes, arch, spec, _random_profiles(4, rng), substream(54, "map2"))
    x = inject_static(noisy, substream(54, "inj2"))
    y = inject_static(noisy, substream(54, "inj2"))
    assert np.array_equal(x.layers[0].eb, y.layers[0].eb)


def test_inject_sampling_statistics():
    rng = substream(55, "s")
    spec = QuantSpec(w_bits=1, a_bits=4, layer_scales=(1.0,), out_shifts=(0,))
    n_rows, n_out = 900, 120  # ~1e5 cells
    codes = np.ones((n_rows, n_out), dtype=np.uint16)
    arch = {"input_shape": (n_rows,), "layers": [{"kind": "fc", "out": n_out, "relu": False}]}
    prof = NoiseProfile(scope="m", mu0=0.1, sigma0=0.05, mu1=0.9, sigma1=0.08)
    net = map_network([codes], arch, spec, [prof], substream(55, "map"))
    injected = inject_static(net, substream(55, "inj"))
    eb = injected.layers[0].eb[0]
    bits = injected.layers[0].planes[0]
    ones = eb[bits == 1]
    n = ones.size
    assert abs(ones.mean() - 0.9) < 3 * 0.08 / np.sqrt(n)


def test_noiseless_forward_matches_int_oracle_mlp_and_cnn():
    rng = substream(56, "e")
    for arch, shape in ((gridworld_arch(), (200, 9)), (glyph_arch(), (40, 1, 8, 8))):
        weights = {}
        from cimsim.nnsim.arch import layer_shapes

        for li, wshape in enumerate(layer_shapes(arch)):
            weights[f"layer{li}"] = rng.normal(0, 0.4, wshape)
        calib_x = rng.random((32,) + tuple(arch["input_shape"]))
        codes, spec = quantize_network(arch, weights, 4, 6, calib_x)
        x = rng.random(shape)
        ref = int_forward(arch, codes, spec, x)
        net = inject_static(
            map_network(codes, arch, spec, [NoiseProfile.ideal()], substream(56, "m")),
            substream(56, "i"),
        )
        out = noisy_forward(net, x, substream(56, "f"))
        assert np.array_equal(ref, out)


def test_zero_input_gives_zero_logits_on_ideal_profiles():
    rng = substream(57, "z")
    arch = gridworld_arch()
    weights = {"layer0": rng.normal(0, 0.5, (64, 9)), "layer1": rng.normal(0, 0.5, (4, 64))}
    codes, spec = quantize_network(arch, weights, 4, 6, rng.random((32, 9)))
    net = inject_static(map_network(codes, arch, spec, [NoiseProfile.ideal()], substream(57, "m")), substream(57, "i"))
    out = noisy_forward(net, np.zeros((3, 9)), substream(57, "f"))
    assert np.all(out == 0.0)


def test_noisy_outputs_vary_across_seeds_but_replay_identically():
    rng = substream(58, "v")
    arch = gridworld_arch()
    weights = {"layer0": rng.normal(0, 0.5, (64, 9)), "layer1": rng.normal(0, 0.5, (4, 64))}
    codes, spec = quantize_network(arch, weights, 4, 6, rng.random((32, 9)))
    profs = _random_profiles(3, rng, sigma=0.05, residual_sigma=0.3)
    net = inject_static(map_network(codes, arch, spec, profs, substream(58, "m")), substream(58, "i"))
    x = rng.random((50, 9))
    a = noisy_forward(net, x, substream(58, "f", 1))
    b = noisy_forward(net, x, substream(58, "f", 2))
    c = noisy_forward(net, x, substream(58, "f", 1))
    assert not np.array_equal(a, b)
    assert np.array_equal(a, c)
    assert np.std([noisy_forward(net, x[:1], substream(58, "f", k))[0, 0] for k in range(20)]) > 0


def test_partials_clamped_to_mapped_range():
    # profile with a huge mu1 forces every partial onto the clamp; the
    # output can then never exceed the all-nines recombination bound
    rng = substream(59, "c")
    arch = {"input_shape": (9,), "layers": [{"kind": "fc", "out": 3, "relu": False}]}
    weights = {"layer0": np.full((3, 9), 0.9)}
    codes, spec = quantize_network(arch, weights, 4, 4, rng.random((16, 9)))
    prof = NoiseProfile(scope="m", mu0=3.0, sigma0=0.0, mu1=5.0, sigma1=0.0)
    net = inject_static(map_network(codes, arch, spec, [prof], substream(59, "m")), substream(59, "i"))
    x = np.ones((4, 9))
    out = noisy_forward(net, x, substream(59, "f"))
    sum_codes = 9 * spec.a_max
    bound = 9 * sum((1 << (p + q)) for p in range(4) for q in range(4)) - spec.zero_code * sum_codes
    assert np.all(out <= bound)


def test_cimw_round_trip(tmp_path):
    rng = substream(60, "w")
    tensors = {"layer0": rng.normal(0, 1, (8, 3)).astype(np.float32),
               "layer1": rng.normal(0, 1, (4, 8, 3, 3)).astype(np.float32)}
    path = tmp_path / "w.cimw"
    write_cimw(path, tensors)
    back = read_cimw(path)
    assert set(back) == set(tensors)
    for k in tensors:
        assert np.array_equal(back[k], tensors[k].astype(np.float64))


def test_mapped_network_snapshot_round_trip(tmp_path):
    rng = substream(61, "ms")
    arch = gridworld_arch()
    weights = {"layer0": rng.normal(0, 0.5, (64, 9)), "layer1": rng.normal(0, 0.5, (4, 64))}
    codes, spec = quantize_network(arch, weights, 4, 6, rng.random((32, 9)))
    profs = _random_profiles(2, rng, residual_sigma=0.2)
    net = inject_static(map_network(codes, arch, spec, profs, substream(61, "m")), substream(61, "i"))
    save_mapped(net, tmp_path / "net.json", tmp_path / "net.bin")
    back = load_mapped(tmp_path / "net.json", tmp_path / "net.bin")
    x = rng.random((20, 9))
    a = noisy_forward(net, x, substream(61, "f"))
    b = noisy_forward(back, x, substream(61, "f"))
    assert np.array_equal(a, b)


def test_drift_refresh_unchanged_without_stress():
    from cimsim.adc import AdcParams, AdcRefConfig
    from cimsim.chip import apply_drift_to_network, build_chip, calibrate_chip, extract_profiles
    from cimsim.calib import PER_MODULE, SearchGrid
    from cimsim.device import CellDistParams, DriftParams

    rng = substream(62, "d")
    chip = build_chip(seed=62, n_modules=1,
                      dist=CellDistParams(g_lrs_sigma=0.02, g_hrs_sigma=0.05))
    grid = SearchGrid(offsets=(0.02, 0.04, 0.06), steps=(0.02, 0.03), v_blts=(1.0,))
    chip = calibrate_chip(chip, PER_MODULE, grid=grid, n_vectors=64)
    profiles, _ = extract_profiles(chip, n_vectors=64)
    arch = gridworld_arch()
    weights = {"layer0": rng.normal(0, 0.5, (64, 9)), "layer1": rng.normal(0, 0.5, (4, 64))}
    codes, spec = quantize_network(arch, weights, 4, 6, rng.random((32, 9)))
    net = inject_static(map_network(codes, arch, spec, profiles, substream(62, "m")), substream(62, "i"))
    refreshed, _ = apply_drift_to_network(net, chip, [], DriftParams(), n_vectors=64)
    for a, b in zip(net.layers, refreshed.layers):
        assert np.array_equal(a.planes, b.planes)
        assert np.array_equal(a.profile_idx, b.profile_idx)


def test_drift_raises_mu0_monotonically():
    from cimsim.chip import build_chip, calibrate_chip, drift_chip, extract_profiles
    from cimsim.calib import PER_MODULE, SearchGrid
    from cimsim.device import CellDistParams, DriftParams, StressEvent

    chip = build_chip(seed=63, n_modules=1,
                      dist=CellDistParams(g_lrs_sigma=0.02, g_hrs_sigma=0.05))
    grid = SearchGrid(offsets=(0.02, 0.04, 0.06, 0.08), steps=(0.02, 0.03), v_blts=(1.0,))
    chip = calibrate_chip(chip, PER_MODULE, grid=grid, n_vectors=96)
    drift = DriftParams()
    mu0s, mu1s = [], []
    for k, cycles in enumerate((0, 150_000, 300_000)):
        if k > 0:
            chip = drift_chip(chip, StressEvent(v_bl=1.3, cycles=150_000), drift)
        profiles, _ = extract_profiles(chip, n_vectors=96, stage=f"dr{k}")
        mu0s.append(profiles[0].mu0)
        mu1s.append(profiles[0].mu1)
    assert mu0s[0] < mu0s[1] < mu0s[2]
    assert abs(mu1s[-1] - mu1s[0]) < abs(mu0s[-1] - mu0s[0])
