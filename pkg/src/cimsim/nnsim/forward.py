"""Forward passes: noisy bit-serial analog path and integer reference path.

``noisy_forward`` evaluates a mapped network the way the hardware reads
it: activations are applied one bit plane at a time, each acc-9 group
read produces an effective-bit dot product plus a dynamic-error draw,
the rounded partial is clamped to the mapped-value range [0, 9], and the
digital side recombines plane partials with the offset-binary
correction.

``int_forward`` is a standalone integer implementation of the same
quantized network (direct signed GEMMs, no grouping, no clamping); with
ideal noise profiles the two paths agree bit-exactly.
"""

from __future__ import annotations

import numpy as np

from ..crossbar import GROUP_SIZE
from .arch import im2col, maxpool, weight_matrix
from .mapping import MappedNetwork
from .quant import QuantSpec, quantize_input, requantize


def _to_spatial(acc: np.ndarray, n: int, oh: int, ow: int) -> np.ndarray:
    return acc.reshape(n, oh, ow, -1).transpose(0, 3, 1, 2)


def noisy_forward(net: MappedNetwork, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Noisy quantized forward pass; returns final-layer logits.

    ``x`` holds floats in [0, 1] shaped (batch,) + input_shape.  The
    pass is deterministic given (net, rng state, x): draws happen in a
    fixed order (layer, activation plane, weight plane, profile id), and
    profiles whose residual distribution is degenerate at zero consume
    no randomness at all.
    """
    spec = net.quant
    a_codes = quantize_input(x, spec.a_bits)
    n = a_codes.shape[0]
    half = spec.zero_code
    act = a_codes
    n_layers = len(net.layers)
    for li, layer in enumerate(net.layers):
        meta = layer.meta
        if meta["kind"] == "conv":
            X, oh, ow = im2col(act, meta["k"], meta["stride"], meta["pad"])
        else:
            X = act.reshape(n, -1)
        rows = X.shape[0]
        padded = np.zeros((rows, layer.n_groups * GROUP_SIZE), dtype=np.int64)
        padded[:, : layer.in_dim] = X
        sum_codes = padded.sum(axis=1)
        Xg = padded.reshape(rows, layer.n_groups, GROUP_SIZE)

        prof_of_group = layer.profile_idx
        noisy_groups = [
            (pi, np.where(prof_of_group == pi)[0])
            for pi in sorted(set(prof_of_group.tolist()))
            if not net.profiles[pi].residual.degenerate_zero
        ]

        acc = np.zeros((rows, layer.out_dim))
        for q in range(spec.a_bits):
            Xq = ((Xg >> q) & 1).astype(np.float64)
            for p in range(spec.w_bits):
                raw = np.einsum("ngi,gio->ngo", Xq, layer.eb[p])
                for pi, gsel in noisy_groups:
                    eps = net.profiles[pi].residual.resample(
                        (rows, gsel.size, layer.out_dim), rng
                    )
                    raw[:, gsel, :] += eps
                partial = np.clip(np.round(raw), 0, GROUP_SIZE)
                acc += float(1 << (p + q)) * partial.sum(axis=1)
        acc -= float(half) * sum_codes[:, None]

        if meta["kind"] == "conv":
            acc = _to_spatial(acc, n, oh, ow)
        if li == n_layers - 1:
            return acc
        if meta.get("relu"):
            acc = np.maximum(acc, 0.0)
        act = requantize(acc, spec.out_shifts[li], spec.a_bits)
        if meta["kind"] == "conv" and meta.get("pool", 1) > 1:
            act = maxpool(act, meta["pool"])
    return acc


def int_forward(arch: dict, layer_codes: list[np.ndarray], spec: QuantSpec, x: np.ndarray) -> np.ndarray:
    """Pure integer quantized forward pass (the clean reference path)."""
    a_codes = quantize_input(x, spec.a_bits)
    n = a_codes.shape[0]
    half = spec.zero_code
    act = a_codes
    n_layers = len(arch["layers"])
    for li, meta in enumerate(arch["layers"]):
        W = layer_codes[li].astype(np.int64) - half  # (in_dim, out) signed
        if meta["kind"] == "conv":
            X, oh, ow = im2col(act, meta["k"], meta["stride"], meta["pad"])
        else:
            X = act.reshape(n, -1)
        acc = X @ W
        if meta["kind"] == "conv":
            acc = _to_spatial(acc, n, oh, ow)
        if li == n_layers - 1:
            return acc.astype(np.float64)
        if meta.get("relu"):
            acc = np.maximum(acc, 0)
        act = requantize(acc, spec.out_shifts[li], spec.a_bits)
        if meta["kind"] == "conv" and meta.get("pool", 1) > 1:
            act = maxpool(act, meta["pool"])
    return acc.astype(np.float64)


def quantize_network(
    arch: dict,
    weights: dict[str, np.ndarray],
    w_bits: int,
    a_bits: int,
    calib_x: np.ndarray,
) -> tuple[list[np.ndarray], QuantSpec]:
    """Quantize float weights and calibrate activation shifts.

    Weight scales are the smallest power of two covering each layer's
    max |w|; output shifts are chosen from an integer dry run on
    ``calib_x`` so post-ReLU accumulators fit the a-bit range.
    """
    from .quant import pow2_scale, quantize_weights

    mats = []
    scales = []
    for li, meta in enumerate(arch["layers"]):
        w = weights[f"layer{li}"]
        mat = weight_matrix(w, meta["kind"])
        scales.append(pow2_scale(float(np.abs(mat).max())))
        mats.append(mat)
    spec = QuantSpec(w_bits=w_bits, a_bits=a_bits, layer_scales=tuple(scales),
                     out_shifts=tuple([0] * len(mats)))
    codes = [quantize_weights(m, spec, li) for li, m in enumerate(mats)]

    # calibrate shifts layer by layer on the integer path
    shifts = []
    act = quantize_input(calib_x, a_bits)
    n = act.shape[0]
    half = spec.zero_code
    amax = spec.a_max
    for li, meta in enumerate(arch["layers"]):
        W = codes[li].astype(np.int64) - half
        if meta["kind"] == "conv":
            X, oh, ow = im2col(act, meta["k"], meta["stride"], meta["pad"])
        else:
            X = act.reshape(n, -1)
        acc = X @ W
        if meta["kind"] == "conv":
            acc = _to_spatial(acc, n, oh, ow)
        if li == len(arch["layers"]) - 1:
            shifts.append(0)
            break
        if meta.get("relu"):
            acc = np.maximum(acc, 0)
        peak = int(acc.max()) if acc.size else 0
        shift = max(0, int(np.ceil(np.log2(max(peak, 1) / amax))) if peak > amax else 0)
        shifts.append(shift)
        act = requantize(acc, shift, a_bits)
        if meta["kind"] == "conv" and meta.get("pool", 1) > 1:
            act = maxpool(act, meta["pool"])
    spec = QuantSpec(w_bits=w_bits, a_bits=a_bits, layer_scales=tuple(scales),
                     out_shifts=tuple(shifts))
    return codes, spec
