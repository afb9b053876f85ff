"""Network architecture descriptors and the shared digital ops.

An architecture is a dict: {"input_shape": tuple, "layers": [...]} where
each layer is {"kind": "conv"|"fc", ...}.  Conv layers lower to GEMM via
im2col; pooling, ReLU, and requantization are digital operations shared
by the integer reference path and the noisy analog path (the analog MAC
itself is what the two paths implement differently).
"""

from __future__ import annotations

import numpy as np


def conv_layer(out_ch: int, k: int = 3, stride: int = 1, pad: int = 1,
               relu: bool = True, pool: int = 1) -> dict:
    return {"kind": "conv", "out_ch": out_ch, "k": k, "stride": stride,
            "pad": pad, "relu": relu, "pool": pool}


def fc_layer(out: int, relu: bool = False) -> dict:
    return {"kind": "fc", "out": out, "relu": relu}


def layer_shapes(arch: dict) -> list[tuple]:
    """Weight tensor shapes implied by the architecture."""
    shape = arch["input_shape"]
    shapes = []
    for layer in arch["layers"]:
        if layer["kind"] == "conv":
            c, h, w = shape
            shapes.append((layer["out_ch"], c, layer["k"], layer["k"]))
            oh = (h + 2 * layer["pad"] - layer["k"]) // layer["stride"] + 1
            ow = (w + 2 * layer["pad"] - layer["k"]) // layer["stride"] + 1
            oh, ow = oh // layer["pool"], ow // layer["pool"]
            shape = (layer["out_ch"], oh, ow)
        else:
            in_dim = int(np.prod(shape))
            shapes.append((layer["out"], in_dim))
            shape = (layer["out"],)
    return shapes


def weight_matrix(w: np.ndarray, kind: str) -> np.ndarray:
    """Flatten a weight tensor to the (in_dim, out_dim) GEMM layout."""
    if kind == "conv":
        oc = w.shape[0]
        return w.reshape(oc, -1).T
    return np.asarray(w).T


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    """(n, c, h, w) int codes -> (n * oh * ow, c*k*k) patches.

    Zero padding contributes activation code 0.
    """
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    hh, ww = x.shape[2], x.shape[3]
    oh = (hh - k) // stride + 1
    ow = (ww - k) // stride + 1
    s = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, k, k),
        strides=(s[0], s[1], s[2] * stride, s[3] * stride, s[2], s[3]),
    )
    patches = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    return np.ascontiguousarray(patches), oh, ow


def maxpool(x: np.ndarray, p: int) -> np.ndarray:
    """(n, c, h, w) -> non-overlapping p x p max pooling."""
    if p == 1:
        return x
    n, c, h, w = x.shape
    return x.reshape(n, c, h // p, p, w // p, p).max(axis=(3, 5))
