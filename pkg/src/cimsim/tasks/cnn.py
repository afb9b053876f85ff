"""Desk-scale CNN (2 conv + 2 FC, bias-free) and its numpy trainer."""

from __future__ import annotations

import numpy as np

from ..nnsim.arch import conv_layer, fc_layer, im2col


def glyph_arch() -> dict:
    return {
        "input_shape": (1, 8, 8),
        "layers": [
            conv_layer(8, k=3, stride=1, pad=1, relu=True, pool=2),
            conv_layer(16, k=3, stride=1, pad=1, relu=True, pool=2),
            fc_layer(32, relu=True),
            fc_layer(10),
        ],
    }


def _col2im(dcol, x_shape, k, stride, pad):
    n, c, h, w = x_shape
    hh, ww = h + 2 * pad, w + 2 * pad
    oh = (hh - k) // stride + 1
    ow = (ww - k) // stride + 1
    dx = np.zeros((n, c, hh, ww))
    dcol = dcol.reshape(n, oh, ow, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + oh * stride:stride, j:j + ow * stride:stride] += dcol[:, :, :, :, i, j]
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return dx


def _pool_fwd(x, p):
    n, c, h, w = x.shape
    r = x.reshape(n, c, h // p, p, w // p, p)
    out = r.max(axis=(3, 5))
    mask = r == out[:, :, :, None, :, None]
    return out, mask


def _pool_bwd(dout, mask, p):
    n, c, oh, ow = dout.shape
    spread = mask * dout[:, :, :, None, :, None]
    return spread.reshape(n, c, oh * p, ow * p)


class GlyphNet:
    """Float training twin of :func:`glyph_arch`; weights are bias-free."""

    def __init__(self, rng: np.random.Generator):
        def he(shape, fan_in):
            return rng.normal(0, np.sqrt(2.0 / fan_in), shape)

        self.w = [
            he((8, 1, 3, 3), 9),
            he((16, 8, 3, 3), 72),
            he((32, 64), 64),
            he((10, 32), 32),
        ]

    def forward(self, x, keep=False):
        cache = {}
        col1, oh1, ow1 = im2col(x, 3, 1, 1)
        z1 = (col1 @ self.w[0].reshape(8, -1).T).reshape(x.shape[0], oh1, ow1, 8).transpose(0, 3, 1, 2)
        a1 = np.maximum(z1, 0)
        p1, m1 = _pool_fwd(a1, 2)
        col2, oh2, ow2 = im2col(p1, 3, 1, 1)
        z2 = (col2 @ self.w[1].reshape(16, -1).T).reshape(x.shape[0], oh2, ow2, 16).transpose(0, 3, 1, 2)
        a2 = np.maximum(z2, 0)
        p2, m2 = _pool_fwd(a2, 2)
        flat = p2.reshape(x.shape[0], -1)
        z3 = flat @ self.w[2].T
        a3 = np.maximum(z3, 0)
        logits = a3 @ self.w[3].T
        if keep:
            cache.update(x=x, col1=col1, z1=z1, m1=m1, p1=p1, col2=col2, z2=z2,
                         m2=m2, flat=flat, z3=z3, a3=a3)
            return logits, cache
        return logits

    def backward(self, logits, labels, cache):
        n = logits.shape[0]
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs = e / e.sum(axis=1, keepdims=True)
        loss = -np.log(probs[np.arange(n), labels] + 1e-12).mean()
        dlog = probs.copy()
        dlog[np.arange(n), labels] -= 1.0
        dlog /= n
        g3 = dlog.T @ cache["a3"]
        da3 = dlog @ self.w[3]
        da3[cache["z3"] <= 0] = 0
        g2 = da3.T @ cache["flat"]
        dflat = da3 @ self.w[2]
        dp2 = dflat.reshape(n, 16, 2, 2)
        da2 = _pool_bwd(dp2, cache["m2"], 2)
        da2[cache["z2"] <= 0] = 0
        dcol2 = da2.transpose(0, 2, 3, 1).reshape(-1, 16)
        g1 = (dcol2.T @ cache["col2"]).reshape(16, 8, 3, 3)
        dcol2_in = dcol2 @ self.w[1].reshape(16, -1)
        dp1 = _col2im(dcol2_in, cache["p1"].shape, 3, 1, 1)
        da1 = _pool_bwd(dp1, cache["m1"], 2)
        da1[cache["z1"] <= 0] = 0
        dcol1 = da1.transpose(0, 2, 3, 1).reshape(-1, 8)
        g0 = (dcol1.T @ cache["col1"]).reshape(8, 1, 3, 3)
        return [g0, g1, g2, g3], loss


def train_cnn(
    images: np.ndarray,
    labels: np.ndarray,
    seed: int,
    steps: int = 2500,
    batch: int = 64,
    lr: float = 1e-3,
) -> dict[str, np.ndarray]:
    """Train the glyph CNN; returns the weight dict in (out, in, ...) layout."""
    from ..streams import substream

    rng = substream(seed, "cnn-init")
    data_rng = substream(seed, "cnn-batches")
    net = GlyphNet(rng)
    x_all = images.astype(np.float64) / 255.0
    y_all = labels.astype(np.int64)
    m = [np.zeros_like(w) for w in net.w]
    v = [np.zeros_like(w) for w in net.w]
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, steps + 1):
        idx = data_rng.integers(0, len(x_all), batch)
        logits, cache = net.forward(x_all[idx], keep=True)
        grads, _ = net.backward(logits, y_all[idx], cache)
        for i, g in enumerate(grads):
            m[i] = b1 * m[i] + (1 - b1) * g
            v[i] = b2 * v[i] + (1 - b2) * g * g
            mh = m[i] / (1 - b1**t)
            vh = v[i] / (1 - b2**t)
            net.w[i] = net.w[i] - lr * mh / (np.sqrt(vh) + eps)
    return {f"layer{i}": net.w[i].copy() for i in range(4)}


def clean_accuracy(weights: dict, images: np.ndarray, labels: np.ndarray) -> float:
    net = GlyphNet.__new__(GlyphNet)
    net.w = [weights[f"layer{i}"] for i in range(4)]
    logits = net.forward(images.astype(np.float64) / 255.0)
    return float((np.argmax(logits, axis=1) == labels).mean())
