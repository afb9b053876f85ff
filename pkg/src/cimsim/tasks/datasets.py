"""Synthetic 10-class glyph dataset plus the CIMD image container.

CIMD layout, little-endian:
    magic    4 bytes b"CIMD"
    version  u32
    n_items  u32, height u32, width u32, channels u32, n_classes u32
  per item:
    label    u16
    pixels   u8 * h*w*c, row-major
"""

from __future__ import annotations

import struct

import numpy as np

from ..streams import substream

MAGIC = b"CIMD"
VERSION = 1

N_CLASSES = 10
IMG = 8

# one 8x8 binary template per class
_TEMPLATES = np.zeros((N_CLASSES, IMG, IMG))
_TEMPLATES[0, 1:7, 1] = _TEMPLATES[0, 1:7, 6] = 1
_TEMPLATES[0, 1, 1:7] = _TEMPLATES[0, 6, 1:7] = 1          # hollow square
_TEMPLATES[1, 1:7, 3:5] = 1                                 # vertical bar
_TEMPLATES[2, 3:5, 1:7] = 1                                 # horizontal bar
for _i in range(1, 7):
    _TEMPLATES[3, _i, _i] = 1                               # main diagonal
    _TEMPLATES[4, _i, 7 - _i] = 1                           # anti-diagonal
_TEMPLATES[5, 3:5, 1:7] = _TEMPLATES[5, 1:7, 3:5] = 1       # plus
_TEMPLATES[6] = np.clip(_TEMPLATES[3] + _TEMPLATES[4], 0, 1)  # X
_TEMPLATES[7, 1:4, 1:7] = 1                                 # top half
_TEMPLATES[8, 1:7, 1:4] = 1                                 # left half
_TEMPLATES[9, 1:3, 1:3] = _TEMPLATES[9, 1:3, 5:7] = 1
_TEMPLATES[9, 5:7, 1:3] = _TEMPLATES[9, 5:7, 5:7] = 1       # corner dots


def make_glyph_dataset(n_items: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Images (n, 1, 8, 8) uint8 and labels (n,) uint16.

    Samples cycle through the classes; each draw jitters the template by
    up to one pixel, scales its intensity, and adds pixel noise.
    """
    rng = substream(seed, "glyphs")
    labels = (np.arange(n_items) % N_CLASSES).astype(np.uint16)
    labels = labels[rng.permutation(n_items)]
    images = np.zeros((n_items, 1, IMG, IMG), np.uint8)
    for i, lab in enumerate(labels):
        t = _TEMPLATES[lab]
        dr, dc = rng.integers(-1, 2, 2)
        shifted = np.roll(np.roll(t, dr, axis=0), dc, axis=1)
        amp = rng.uniform(0.7, 1.0)
        img = amp * shifted + rng.normal(0, 0.08, (IMG, IMG))
        images[i, 0] = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
    return images, labels


def write_cimd(path, images: np.ndarray, labels: np.ndarray, n_classes: int = N_CLASSES) -> None:
    n, c, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIIIII", VERSION, n, h, w, c, n_classes))
        for i in range(n):
            fh.write(struct.pack("<H", int(labels[i])))
            fh.write(np.ascontiguousarray(images[i].transpose(1, 2, 0), dtype=np.uint8).tobytes())


def read_cimd(path) -> tuple[np.ndarray, np.ndarray, int]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("not a CIMD file")
        version, n, h, w, c, n_classes = struct.unpack("<IIIIII", fh.read(24))
        if version != VERSION:
            raise ValueError(f"unsupported CIMD version {version}")
        images = np.zeros((n, c, h, w), np.uint8)
        labels = np.zeros(n, np.uint16)
        for i in range(n):
            (labels[i],) = struct.unpack("<H", fh.read(2))
            px = np.frombuffer(fh.read(h * w * c), dtype=np.uint8).reshape(h, w, c)
            images[i] = px.transpose(2, 0, 1)
    return images, labels, n_classes
