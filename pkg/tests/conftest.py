import itertools

import numpy as np
import pytest

from cimsim.adc import AdcParams, AdcRefConfig
from cimsim.calib import ideal_ref_config
from cimsim.crossbar import TransferParams, build_module, random_bit_pattern
from cimsim.device import CellDistParams
from cimsim.streams import substream

ALL_WL = np.array(list(itertools.product([0, 1], repeat=9)), dtype=np.uint8)  # (512, 9)


def zero_sigma_dist() -> CellDistParams:
    return CellDistParams(g_lrs_sigma=0.0, g_hrs_sigma=0.0)


def ideal_module(seed: int = 42):
    """Zero-sigma 50/50 module with exact references and no mismatch."""
    dist = zero_sigma_dist()
    xfer = TransferParams()
    cfg = ideal_ref_config(dist, xfer)
    adcp = AdcParams(cfg=cfg, sigma_static=0.0, sigma_dynamic=0.0)
    bits = random_bit_pattern(substream(seed, "bits"))
    return build_module(dist, bits, adcp, xfer, substream(seed, "build")), cfg


def lad_linprog(X, y):
    """Linear-programming LAD oracle (independent of the IRLS path)."""
    from scipy.optimize import linprog

    n, m = X.shape
    c = np.concatenate([np.zeros(m), np.ones(n)])
    eye = np.eye(n)
    a_ub = np.vstack([np.hstack([X, -eye]), np.hstack([-X, -eye])])
    b_ub = np.concatenate([y, -y])
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * (m + n), method="highs")
    assert res.success, res.message
    return res.x[:m], res.fun


@pytest.fixture(scope="session")
def glyph_data():
    from cimsim.tasks.datasets import make_glyph_dataset

    train = make_glyph_dataset(4000, seed=101)
    test = make_glyph_dataset(4000, seed=202)
    return train, test


@pytest.fixture(scope="session")
def cnn_weights(glyph_data):
    from cimsim.tasks.cnn import train_cnn

    (timgs, tlabs), _ = glyph_data
    return train_cnn(timgs, tlabs, seed=7, steps=2500)


@pytest.fixture(scope="session")
def qat_policy():
    """Quantization-aware GridWorld policy at the (4, 6) deployment point."""
    from cimsim.tasks.dqn import train_quantized_policy

    weights, report = train_quantized_policy(4, 6, substream(20250810, "qdqn"))
    return weights, report
