"""Layout of quantized weights onto virtual crossbar accumulation groups.

Weight rows (the GEMM input dimension) are chunked into groups of 9,
matching the acc-9 read granularity; each weight bit gets its own cell
plane.  Every group is governed by one noise profile; static injection
replaces each programmed bit with a draw from that profile's per-state
normal, and the profile's residual distribution supplies the dynamic
error at read time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..crossbar import GROUP_SIZE
from ..effbits import NoiseProfile
from .quant import QuantSpec

SNAPSHOT_VERSION = 1


@dataclass
class MappedLayer:
    """One GEMM layer laid out on crossbar groups."""

    name: str
    meta: dict                 # arch layer entry (kind, relu, pool, ...)
    in_dim: int
    out_dim: int
    codes: np.ndarray          # (in_dim, out) uint16 offset-binary
    planes: np.ndarray         # (w_bits, n_groups, 9, out) uint8
    eb: np.ndarray             # same shape, float64; injected effective bits
    profile_idx: np.ndarray    # (n_groups,) int32 into MappedNetwork.profiles

    @property
    def n_groups(self) -> int:
        return self.planes.shape[1]

    @property
    def padding(self) -> int:
        return self.n_groups * GROUP_SIZE - self.in_dim


@dataclass
class MappedNetwork:
    """A quantized network mapped onto virtual crossbar groups."""

    arch: dict
    quant: QuantSpec
    layers: list[MappedLayer]
    profiles: list[NoiseProfile]
    rng_seed: int = 0
    scope: str = "ideal"

    def layer_codes(self) -> list[np.ndarray]:
        return [l.codes for l in self.layers]


def _bit_planes(codes_padded: np.ndarray, w_bits: int) -> np.ndarray:
    """(rows, out) codes -> (w_bits, n_groups, 9, out) bit planes."""
    rows, out = codes_padded.shape
    n_groups = rows // GROUP_SIZE
    grouped = codes_padded.reshape(n_groups, GROUP_SIZE, out)
    planes = np.empty((w_bits, n_groups, GROUP_SIZE, out), dtype=np.uint8)
    for p in range(w_bits):
        planes[p] = (grouped >> p) & 1
    return planes


def map_network(
    layer_codes: list[np.ndarray],
    arch: dict,
    spec: QuantSpec,
    profiles: list[NoiseProfile],
    rng: np.random.Generator,
    scope: str = "ideal",
) -> MappedNetwork:
    """Chunk each layer's rows into acc-9 groups and assign noise profiles.

    Groups are assigned round-robin over a seed-shuffled profile order
    (a global counter across layers), so profile usage is balanced and
    the assignment replays exactly for a given generator state.  Weight
    bits are initialized to their exact binary values; call
    :func:`inject_static` to draw effective bits.
    """
    if not profiles:
        raise ValueError("need at least one noise profile")
    if len(layer_codes) != len(arch["layers"]):
        raise ValueError("one code matrix per architecture layer required")
    order = rng.permutation(len(profiles))
    counter = 0
    layers = []
    seed_used = int(rng.integers(0, 2**63 - 1))
    for li, (codes, meta) in enumerate(zip(layer_codes, arch["layers"])):
        codes = np.asarray(codes, dtype=np.uint16)
        in_dim, out_dim = codes.shape
        n_groups = -(-in_dim // GROUP_SIZE)
        pad = n_groups * GROUP_SIZE - in_dim
        # padding rows hold code 0: programmed-0 cells on every plane
        padded = np.zeros((in_dim + pad, out_dim), dtype=np.uint16)
        padded[:in_dim] = codes
        planes = _bit_planes(padded, spec.w_bits)
        idx = order[(counter + np.arange(n_groups)) % len(profiles)].astype(np.int32)
        counter += n_groups
        layers.append(
            MappedLayer(
                name=f"layer{li}",
                meta=meta,
                in_dim=in_dim,
                out_dim=out_dim,
                codes=codes,
                planes=planes,
                eb=planes.astype(np.float64),
                profile_idx=idx,
            )
        )
    return MappedNetwork(
        arch=arch, quant=spec, layers=layers, profiles=list(profiles),
        rng_seed=seed_used, scope=scope,
    )


def inject_static(net: MappedNetwork, rng: np.random.Generator) -> MappedNetwork:
    """Replace every programmed bit with a draw from its profile's normal.

    Draws are i.i.d. per cell.  With zero sigmas and exact means the
    planes are reproduced exactly and no randomness is consumed.
    """
    mu0 = np.array([p.mu0 for p in net.profiles])
    sg0 = np.array([p.sigma0 for p in net.profiles])
    mu1 = np.array([p.mu1 for p in net.profiles])
    sg1 = np.array([p.sigma1 for p in net.profiles])
    noiseless = np.all(sg0 == 0.0) and np.all(sg1 == 0.0)
    layers = []
    for layer in net.layers:
        bits = layer.planes
        idx = layer.profile_idx
        m0 = mu0[idx][None, :, None, None]
        m1 = mu1[idx][None, :, None, None]
        mean = np.where(bits == 1, m1, m0)
        if noiseless:
            eb = mean
        else:
            s0 = sg0[idx][None, :, None, None]
            s1 = sg1[idx][None, :, None, None]
            sigma = np.where(bits == 1, s1, s0)
            eb = mean + sigma * rng.standard_normal(bits.shape)
        new_layer = MappedLayer(
            name=layer.name, meta=layer.meta, in_dim=layer.in_dim,
            out_dim=layer.out_dim, codes=layer.codes, planes=layer.planes,
            eb=eb, profile_idx=layer.profile_idx,
        )
        layers.append(new_layer)
    return MappedNetwork(
        arch=net.arch, quant=net.quant, layers=layers, profiles=net.profiles,
        rng_seed=net.rng_seed, scope=net.scope,
    )


def with_profiles(net: MappedNetwork, profiles: list[NoiseProfile]) -> MappedNetwork:
    """Swap the profile set (same assignment indices); eb stays exact bits."""
    if len(profiles) != len(net.profiles):
        raise ValueError("profile count must match the original assignment")
    return MappedNetwork(
        arch=net.arch, quant=net.quant,
        layers=[
            MappedLayer(
                name=l.name, meta=l.meta, in_dim=l.in_dim, out_dim=l.out_dim,
                codes=l.codes, planes=l.planes, eb=l.planes.astype(np.float64),
                profile_idx=l.profile_idx,
            )
            for l in net.layers
        ],
        profiles=list(profiles), rng_seed=net.rng_seed, scope=net.scope,
    )


def save_mapped(net: MappedNetwork, json_path, bin_path) -> None:
    """JSON manifest + raw little-endian binary sidecar."""
    blobs: list[bytes] = []
    offset = 0
    manifest = {
        "version": SNAPSHOT_VERSION,
        "arch": net.arch,
        "scope": net.scope,
        "rng_seed": net.rng_seed,
        "quant": {
            "w_bits": net.quant.w_bits,
            "a_bits": net.quant.a_bits,
            "layer_scales": list(net.quant.layer_scales),
            "out_shifts": list(net.quant.out_shifts),
        },
        "profiles": [p.to_dict() for p in net.profiles],
        "layers": [],
        "arrays": [],
    }

    def put(name, arr, dtype):
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        manifest["arrays"].append(
            {"name": name, "dtype": str(np.dtype(dtype)), "shape": list(arr.shape), "offset": offset}
        )
        blobs.append(raw)
        offset += len(raw)

    for layer in net.layers:
        manifest["layers"].append(
            {"name": layer.name, "meta": layer.meta, "in_dim": layer.in_dim, "out_dim": layer.out_dim}
        )
        put(f"{layer.name}/codes", layer.codes, "<u2")
        put(f"{layer.name}/planes", layer.planes, "u1")
        put(f"{layer.name}/eb", layer.eb, "<f8")
        put(f"{layer.name}/profile_idx", layer.profile_idx, "<i4")

    with open(json_path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True)
    with open(bin_path, "wb") as fh:
        for b in blobs:
            fh.write(b)


def load_mapped(json_path, bin_path) -> MappedNetwork:
    with open(json_path) as fh:
        manifest = json.load(fh)
    if manifest.get("version") != SNAPSHOT_VERSION:
        raise ValueError("unsupported mapped-network snapshot version")
    with open(bin_path, "rb") as fh:
        blob = fh.read()
    arrays = {}
    for entry in manifest["arrays"]:
        dt = np.dtype(entry["dtype"])
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        arrays[entry["name"]] = np.frombuffer(
            blob, dtype=dt, count=n, offset=start
        ).reshape(entry["shape"]).copy()
    q = manifest["quant"]
    spec = QuantSpec(
        w_bits=q["w_bits"], a_bits=q["a_bits"],
        layer_scales=tuple(q["layer_scales"]), out_shifts=tuple(q["out_shifts"]),
    )
    profiles = [NoiseProfile.from_dict(d) for d in manifest["profiles"]]
    layers = []
    for entry in manifest["layers"]:
        name = entry["name"]
        layers.append(
            MappedLayer(
                name=name, meta=entry["meta"], in_dim=entry["in_dim"],
                out_dim=entry["out_dim"], codes=arrays[f"{name}/codes"],
                planes=arrays[f"{name}/planes"],
                eb=arrays[f"{name}/eb"].astype(np.float64),
                profile_idx=arrays[f"{name}/profile_idx"],
            )
        )
    arch = manifest["arch"]
    arch["input_shape"] = tuple(arch["input_shape"])
    return MappedNetwork(
        arch=arch, quant=spec, layers=layers, profiles=profiles,
        rng_seed=manifest["rng_seed"], scope=manifest["scope"],
    )
