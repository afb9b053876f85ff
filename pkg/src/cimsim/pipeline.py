"""Stage orchestration: seeded pipeline composition and run manifests.

Each stage reads the experiment config (plus artifacts of earlier
stages in the output directory) and persists its own artifacts.  All
randomness derives from the master seed via keyed substreams, so
re-running a pipeline with the same config and seed reproduces every
artifact byte for byte, at any thread count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .calib import default_grid, golden_histogram, unit_key
from .chip import VirtualChip, build_chip, calibrate_chip, drift_chip, extract_profiles
from .config import ConfigError, ExperimentConfig
from .crossbar import save_snapshot
from .device import StressEvent
from .effbits import NoiseProfile
from .nnsim.container import read_cimw
from .nnsim.forward import noisy_forward, quantize_network
from .nnsim.mapping import inject_static, load_mapped, map_network, save_mapped
from .streams import substream
from .tasks.cnn import glyph_arch
from .tasks.datasets import read_cimd, write_cimd, make_glyph_dataset
from .tasks.dqn import DqnHyper, gridworld_arch, train_policy, train_quantized_policy
from .tasks.evaluate import eval_supervised, evaluate_policy


class StageError(RuntimeError):
    pass


@dataclass
class RunManifest:
    config_hash: str
    version: str
    seed: int
    stages: list = field(default_factory=list)

    def record(self, name: str, artifacts: dict, seconds: float) -> None:
        self.stages.append({"name": name, "artifacts": artifacts, "seconds": seconds})

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "stages": self.stages,
        }


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _map_ordered(fn, items, threads: int):
    """Apply fn over items, optionally threaded; output order fixed."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _build_chip(cfg: ExperimentConfig) -> VirtualChip:
    return build_chip(
        seed=cfg.seed, n_modules=cfg.n_modules, dist=cfg.device,
        adc_params=cfg.adc, xfer=cfg.xfer,
    )


def _stage_characterize(cfg: ExperimentConfig, out: str) -> dict:
    from .calib import characterize

    chip = _build_chip(cfg)

    def one(module):
        counts, trace = characterize(module, cfg.vectors, substream(cfg.seed, "calib", module.module_id))
        return module, counts, trace

    results = _map_ordered(one, chip.modules, cfg.threads)
    artifacts = {}
    for module, counts, trace in results:
        snap = os.path.join(out, f"module{module.module_id:02d}.json")
        save_snapshot(module, snap)
        artifacts[snap] = sha256_file(snap)
        rows = [
            (g, s, int(counts.counts[g, s]))
            for g in range(counts.counts.shape[0])
            for s in range(counts.counts.shape[1])
        ]
        cpath = os.path.join(out, f"counts_module{module.module_id:02d}.csv")
        _write_csv(cpath, ["golden", "state", "count"], rows)
        artifacts[cpath] = sha256_file(cpath)
        hist = golden_histogram(trace)
        hpath = os.path.join(out, f"golden_hist_module{module.module_id:02d}.csv")
        _write_csv(hpath, ["value", "count"], list(enumerate(hist.tolist())))
        artifacts[hpath] = sha256_file(hpath)
    return artifacts


def _stage_calibrate(cfg: ExperimentConfig, out: str) -> dict:
    from .calib import characterize

    chip = _build_chip(cfg)
    grid = cfg.grid or default_grid()
    chip = calibrate_chip(chip, cfg.scope, grid=grid, n_vectors=cfg.vectors)
    assert chip.tuned is not None
    records = [chip.tuned[k].to_dict(k) for k in sorted(chip.tuned)]
    path = os.path.join(out, "tuned.json")
    _write_json(path, {"scope": cfg.scope, "records": records})
    artifacts = {path: sha256_file(path)}

    # response counts at the tuned operating point, for Fig.-3 style heatmaps
    def one(module):
        counts, _ = characterize(module, cfg.vectors, substream(cfg.seed, "calib-verify", module.module_id))
        return module.module_id, counts

    for mid, counts in _map_ordered(one, chip.modules, cfg.threads):
        rows = [
            (g, s, int(counts.counts[g, s]))
            for g in range(counts.counts.shape[0])
            for s in range(counts.counts.shape[1])
        ]
        cpath = os.path.join(out, f"counts_tuned_module{mid:02d}.csv")
        _write_csv(cpath, ["golden", "state", "count"], rows)
        artifacts[cpath] = sha256_file(cpath)
    return artifacts


def _load_tuned_chip(cfg: ExperimentConfig, out: str) -> VirtualChip:
    chip = _build_chip(cfg)
    grid = cfg.grid or default_grid()
    return calibrate_chip(chip, cfg.scope, grid=grid, n_vectors=cfg.vectors)


def _stage_extract_eb(cfg: ExperimentConfig, out: str) -> dict:
    chip = _load_tuned_chip(cfg, out)
    profiles, groups = extract_profiles(chip, n_vectors=cfg.vectors)
    ppath = os.path.join(out, "profiles.json")
    _write_json(ppath, [p.to_dict() for p in profiles])
    artifacts = {ppath: sha256_file(ppath)}
    by_module: dict[int, list] = {}
    for g in groups:
        by_module.setdefault(g.module_id, []).append(g)
    for mid, gs in sorted(by_module.items()):
        rows = []
        for g in gs:
            for cell in range(9):
                row_idx = g.group * 9 + cell
                rows.append((row_idx, g.column, repr(float(g.eb[cell])), int(g.programmed_bits[cell])))
        rows.sort(key=lambda r: (r[0], r[1]))
        epath = os.path.join(out, f"ebmap_module{mid:02d}.csv")
        _write_csv(epath, ["group", "column", "eb", "bit"], rows)
        artifacts[epath] = sha256_file(epath)
    return artifacts


def _load_profiles(out: str) -> list[NoiseProfile]:
    path = os.path.join(out, "profiles.json")
    if not os.path.exists(path):
        raise StageError("profiles.json not found; run extract-eb first")
    with open(path) as fh:
        return [NoiseProfile.from_dict(d) for d in json.load(fh)]


def _arch_for(cfg: ExperimentConfig, weights: dict):
    names = set(weights)
    if names == {"layer0", "layer1"}:
        return gridworld_arch(hidden=weights["layer0"].shape[0])
    if names == {"layer0", "layer1", "layer2", "layer3"}:
        return glyph_arch()
    raise StageError(f"cannot infer architecture from weight names {sorted(names)}")


def _calibration_inputs(cfg: ExperimentConfig, arch: dict):
    shape = arch["input_shape"]
    rng = substream(cfg.seed, "quant-calib")
    if len(shape) == 1:
        from .tasks.dqn import policy_features
        from .tasks.gridworld import mission_family, observe

        missions = mission_family(cfg.seed + 1, 64, n=cfg.gridworld_n, n_holes=cfg.gridworld_holes)
        return policy_features(np.stack([observe(m) for m in missions]))
    if cfg.dataset_path:
        images, _, _ = read_cimd(cfg.dataset_path)
        return images[:256].astype(float) / 255.0
    return rng.random((256,) + tuple(shape))


def _stage_inject(cfg: ExperimentConfig, out: str) -> dict:
    if not cfg.weights_path:
        raise ConfigError("paths.weights is required for the inject stage")
    weights = read_cimw(cfg.weights_path)
    arch = _arch_for(cfg, weights)
    profiles = _load_profiles(out)
    calib_x = _calibration_inputs(cfg, arch)
    codes, spec = quantize_network(arch, weights, cfg.w_bits, cfg.a_bits, calib_x)
    net = map_network(codes, arch, spec, profiles, substream(cfg.seed, "map"), scope=cfg.scope)
    net = inject_static(net, substream(cfg.seed, "inject"))
    jpath = os.path.join(out, "mapped.json")
    bpath = os.path.join(out, "mapped.bin")
    save_mapped(net, jpath, bpath)
    return {jpath: sha256_file(jpath), bpath: sha256_file(bpath)}


def _load_mapped(cfg: ExperimentConfig, out: str):
    jpath = cfg.mapped_path or os.path.join(out, "mapped.json")
    bpath = jpath.replace(".json", ".bin")
    if not os.path.exists(jpath):
        raise StageError("mapped network not found; run inject first")
    return load_mapped(jpath, bpath)


def _stage_forward(cfg: ExperimentConfig, out: str) -> dict:
    net = _load_mapped(cfg, out)
    if len(net.arch["input_shape"]) == 1:
        rep = evaluate_policy(
            net, cfg.seed + 2, cfg.n_missions, substream(cfg.seed, "eval-forward"),
            n=cfg.gridworld_n, n_holes=cfg.gridworld_holes,
        )
        path = os.path.join(out, "forward_report.json")
        _write_json(path, rep.to_dict())
        return {path: sha256_file(path)}
    if not cfg.dataset_path:
        raise ConfigError("paths.dataset is required to run forward on an image network")
    images, labels, _ = read_cimd(cfg.dataset_path)
    x = images.astype(float) / 255.0
    logits = noisy_forward(net, x, substream(cfg.seed, "eval-forward"))
    pred = np.argmax(logits, axis=1)
    path = os.path.join(out, "predictions.csv")
    _write_csv(path, ["index", "label", "prediction"],
               [(i, int(labels[i]), int(pred[i])) for i in range(len(pred))])
    rpath = os.path.join(out, "forward_report.json")
    _write_json(rpath, {"accuracy": float((pred == labels).mean()), "n": int(len(pred))})
    return {path: sha256_file(path), rpath: sha256_file(rpath)}


def _stage_drift_run(cfg: ExperimentConfig, out: str) -> dict:
    chip = _load_tuned_chip(cfg, out)
    net = None
    images = labels = None
    if cfg.weights_path:
        weights = read_cimw(cfg.weights_path)
        arch = _arch_for(cfg, weights)
        calib_x = _calibration_inputs(cfg, arch)
        codes, spec = quantize_network(arch, weights, cfg.w_bits, cfg.a_bits, calib_x)
        profiles, _ = extract_profiles(chip, n_vectors=cfg.vectors)
        net = map_network(codes, arch, spec, profiles, substream(cfg.seed, "map"), scope=cfg.scope)
        if cfg.dataset_path:
            images, labels, _ = read_cimd(cfg.dataset_path)

    def point(k: int, chip_k: VirtualChip):
        profiles, _ = extract_profiles(chip_k, n_vectors=cfg.vectors, stage=f"extract-drift{k}")
        mu0 = float(np.mean([p.mu0 for p in profiles]))
        mu1 = float(np.mean([p.mu1 for p in profiles]))
        acc = ""
        if net is not None and images is not None:
            from .nnsim.mapping import with_profiles

            nk = inject_static(with_profiles(net, profiles), substream(cfg.seed, "drift-inject"))
            acc = repr(eval_supervised(nk, images, labels, len(images), substream(cfg.seed, "drift-eval")))
        return mu0, mu1, acc

    rows = []
    mu0, mu1, acc = point(0, chip)
    rows.append((0, repr(mu0), repr(mu1), acc))
    ev = StressEvent(v_bl=cfg.stress_v_bl, cycles=cfg.stress_cycles)
    for k in range(1, cfg.stress_events + 1):
        chip = drift_chip(chip, ev, cfg.drift)
        mu0, mu1, acc = point(k, chip)
        rows.append((k * cfg.stress_cycles, repr(mu0), repr(mu1), acc))
    path = os.path.join(out, "drift_trajectory.csv")
    _write_csv(path, ["cycle", "mu0", "mu1", "accuracy"], rows)
    return {path: sha256_file(path)}


def _stage_train_gridworld(cfg: ExperimentConfig, out: str) -> dict:
    from .nnsim.container import write_cimw

    hyper = DqnHyper(grid_n=cfg.gridworld_n, n_holes=cfg.gridworld_holes)
    weights, report = train_quantized_policy(
        cfg.w_bits, cfg.a_bits, substream(cfg.seed, "train-gridworld"), hyper=hyper
    )
    wpath = os.path.join(out, "gridworld_policy.cimw")
    write_cimw(wpath, weights)
    rpath = os.path.join(out, "train_report.json")
    _write_json(rpath, {
        "reached_target": report.reached_target,
        "win_rate": report.win_rate,
        "env_steps": report.env_steps,
        "evals": report.evals,
    })
    return {wpath: sha256_file(wpath), rpath: sha256_file(rpath)}


def _stage_eval_gridworld(cfg: ExperimentConfig, out: str) -> dict:
    net = _load_mapped(cfg, out)
    rep = evaluate_policy(
        net, cfg.seed + 2, cfg.n_missions, substream(cfg.seed, "eval-gridworld"),
        n=cfg.gridworld_n, n_holes=cfg.gridworld_holes,
    )
    jpath = os.path.join(out, "gridworld_report.json")
    _write_json(jpath, rep.to_dict())
    cpath = os.path.join(out, "gridworld_report.csv")
    _write_csv(cpath, ["win_rate", "mean_steps", "n_missions", "seed"],
               [(repr(rep.win_rate), repr(rep.mean_steps), rep.n_missions, rep.seed)])
    return {jpath: sha256_file(jpath), cpath: sha256_file(cpath)}


def _stage_eval_supervised(cfg: ExperimentConfig, out: str) -> dict:
    net = _load_mapped(cfg, out)
    if not cfg.dataset_path:
        raise ConfigError("paths.dataset is required for eval-supervised")
    images, labels, _ = read_cimd(cfg.dataset_path)
    acc = eval_supervised(net, images, labels, len(images), substream(cfg.seed, "eval-supervised"))
    jpath = os.path.join(out, "supervised_report.json")
    _write_json(jpath, {"accuracy": acc, "n_samples": int(len(images))})
    cpath = os.path.join(out, "supervised_report.csv")
    _write_csv(cpath, ["accuracy", "n_samples"], [(repr(acc), len(images))])
    return {jpath: sha256_file(jpath), cpath: sha256_file(cpath)}


def _stage_make_dataset(cfg: ExperimentConfig, out: str) -> dict:
    images, labels = make_glyph_dataset(4000, seed=cfg.seed)
    path = cfg.dataset_path or os.path.join(out, "glyphs.cimd")
    write_cimd(path, images, labels)
    return {path: sha256_file(path)}


STAGES = {
    "characterize": _stage_characterize,
    "calibrate": _stage_calibrate,
    "extract-eb": _stage_extract_eb,
    "inject": _stage_inject,
    "forward": _stage_forward,
    "drift-run": _stage_drift_run,
    "train-gridworld": _stage_train_gridworld,
    "eval-gridworld": _stage_eval_gridworld,
    "eval-supervised": _stage_eval_supervised,
    "make-dataset": _stage_make_dataset,
}


def run_pipeline(cfg: ExperimentConfig) -> RunManifest:
    """Execute the configured stages in order; persist a manifest.

    A stage failure halts the run; the manifest still records all
    completed stages.
    """
    for name in cfg.pipeline:
        if name not in STAGES:
            raise ConfigError(f"unknown pipeline stage {name!r}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    manifest = RunManifest(config_hash=cfg.config_hash(), version=__version__, seed=cfg.seed)
    try:
        for name in cfg.pipeline:
            t0 = time.time()
            artifacts = STAGES[name](cfg, cfg.output_dir)
            manifest.record(name, artifacts, round(time.time() - t0, 3))
    finally:
        _write_json(os.path.join(cfg.output_dir, "run_manifest.json"), manifest.to_dict())
    return manifest


def verify_manifest(path: str) -> bool:
    """Recompute digests of the files a manifest references."""
    with open(path) as fh:
        manifest = json.load(fh)
    for stage in manifest["stages"]:
        for fpath, digest in stage["artifacts"].items():
            if not os.path.exists(fpath) or sha256_file(fpath) != digest:
                return False
    return True
