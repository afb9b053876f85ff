import json
import os

import numpy as np
import pytest

from cimsim.cli import main
from cimsim.config import ConfigError, load_config
from cimsim.pipeline import run_pipeline, sha256_file, verify_manifest

SMALL_CFG = """
[run]
seed = 321
output_dir = {out}
pipeline = characterize,calibrate,extract-eb
scope = module
n_modules = 1
vectors = 64
threads = {threads}

[grid]
offsets = 0.02:0.10:5
steps = 0.02,0.03
v_blts = 1.0
"""


def _write_cfg(tmp_path, name="exp.cfg", out="out", threads=1, extra=""):
    path = tmp_path / name
    path.write_text(SMALL_CFG.format(out=tmp_path / out, threads=threads) + extra)
    return str(path)


def test_defaults_without_file():
    cfg = load_config(None)
    assert cfg.seed == 12345
    assert cfg.scope == "module"
    assert cfg.pipeline == ()


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[run]\nseed = 1\nbogus = 2\n")
    with pytest.raises(ConfigError):
        load_config(str(path))
    path2 = tmp_path / "bad2.cfg"
    path2.write_text("[nosuch]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(path2))


def test_bad_value_is_config_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[run]\nseed = notanumber\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_cim_seed_env_override(tmp_path, monkeypatch):
    path = _write_cfg(tmp_path)
    monkeypatch.setenv("CIM_SEED", "999")
    cfg = load_config(path)
    assert cfg.seed == 999


def test_empty_pipeline_manifest():
    cfg = load_config(None)
    cfg.output_dir = "/tmp/cimsim_empty_out"
    manifest = run_pipeline(cfg)
    assert manifest.stages == []


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[run]\nseed = x\n")
    assert main(["pipeline", "--config", str(bad)]) == 2
    # forward without a mapped network is a stage failure
    ok = _write_cfg(tmp_path, name="fw.cfg", out="fw_out")
    assert main(["forward", "--config", ok]) == 3


def test_pipeline_artifacts_and_manifest(tmp_path):
    path = _write_cfg(tmp_path)
    assert main(["pipeline", "--config", path]) == 0
    out = tmp_path / "out"
    for expected in (
        "module00.json",
        "counts_module00.csv",
        "golden_hist_module00.csv",
        "tuned.json",
        "counts_tuned_module00.csv",
        "profiles.json",
        "ebmap_module00.csv",
        "run_manifest.json",
    ):
        assert (out / expected).exists(), expected
    assert verify_manifest(str(out / "run_manifest.json"))
    with open(out / "tuned.json") as fh:
        tuned = json.load(fh)
    assert tuned["scope"] == "module"
    rec = tuned["records"][0]
    assert {"scope", "offset", "step", "v_blt"} <= set(rec)

    # counts heatmap artifact: full 10 x 16 matrix
    rows = (out / "counts_module00.csv").read_text().strip().splitlines()
    assert rows[0] == "golden,state,count"
    assert len(rows) == 1 + 160

    hist_rows = (out / "golden_hist_module00.csv").read_text().strip().splitlines()
    assert len(hist_rows) == 1 + 10


def test_rerun_reproduces_artifacts_byte_identically(tmp_path):
    patha = _write_cfg(tmp_path, name="a.cfg", out="out_a")
    pathb = _write_cfg(tmp_path, name="b.cfg", out="out_b")
    assert main(["pipeline", "--config", patha]) == 0
    assert main(["pipeline", "--config", pathb]) == 0
    out_a, out_b = tmp_path / "out_a", tmp_path / "out_b"
    names = sorted(p.name for p in out_a.iterdir() if p.name != "run_manifest.json")
    assert names
    for name in names:
        assert sha256_file(str(out_a / name)) == sha256_file(str(out_b / name)), name


def test_emit_plot_kinds_and_mismatch(tmp_path):
    path = _write_cfg(tmp_path)
    assert main(["pipeline", "--config", path]) == 0
    out = tmp_path / "out"
    plots = tmp_path / "plots"
    assert main(["emit-plot", str(out / "counts_module00.csv"), "--kind", "heatmap",
                 "--out", str(plots), "--stem", "h"]) == 0
    assert main(["emit-plot", str(out / "golden_hist_module00.csv"), "--kind", "histogram",
                 "--out", str(plots), "--stem", "g"]) == 0
    assert main(["emit-plot", str(out / "ebmap_module00.csv"), "--kind", "ebmap",
                 "--out", str(plots), "--stem", "e"]) == 0
    for stem in ("h", "g", "e"):
        assert (plots / f"{stem}.csv").exists()
        assert (plots / f"{stem}.png").exists()
    # kind mismatch is a usage error
    assert main(["emit-plot", str(out / "counts_module00.csv"), "--kind", "ebmap",
                 "--out", str(plots)]) == 2


def test_drift_run_trajectory_rows(tmp_path):
    extra = "\n[drift]\nstress_events = 10\nstress_cycles = 50000\nstress_v_bl = 1.3\n"
    path = _write_cfg(tmp_path, name="dr.cfg", out="dr_out", extra=extra)
    assert main(["drift-run", "--config", path]) == 0
    out = tmp_path / "dr_out"
    rows = (out / "drift_trajectory.csv").read_text().strip().splitlines()
    assert rows[0] == "cycle,mu0,mu1,accuracy"
    assert len(rows) == 1 + 11  # baseline point plus 10 events
    plots = tmp_path / "dr_plots"
    assert main(["emit-plot", str(out / "drift_trajectory.csv"), "--kind", "trajectory",
                 "--out", str(plots), "--stem", "traj"]) == 0
    assert (plots / "traj.png").exists()


def test_make_dataset_and_eval_supervised_cli(tmp_path, qat_policy):
    # end-to-end through the CLI: dataset, policy weights, inject, forward
    from cimsim.nnsim.container import write_cimw

    weights, _ = qat_policy
    wpath = tmp_path / "policy.cimw"
    write_cimw(wpath, weights)
    extra = f"\n[paths]\nweights = {wpath}\n\n[gridworld]\nn_missions = 300\n"
    path = _write_cfg(tmp_path, name="gw.cfg", out="gw_out", extra=extra)
    assert main(["pipeline", "--config", path]) == 0  # characterize/calibrate/extract
    assert main(["inject", "--config", path]) == 0
    assert main(["eval-gridworld", "--config", path]) == 0
    with open(tmp_path / "gw_out" / "gridworld_report.json") as fh:
        report = json.load(fh)
    assert report["n_missions"] == 300
    assert 0.0 <= report["win_rate"] <= 1.0
