import csv
import io
import json
import math

import numpy as np
import pytest

from polarlab.average import BoundSpec, bound_F
from polarlab.behavior import exact_behavior
from polarlab.experiments import (
    ExperimentConfig,
    default_out_dir,
    rerun_manifest,
    run_concentration,
    run_scaling_fit,
    sharpness_points,
    sharpness_report,
    summarize,
)
from polarlab.gf2 import ARIKAN, sample_nonsingular


def read_rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(ells=(1,))
    with pytest.raises(ValueError):
        ExperimentConfig(kernels_per_ell=0)
    with pytest.raises(ValueError):
        ExperimentConfig(alpha=1.5)
    with pytest.raises(ValueError):
        ExperimentConfig(z_grid=100)
    with pytest.raises(ValueError):
        ExperimentConfig(ells=(8,), exhaustive=True)


def test_config_hash_ignores_output_dir(tmp_path):
    a = ExperimentConfig(out_dir=str(tmp_path / "a"))
    b = ExperimentConfig(out_dir=str(tmp_path / "b"))
    assert a.config_hash == b.config_hash
    assert ExperimentConfig(seed=1).config_hash != a.config_hash


def test_default_out_dir_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("POLARLAB_OUT", str(tmp_path))
    assert default_out_dir() == tmp_path
    assert ExperimentConfig().out_dir == str(tmp_path)


def test_gl2_exhaustive_campaign(tmp_path):
    cfg = ExperimentConfig(ells=(2,), exhaustive=True, alpha=0.5, out_dir=str(tmp_path))
    res = run_concentration(cfg)
    rows = read_rows(res.artifacts[0])
    assert len(rows) == 6
    for r in rows:
        lam = float(r["lambda_star"])
        if r["polarizing"] == "true":
            assert lam == pytest.approx(math.sqrt(3) / 2, abs=1e-9)
        else:
            assert lam == pytest.approx(1.0, abs=1e-12)
    assert sum(r["polarizing"] == "true" for r in rows) == 2


def test_concentration_is_byte_identical(tmp_path):
    kw = dict(ells=(8, 32), kernels_per_ell=4, mc_samples=500, seed=7)
    a = run_concentration(ExperimentConfig(out_dir=str(tmp_path / "a"), **kw))
    b = run_concentration(ExperimentConfig(out_dir=str(tmp_path / "b"), **kw))
    for pa, pb in zip(a.artifacts, b.artifacts):
        assert pa.read_bytes() == pb.read_bytes()


def test_concentration_rows_sorted_and_summary_consistent(tmp_path):
    cfg = ExperimentConfig(ells=(8, 16), kernels_per_ell=9, seed=3, out_dir=str(tmp_path))
    res = run_concentration(cfg)
    kernels, summary = read_rows(res.artifacts[0]), read_rows(res.artifacts[1])
    for s in summary:
        ell = int(s["ell"])
        rows = [r for r in kernels if int(r["ell"]) == ell]
        hashes = [r["kernel_hash"] for r in rows]
        assert hashes == sorted(hashes)
        parsed = [{"log_l_lambda": float(r["log_l_lambda"]), "sharp": r["sharp"] == "true"} for r in rows]
        again = summarize(ell, parsed, cfg.alpha)
        assert int(s["kernels"]) == again["kernels"] == 9
        for key in ("median_log_l_lambda", "q1_log_l_lambda", "q3_log_l_lambda", "frac_target_ineq", "frac_sharp"):
            assert float(s[key]) == again[key]
        for r in rows:
            assert float(r["log_l_lambda"]) == pytest.approx(math.log(float(r["lambda_star"])) / math.log(ell))
    for r in kernels + summary:
        assert r["seed"] == "3" and r["config_hash"] == cfg.config_hash


def test_manifest_and_rerun(tmp_path):
    cfg = ExperimentConfig(ells=(8,), kernels_per_ell=3, seed=11, out_dir=str(tmp_path / "first"))
    res = run_concentration(cfg)
    m = json.loads(res.manifest.read_text())
    assert m["seed"] == 11 and m["config_hash"] == cfg.config_hash
    assert set(m) >= {"command", "config", "seed", "start", "duration", "artifacts", "hashes"}
    again = rerun_manifest(res.manifest, tmp_path / "second")
    m2 = json.loads(again.manifest.read_text())
    names = lambda h: {k.rsplit("/", 1)[-1]: v for k, v in h.items()}  # noqa: E731
    assert names(m["hashes"]) == names(m2["hashes"])


# --- sharpness --------------------------------------------------------------------------------


@pytest.mark.parametrize("ell", [8, 16, 64])
def test_sharpness_points_order(ell):
    a, b = sharpness_points(ell)
    assert np.all(a > b)


@pytest.mark.parametrize("seed", range(3))
def test_sharpness_report_flags(seed):
    b = exact_behavior(sample_nonsingular(16, seed))
    rep = sharpness_report(b)
    # every window point lies outside (0, 1) at this size, so the flags reduce to f(0)=0, f(1)=1
    assert not rep.interior.any()
    assert rep.sharp and rep.failure_fraction == 0.0
    assert rep.threshold == 16.0 ** -(2 + 4)


def test_sharpness_agrees_with_bound_F_where_windows_are_interior():
    ell, spec = 64, BoundSpec(4.5 + 6, 4.5 + 6)
    a, b = sharpness_points(ell)
    for i in range(1, ell + 1):
        for z in (a[i - 1], b[i - 1]):
            if 0 < z < 1:
                assert bound_F(ell, i, float(z), spec).applicable
    assert np.all((a >= 1) | (b <= 0))  # no interior point at ell = 64


# --- scaling fit -----------------------------------------------------------------------------


def test_scaling_fit_report(tmp_path):
    cfg = ExperimentConfig(name="fit", out_dir=str(tmp_path), pe=0.01, z0=0.5)
    res = run_scaling_fit(cfg)
    rows = read_rows(res.artifacts[0])
    gaps = [float(r["gap"]) for r in rows]
    assert [int(r["m"]) for r in rows] == list(range(7, 15))
    assert all(g > 0 for g in gaps) and all(np.diff(gaps) < 0)
    report = json.loads(res.artifacts[1].read_text())
    assert abs(report["power_iteration"]["mu"] - 3.627) <= 0.01
    assert report["empirical_fit"]["method"] == "empirical-fit"
    assert report["lambda_bound"]["method"] == "lambda-bound"
    assert len(report["empirical_fit"]["diagnostics"]["residuals"]) == 8


def test_scaling_fit_identity_degenerate(tmp_path):
    cfg = ExperimentConfig(out_dir=str(tmp_path), kernel=("10", "01"))
    with pytest.raises(ValueError, match="degenerate"):
        run_scaling_fit(cfg)


def test_scaling_fit_cap(tmp_path):
    cfg = ExperimentConfig(out_dir=str(tmp_path), m_range=(20, 25))
    with pytest.raises(OverflowError):
        run_scaling_fit(cfg)


def test_arikan_default_kernel():
    assert ExperimentConfig().kernel == ("10", "11")
    assert ARIKAN.to_dense().tolist() == [[1, 0], [1, 1]]
