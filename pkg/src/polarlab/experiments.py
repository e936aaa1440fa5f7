"""Seeded batch experiments that write CSV/JSON artifacts plus a manifest."""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .behavior import Kernel, PolarizationBehavior, behavior, exact_behavior, f_pair
from .gf2 import BitMatrix, Seed, enumerate_gl, is_polarizing, sample_nonsingular
from .scaling import EXACT_N_CAP, MuEstimate, empirical_mu_fit, lambda_star, mu_from_lambda, mu_power_iteration

OUT_ENV = "POLARLAB_OUT"
DEFAULT_OUT = "polarlab-out"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "concentration"
    ells: tuple[int, ...] = (8, 16, 32, 64)
    kernels_per_ell: int = 50
    alpha: float = 1 / 16
    mc_samples: int = 10_000
    z_grid: int = 4096
    m_range: tuple[int, ...] = tuple(range(7, 15))
    pe: float = 0.01
    seed: int = 0
    out_dir: str = field(default_factory=lambda: str(default_out_dir()))
    z0: float = 0.5
    kernel: tuple[str, ...] = ("10", "11")
    exhaustive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ells", tuple(int(e) for e in self.ells))
        object.__setattr__(self, "m_range", tuple(int(m) for m in self.m_range))
        object.__setattr__(self, "kernel", tuple(self.kernel))
        if not self.ells or any(not 2 <= e <= 64 for e in self.ells):
            raise ValueError("every ell must lie in [2, 64]")
        if self.kernels_per_ell < 1 or self.mc_samples < 1 or not self.m_range:
            raise ValueError("counts must be at least 1")
        if self.z_grid < 4096:
            raise ValueError("z_grid must be at least 4096")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.pe < 1.0 or not 0.0 < self.z0 < 1.0:
            raise ValueError("pe and z0 must lie in (0, 1)")
        if self.exhaustive and any(e > 4 for e in self.ells):
            raise ValueError("exhaustive campaigns are limited to ell <= 4")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    @property
    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# sharpness ----------------------------------------------------------------------


@dataclass
class SharpnessReport:
    """Per-index behavior at ``i/ell ± 5 ell^-1/2 log2 ell`` (clamped to [0, 1])."""

    ell: int
    kernel_hash: str
    a: np.ndarray
    b: np.ndarray
    f_a: np.ndarray
    f_b: np.ndarray
    threshold: float

    @property
    def pass_a(self) -> np.ndarray:
        return self.f_a >= 1.0 - self.threshold

    @property
    def pass_b(self) -> np.ndarray:
        return self.f_b <= self.threshold

    @property
    def failure_fraction(self) -> float:
        return float(np.mean(np.concatenate([~self.pass_a, ~self.pass_b])))

    @property
    def sharp(self) -> bool:
        return bool(self.pass_a.all() and self.pass_b.all())

    @property
    def interior(self) -> np.ndarray:
        """Indices whose both window points fall strictly inside (0, 1)."""
        return (self.a < 1.0) & (self.b > 0.0)


def sharpness_points(ell: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, ell + 1)
    w = 5.0 * math.log2(ell) / math.sqrt(ell)
    return i / ell + w, i / ell - w


def sharpness_report(b: PolarizationBehavior) -> SharpnessReport:
    ell = b.ell
    a_raw, b_raw = sharpness_points(ell)
    a, lo = np.clip(a_raw, 0.0, 1.0), np.clip(b_raw, 0.0, 1.0)
    diag = np.arange(ell)
    f_a = f_pair(b, a)[0][diag, diag]
    f_b = f_pair(b, lo)[0][diag, diag]
    thr = float(ell ** -(2.0 + math.log2(ell)))
    return SharpnessReport(ell, b.kernel_id, a, lo, f_a, f_b, thr)


# artifacts ------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def write_manifest(out: Path, command: str, config: dict, seed: int | None, start: float, t0: float,
                   artifacts: list[Path], config_hash: str | None = None) -> Path:
    """Record ``{command, config, seed, start, duration, artifacts, hashes}`` next to the artifacts."""
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash or config_digest(config),
        "seed": seed,
        "start": datetime.fromtimestamp(start, timezone.utc).isoformat(),
        "duration": time.perf_counter() - t0,
        "artifacts": [str(p) for p in artifacts],
        "hashes": {str(p): _sha256(p) for p in artifacts},
        "versions": {"polarlab": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    path = out / f"{command.replace(' ', '_')}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _write_manifest(out: Path, command: str, cfg: ExperimentConfig, start: float, t0: float,
                    artifacts: list[Path]) -> Path:
    return write_manifest(out, command, cfg.to_dict(), cfg.seed, start, t0, artifacts, cfg.config_hash)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def _csv(header: list[str], rows: list[list]) -> str:
    return "\n".join([",".join(header)] + [",".join(_fmt(v) for v in r) for r in rows]) + "\n"


@dataclass
class ExperimentResult:
    artifacts: list[Path]
    manifest: Path
    data: dict = field(default_factory=dict)


# concentration campaign --------------------------------------------------------------


def _campaign_kernels(cfg: ExperimentConfig, ell: int) -> list[tuple[BitMatrix, Seed]]:
    root = Seed(cfg.seed).derive(ell)
    if cfg.exhaustive:
        return [(k, root.derive(j)) for j, k in enumerate(enumerate_gl(ell))]
    return [(sample_nonsingular(ell, root.derive(j, 0)), root.derive(j, 1)) for j in range(cfg.kernels_per_ell)]


def concentration_rows(cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    per_kernel, summary = [], []
    for ell in cfg.ells:
        rows = []
        for k, s in _campaign_kernels(cfg, ell):
            b = behavior(Kernel(k), cfg.mc_samples, s)
            scan = lambda_star(b, cfg.alpha, interior=cfg.z_grid)
            rep = sharpness_report(b)
            lam = scan.lambda_star
            rows.append({
                "ell": ell,
                "kernel_hash": k.digest(),
                "polarizing": is_polarizing(k),
                "mode": b.mode,
                "lambda_star": lam,
                "argmax_z": scan.argmax_z,
                "log_l_lambda": math.log(lam) / math.log(ell),
                "sharp_fail_fraction": rep.failure_fraction,
                "sharp": rep.sharp,
            })
        rows.sort(key=lambda r: r["kernel_hash"])
        per_kernel += rows
        summary.append(summarize(ell, rows, cfg.alpha))
    return per_kernel, summary


def summarize(ell: int, rows: list[dict], alpha: float) -> dict:
    logs = np.array([r["log_l_lambda"] for r in rows])
    q1, med, q3 = np.quantile(logs, [0.25, 0.5, 0.75])
    return {
        "ell": ell,
        "kernels": len(rows),
        "median_log_l_lambda": float(med),
        "q1_log_l_lambda": float(q1),
        "q3_log_l_lambda": float(q3),
        "frac_target_ineq": float(np.mean(logs <= -0.5 + 5 * alpha)),
        "frac_sharp": float(np.mean([r["sharp"] for r in rows])),
    }


KERNEL_COLUMNS = ["seed", "config_hash", "ell", "kernel_hash", "polarizing", "mode", "lambda_star",
                  "argmax_z", "log_l_lambda", "sharp_fail_fraction", "sharp"]
SUMMARY_COLUMNS = ["seed", "config_hash", "ell", "kernels", "median_log_l_lambda", "q1_log_l_lambda",
                   "q3_log_l_lambda", "frac_target_ineq", "frac_sharp"]


def run_concentration(cfg: ExperimentConfig) -> ExperimentResult:
    start, t0 = time.time(), time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_kernel, summary = concentration_rows(cfg)
    tag = {"seed": cfg.seed, "config_hash": cfg.config_hash}
    kpath, spath = out / "concentration_kernels.csv", out / "concentration_summary.csv"
    kpath.write_text(_csv(KERNEL_COLUMNS, [[{**tag, **r}[c] for c in KERNEL_COLUMNS] for r in per_kernel]))
    spath.write_text(_csv(SUMMARY_COLUMNS, [[{**tag, **r}[c] for c in SUMMARY_COLUMNS] for r in summary]))
    manifest = _write_manifest(out, "exp concentration", cfg, start, t0, [kpath, spath])
    return ExperimentResult([kpath, spath], manifest, {"kernels": per_kernel, "summary": summary})


# scaling fit -------------------------------------------------------------------------


def best_lambda_bound(b: PolarizationBehavior, pe: float, alphas=None, z_grid: int = 4096) -> MuEstimate:
    """Smallest ``1/(rho - alpha)`` over a grid of ``alpha``; raises if all are vacuous."""
    alphas = np.linspace(0.005, 0.5, 100) if alphas is None else alphas
    best = None
    for a in alphas:
        lam = lambda_star(b, float(a), interior=z_grid).lambda_star
        try:
            est = mu_from_lambda(lam, float(a), b.ell, pe)
        except ValueError:
            continue
        if best is None or est.mu < best.mu:
            best = est
    if best is None:
        raise ValueError("every alpha on the grid gives a vacuous bound")
    return best


FIT_COLUMNS = ["seed", "config_hash", "m", "n", "rate", "gap", "union_bound"]


def run_scaling_fit(cfg: ExperimentConfig) -> ExperimentResult:
    start, t0 = time.time(), time.perf_counter()
    k = Kernel(BitMatrix.from_strings(cfg.kernel))
    if k.ell ** max(cfg.m_range) > EXACT_N_CAP:
        raise OverflowError(f"{k.ell}^{max(cfg.m_range)} exceeds the cap {EXACT_N_CAP}")
    b = exact_behavior(k)
    fit = empirical_mu_fit(b, cfg.z0, cfg.pe, cfg.m_range)
    power = mu_power_iteration(b)
    try:
        bound = best_lambda_bound(b, cfg.pe, z_grid=cfg.z_grid).to_dict()
    except ValueError as exc:
        bound = {"method": "lambda-bound", "mu": None, "diagnostics": {"error": str(exc)}}
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [[cfg.seed, cfg.config_hash, r["m"], r["n"], r["rate"], r["gap"], r["union_bound"]]
            for r in fit.diagnostics["rows"]]
    cpath, jpath = out / "scaling_fit.csv", out / "scaling_mu.json"
    cpath.write_text(_csv(FIT_COLUMNS, rows))
    report = {"seed": cfg.seed, "config_hash": cfg.config_hash, "kernel": list(cfg.kernel),
              "empirical_fit": fit.to_dict(), "power_iteration": power.to_dict(), "lambda_bound": bound}
    jpath.write_text(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
    manifest = _write_manifest(out, "exp scaling-fit", cfg, start, t0, [cpath, jpath])
    return ExperimentResult([cpath, jpath], manifest, report)


RUNNERS = {"exp concentration": run_concentration, "exp scaling-fit": run_scaling_fit}


def rerun_manifest(path: str | Path, out_dir: str | Path | None = None) -> ExperimentResult:
    """Re-execute the experiment a manifest describes (optionally elsewhere)."""
    m = json.loads(Path(path).read_text())
    cfg = ExperimentConfig.from_dict(m["config"])
    if out_dir is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "out_dir": str(out_dir)})
    return RUNNERS[m["command"]](cfg)
