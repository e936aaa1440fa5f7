"""Scaling-exponent machinery: g_alpha, lambda(z), its supremum, the Z_m process
and three estimators of mu.

Points near z = 1 are carried as ``(z, 1 - z)`` pairs (or as a logit) so that
``1 - z`` keeps full relative precision; with small alpha, ``g_alpha`` of a
value within 1e-17 of one is still of order 0.1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .behavior import PolarizationBehavior, f_pair
from .gf2 import Seed, as_seed

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def g_alpha(z, alpha: float):
    """``z^alpha (1-z)^alpha`` for any ``alpha > 0``; the contraction analysis uses ``alpha < 1``."""
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    z = np.asarray(z, dtype=float)
    out = (z * (1.0 - z)) ** alpha
    return float(out) if out.ndim == 0 else out


def _g_pair(z, zc, alpha):
    return (np.asarray(z) * np.asarray(zc)) ** alpha


def _renormalize(z, zc):
    """Keep ``z + zc == 1`` while the smaller member stays authoritative."""
    small = z <= zc
    return np.where(small, z, 1.0 - zc), np.where(small, 1.0 - z, zc)


def lambda_values(b: PolarizationBehavior, alpha: float, z, zc=None) -> np.ndarray:
    """``lambda_{alpha,K}(z)`` on an array of interior points."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zc = 1.0 - z if zc is None else np.atleast_1d(np.asarray(zc, dtype=float))
    if np.any(z <= 0) or np.any(zc <= 0):
        raise ValueError("lambda is defined on the open interval (0, 1)")
    f, fc = f_pair(b, z, zc)
    with np.errstate(divide="ignore"):
        log_num = alpha * (np.log(f) + np.log(fc))
    log_den = alpha * (np.log(z) + np.log(zc))
    return np.exp(log_num - log_den[:, None]).mean(axis=1)


def lambda_at(b: PolarizationBehavior, alpha: float, z: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not 0.0 < z < 1.0:
        raise ValueError("lambda is defined on the open interval (0, 1)")
    return float(lambda_values(b, alpha, [z])[0])


def _lambda_logit(b, alpha, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return lambda_values(b, alpha, expit(x), expit(-x))


@dataclass
class LambdaScan:
    alpha: float
    grid: np.ndarray
    values: np.ndarray
    lambda_star: float
    argmax_z: float
    argmax_logit: float

    def to_csv(self) -> str:
        lines = ["z,lambda"]
        lines += [f"{z!r},{v!r}" for z, v in zip(self.grid, self.values)]
        return "\n".join(lines) + "\n"


def scan_logits(ell: int, interior: int = 4096, tail_points: int = 160, tail_floor: float = 1e-300) -> np.ndarray:
    """Uniform interior grid plus geometric tail grids below ``ell^-2`` and above ``1 - ell^-2``."""
    z = np.linspace(0.0, 1.0, interior + 2)[1:-1]
    inner = np.log(z) - np.log1p(-z)
    edge = min(ell**-2.0, z[0])
    tail = np.geomspace(tail_floor, edge, tail_points)
    low = np.log(tail) - np.log1p(-tail)
    return np.unique(np.concatenate([low, inner, -low]))


def lambda_star(
    b: PolarizationBehavior,
    alpha: float,
    interior: int = 4096,
    tail_points: int = 160,
    refine_tol: float = 1e-10,
) -> LambdaScan:
    """Approximate ``sup_{z in (0,1)} lambda_{alpha,K}(z)``.

    Grid search over the logit of ``z`` (uniform interior, geometric tails),
    then golden-section refinement between the neighbours of the best grid
    point.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if interior < 4096:
        raise ValueError("interior grid must have at least 4096 points")
    x = scan_logits(b.ell, interior, tail_points)
    vals = _lambda_logit(b, alpha, x)
    k = int(np.argmax(vals))
    lo = x[max(k - 1, 0)]
    hi = x[min(k + 1, x.size - 1)]
    best_x, best_v = x[k], vals[k]
    a, c = lo, hi
    u = c - GOLDEN * (c - a)
    w = a + GOLDEN * (c - a)
    fu, fw = _lambda_logit(b, alpha, [u, w])
    while c - a > refine_tol * max(1.0, abs(best_x)):
        if fu >= fw:
            c, w, fw = w, u, fu
            u = c - GOLDEN * (c - a)
            fu = _lambda_logit(b, alpha, [u])[0]
        else:
            a, u, fu = u, w, fw
            w = a + GOLDEN * (c - a)
            fw = _lambda_logit(b, alpha, [w])[0]
    for cand_x, cand_v in ((u, fu), (w, fw)):
        if cand_v > best_v:
            best_x, best_v = cand_x, cand_v
    return LambdaScan(
        alpha=alpha,
        grid=expit(x),
        values=vals,
        lambda_star=float(best_v),
        argmax_z=float(expit(best_x)),
        argmax_logit=float(best_x),
    )


# mu estimators -----------------------------------------------------------------


@dataclass
class MuEstimate:
    method: str  # "lambda-bound" | "power-iteration" | "empirical-fit"
    mu: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)


def union_constant(pe: float, alpha: float) -> float:
    """``2 Pe^-alpha + Pe``: the constant in front of the unpolarized fraction."""
    return 2.0 * pe**-alpha + pe


def beta_constant(pe: float) -> float:
    """``(1 + 2 Pe^-0.01)^3``."""
    return (1.0 + 2.0 * pe**-0.01) ** 3


def mu_from_lambda(lam_star: float, alpha: float, ell: int, pe: float | None = None) -> MuEstimate:
    """``mu = 1 / (rho - alpha)`` with ``rho = -log_ell(lambda*)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if lam_star <= 0:
        raise ValueError("lambda* must be positive")
    rho = -math.log(lam_star) / math.log(ell)
    if rho <= alpha:
        raise ValueError(f"vacuous bound: rho = {rho:.6g} does not exceed alpha = {alpha}")
    diag = {"lambda_star": lam_star, "alpha": alpha, "ell": ell, "rho": rho}
    if pe is not None:
        diag["pe"] = pe
        diag["c1"] = union_constant(pe, alpha)
        diag["beta"] = beta_constant(pe)
    return MuEstimate("lambda-bound", 1.0 / (rho - alpha), diag)


def _cosine_grid(n: int) -> np.ndarray:
    """Points clustered at both endpoints, where the eigenfunction bends hardest."""
    g = 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))
    g[0], g[-1] = 0.0, 1.0
    return g


def mu_power_iteration(
    b: PolarizationBehavior,
    grid_size: int = 4096,
    tol: float = 1e-12,
    max_iter: int = 20_000,
) -> MuEstimate:
    """Dominant eigenvalue of ``(T h)(z) = mean_i h(f_i(z))`` by power iteration.

    ``h`` lives on a cosine-spaced grid with linear interpolation, starts at
    ``sqrt(z(1-z))`` and is sup-normalised every step; ``mu = -1/log_ell(lambda)``.
    """
    if grid_size < 2048:
        raise ValueError("grid_size must be at least 2048")
    z = _cosine_grid(grid_size)
    fz = f_pair(b, z)[0]
    fz = np.clip(fz, 0.0, 1.0)
    start = np.sqrt(z * (1.0 - z))
    restarted = False
    h, lam, history = start / start.max(), 0.0, []
    for it in range(1, max_iter + 1):
        th = np.mean([np.interp(fz[:, i], z, h) for i in range(b.ell)], axis=0)
        top = th.max()
        if top <= 0:
            raise ValueError("operator annihilated the iterate")
        new = top / h.max()
        h = th / top
        history.append(new)
        if abs(new - lam) < tol:
            lam = new
            break
        if len(history) > 50 and not restarted:
            d = np.diff(history[-40:])
            if np.sum(np.diff(np.sign(d)) != 0) > 30:
                # persistent oscillation: restart once from the initial shape
                h, restarted, history = start / start.max(), True, []
                lam = 0.0
                continue
        lam = new
    else:
        raise RuntimeError(f"power iteration did not converge in {max_iter} steps")
    if lam >= 1.0 - 1e-9:
        raise ValueError(f"dominant eigenvalue {lam:.12g} >= 1: kernel does not polarize")
    mu = -1.0 / (math.log(lam) / math.log(b.ell))
    return MuEstimate("power-iteration", mu, {"lambda": lam, "iterations": it,
                                             "grid_size": grid_size, "restarted": restarted})


# the Z_m process --------------------------------------------------------------


@dataclass
class ProcessStats:
    m: int
    trials: int
    z0: float
    mean_z: float
    se_z: float
    mean_g_alpha: float
    se_g_alpha: float
    tail_low: float
    tail_mid: float
    tail_high: float
    se_tail_mid: float
    eps: float
    alpha: float

    @property
    def ci(self) -> float:
        """Four-standard-error radius on ``mean_g_alpha``."""
        return 4.0 * self.se_g_alpha


def simulate_process(
    b: PolarizationBehavior,
    z0: float,
    m: int,
    trials: int,
    eps: float,
    alpha: float,
    seed: Seed | int,
    chunk: int = 100_000,
) -> list[ProcessStats]:
    """Monte-Carlo trajectories of ``Z_{t+1} = f_{K,B_t}(Z_t)``; one record per step ``1..m``.

    Tails follow the split ``[0, eps)``, ``[eps, 1-eps]``, ``(1-eps, 1]``.
    Chunk ``c`` of the trials draws its branches from ``seed.derive(c)``.
    """
    if not 0.0 < z0 < 1.0:
        raise ValueError("z0 must lie in (0, 1)")
    if trials < 1 or m < 1:
        raise ValueError("trials and m must be positive")
    seed = as_seed(seed)
    sums = np.zeros((m, 6))  # z, z^2, g, g^2, low, mid
    for c, start in enumerate(range(0, trials, chunk)):
        n = min(chunk, trials - start)
        rng = seed.derive(c).rng()
        z = np.full(n, z0)
        zc = np.full(n, 1.0 - z0)
        for t in range(m):
            branch = rng.integers(0, b.ell, size=n)
            f, fc = f_pair(b, z, zc)
            rows = np.arange(n)
            z, zc = _renormalize(f[rows, branch], fc[rows, branch])
            g = _g_pair(z, zc, alpha)
            low = z < eps
            high = zc < eps
            sums[t] += (z.sum(), (z * z).sum(), g.sum(), (g * g).sum(),
                        low.sum(), (~low & ~high).sum())
    out = []
    for t in range(m):
        sz, sz2, sg, sg2, nlow, nmid = sums[t]
        mz, mg = sz / trials, sg / trials
        var_z = max(sz2 / trials - mz * mz, 0.0)
        var_g = max(sg2 / trials - mg * mg, 0.0)
        pl, pm = nlow / trials, nmid / trials
        out.append(ProcessStats(
            m=t + 1, trials=trials, z0=z0,
            mean_z=mz, se_z=math.sqrt(var_z / trials),
            mean_g_alpha=mg, se_g_alpha=math.sqrt(var_g / trials),
            tail_low=pl, tail_mid=pm, tail_high=1.0 - pl - pm,
            se_tail_mid=math.sqrt(pm * (1 - pm) / trials),
            eps=eps, alpha=alpha,
        ))
    return out


def process_csv(stats: list[ProcessStats]) -> str:
    lines = ["m,mean_g,tail_low,tail_mid,tail_high,ci"]
    for s in stats:
        lines.append(f"{s.m},{s.mean_g_alpha!r},{s.tail_low!r},{s.tail_mid!r},{s.tail_high!r},{s.ci!r}")
    return "\n".join(lines) + "\n"


EXACT_N_CAP = 2**24


def exact_bitchannel_erasures(
    b: PolarizationBehavior, z0: float, m: int, cap: int = EXACT_N_CAP
) -> np.ndarray:
    """Erasure probabilities of all ``ell^m`` bit-channels.

    Entry ``i`` (0-based) applies ``f_{d_1+1}``, then ``f_{d_2+1}``, ... to
    ``z0`` where ``d_1 d_2 ... d_m`` are the base-``ell`` digits of ``i``,
    most significant first.
    """
    if not 0.0 <= z0 <= 1.0:
        raise ValueError("z0 must lie in [0, 1]")
    if m < 1:
        raise ValueError("m must be at least 1")
    if b.ell**m > cap:
        raise OverflowError(f"{b.ell}^{m} exceeds the cap {cap}")
    p = np.array([z0])
    pc = np.array([1.0 - z0])
    step = 1 << 18
    for _ in range(m):
        nf = np.empty((p.size, b.ell))
        nc = np.empty((p.size, b.ell))
        for a in range(0, p.size, step):
            nf[a : a + step], nc[a : a + step] = f_pair(b, p[a : a + step], pc[a : a + step])
        p, pc = _renormalize(nf.ravel(), nc.ravel())
    return p


def achievable_rate(p: np.ndarray, pe: float) -> float:
    """Fraction of bit-channels with erasure probability at most ``pe / n``."""
    return float(np.count_nonzero(p <= pe / p.size)) / p.size


def empirical_mu_fit(
    b: PolarizationBehavior, z0: float, pe: float, m_range, cap: int = EXACT_N_CAP
) -> MuEstimate:
    """Least-squares slope of ``log n`` against ``log(1/gap)`` across depths."""
    rows = []
    for m in m_range:
        p = exact_bitchannel_erasures(b, z0, m, cap)
        r = achievable_rate(p, pe)
        gap = (1.0 - z0) - r
        rows.append({"m": m, "n": p.size, "rate": r, "gap": gap,
                     "union_bound": float(p[p <= pe / p.size].sum())})
    if len(rows) < 2:
        raise ValueError("need at least two depths to fit")
    gaps = np.array([r["gap"] for r in rows])
    if np.any(gaps <= 0):
        raise ValueError("degenerate fit: non-positive gap to capacity")
    x = np.log(1.0 / gaps)
    y = np.log([r["n"] for r in rows])
    if np.ptp(x) <= 1e-12:
        raise ValueError("degenerate fit: gap does not change with the block length")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return MuEstimate("empirical-fit", float(slope), {
        "z0": z0, "pe": pe, "intercept": float(intercept),
        "residuals": resid.tolist(), "rows": rows,
    })
