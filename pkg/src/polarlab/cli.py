"""Command-line entry point.

    polarlab kernel sample --l 16 --seed 3 --out k16.k
    polarlab kernel check --file k16.k
    polarlab behavior exact --file arikan.k
    polarlab scaling mu --file arikan.k --method power
    polarlab code construct --kernel arikan.k -m 10 --z 0.5 --pe 0.01 --out code.json
    polarlab code fer --code code.json --z 0.4 --trials 100000 --seed 1
    polarlab exp concentration --l 32 --kernels 50 --alpha 0.0625 --seed 7

Exit status: 0 on success, 1 on a domain error (bad kernel, cap exceeded,
degenerate fit, ...), 2 on a usage error.  Every run writes a manifest into
``--manifest-dir`` (default: ``$POLARLAB_OUT`` or ``./polarlab-out``).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import average, behavior as bh, codec, experiments as ex, gf2, scaling

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class _Run:
    """Collects what a command produced so the manifest can list it."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.artifacts: list[Path] = []
        self.seed = getattr(args, "seed", None)
        self.has_manifest = False  # experiments write their own

    def emit(self, text: str, out: str | None) -> None:
        if out:
            path = Path(out)
            path.write_text(text)
            self.artifacts.append(path)
        else:
            sys.stdout.write(text)


def _kernel(path: str) -> bh.Kernel:
    return bh.Kernel(gf2.read_kernel(path))


def _load_behavior(args) -> bh.PolarizationBehavior:
    k = _kernel(args.file)
    if getattr(args, "samples", None):
        return bh.mc_behavior(k, args.samples, args.seed)
    return bh.behavior(k, seed=args.seed)


# kernel ---------------------------------------------------------------------------


def cmd_kernel_sample(run: _Run) -> None:
    a = run.args
    run.emit(gf2.format_kernel(gf2.sample_nonsingular(a.l, a.seed)), a.out)


def cmd_kernel_check(run: _Run) -> None:
    k = gf2.read_kernel(run.args.file)
    if k.rows != k.cols or k.rank() < k.rows:
        print("nonsingular=false polarizing=false")
        return
    print(f"nonsingular=true polarizing={str(gf2.is_polarizing(k)).lower()}")


# behavior / average -------------------------------------------------------------------


def cmd_behavior_exact(run: _Run) -> None:
    run.emit(bh.exact_behavior(_kernel(run.args.file), run.args.cap).to_csv(), run.args.out)


def cmd_behavior_mc(run: _Run) -> None:
    a = run.args
    run.emit(bh.mc_behavior(_kernel(a.file), a.samples, a.seed).to_csv(), a.out)


def cmd_avg_table(run: _Run) -> None:
    run.emit(average.avg_table(run.args.l).to_csv(), run.args.out)


def cmd_avg_eval(run: _Run) -> None:
    a = run.args
    value = average.avg_F(a.l, a.i, a.z)
    print(json.dumps({"ell": a.l, "i": a.i, "z": a.z, "F": value}))


# scaling ----------------------------------------------------------------------------


def cmd_scaling_lambda(run: _Run) -> None:
    a = run.args
    scan = scaling.lambda_star(_load_behavior(a), a.alpha, interior=a.grid)
    run.emit(scan.to_csv(), a.out)
    print(f"lambda_star={scan.lambda_star!r} argmax_z={scan.argmax_z!r}", file=sys.stderr if not a.out else sys.stdout)


def cmd_scaling_mu(run: _Run) -> None:
    a = run.args
    b = _load_behavior(a)
    if a.method == "power":
        est = scaling.mu_power_iteration(b, grid_size=a.grid)
    elif a.method == "bound":
        lam = scaling.lambda_star(b, a.alpha, interior=a.grid).lambda_star
        est = scaling.mu_from_lambda(lam, a.alpha, b.ell, a.pe)
    else:
        est = scaling.empirical_mu_fit(b, a.z0, a.pe, range(a.m_min, a.m_max + 1))
    run.emit(est.to_json() + "\n", a.out)


def cmd_scaling_process(run: _Run) -> None:
    a = run.args
    stats = scaling.simulate_process(_load_behavior(a), a.z0, a.m, a.trials, a.eps, a.alpha, a.seed)
    run.emit(scaling.process_csv(stats), a.out)


# code -------------------------------------------------------------------------------


def cmd_code_construct(run: _Run) -> None:
    a = run.args
    k = _kernel(a.kernel)
    if a.n_info is not None:
        code, rep = codec.construct_code_fixed_rate(k, a.m, a.z, a.n_info)
    else:
        code, rep = codec.construct_code(k, a.m, a.z, a.pe)
    text = json.dumps(code.to_dict(rep.p), indent=2) + "\n"
    run.emit(text, a.out)
    summary = {"n": code.n, "k": code.k, "rate": rep.rate, "union_bound": rep.union_bound, "gap": rep.gap}
    print(json.dumps(summary), file=sys.stderr if not a.out else sys.stdout)


def _parse_received(code: codec.PolarCode, a) -> np.ndarray:
    if a.trits is not None:
        table = {"0": codec.Symbol.ZERO, "1": codec.Symbol.ONE, "e": codec.Symbol.ERASED, "?": codec.Symbol.ERASED}
        try:
            y = np.array([table[c] for c in a.trits.strip()], dtype=np.int8)
        except KeyError as exc:
            raise ValueError(f"received word may only contain 0, 1, e or ?; got {exc}") from None
        if y.size != code.n:
            raise ValueError(f"expected {code.n} received symbols, got {y.size}")
        return y
    values = codec.hex_to_bits(a.values, code.n).astype(np.int8)
    erased = codec.hex_to_bits(a.erasures, code.n).astype(bool) if a.erasures else np.zeros(code.n, bool)
    return np.where(erased, np.int8(codec.Symbol.ERASED), values)


def cmd_code_encode(run: _Run) -> None:
    code = codec.PolarCode.load(run.args.code)
    info = codec.hex_to_bits(run.args.info, code.k)
    run.emit(codec.bits_to_hex(codec.encode(code, info)) + "\n", run.args.out)


def cmd_code_decode(run: _Run) -> None:
    code = codec.PolarCode.load(run.args.code)
    out = codec.sc_decode(code, _parse_received(code, run.args))
    erased = int((~out.status).sum())
    if out.success:
        run.emit(codec.bits_to_hex(out.info) + "\n", run.args.out)
        print(f"status=decoded erased_positions={erased}", file=sys.stderr)
    else:
        print(f"status=failure erased_positions={erased}")
        raise _DecodeFailure


def cmd_code_fer(run: _Run) -> None:
    a = run.args
    code = codec.PolarCode.load(a.code)
    r = codec.simulate_fer(code, a.z, a.trials, a.seed)
    print(json.dumps({"fer": r.fer, "ci": r.ci, "frames": r.frames, "failures": r.failures,
                      "wrong_bits": r.wrong_bits}))


# experiments ------------------------------------------------------------------------


def _cfg(a, name: str, **extra) -> ex.ExperimentConfig:
    return ex.ExperimentConfig(name=name, seed=a.seed, out_dir=a.out or str(ex.default_out_dir()), **extra)


def cmd_exp_concentration(run: _Run) -> None:
    a = run.args
    cfg = _cfg(a, "concentration", ells=tuple(a.l), kernels_per_ell=a.kernels, alpha=a.alpha,
               mc_samples=a.samples, z_grid=a.grid, exhaustive=a.exhaustive)
    res = ex.run_concentration(cfg)
    run.artifacts += res.artifacts
    run.has_manifest = True
    for p in res.artifacts + [res.manifest]:
        print(p)


def cmd_exp_scaling_fit(run: _Run) -> None:
    a = run.args
    kernel = tuple(gf2.format_kernel(gf2.read_kernel(a.file)).split()[1:])
    cfg = _cfg(a, "scaling-fit", kernel=kernel, z0=a.z0, pe=a.pe,
               m_range=tuple(range(a.m_min, a.m_max + 1)), z_grid=a.grid)
    res = ex.run_scaling_fit(cfg)
    run.artifacts += res.artifacts
    run.has_manifest = True
    for p in res.artifacts + [res.manifest]:
        print(p)


def cmd_exp_rerun(run: _Run) -> None:
    res = ex.rerun_manifest(run.args.manifest, run.args.out)
    run.artifacts += res.artifacts
    run.has_manifest = True
    for p in res.artifacts + [res.manifest]:
        print(p)


class _DecodeFailure(Exception):
    pass


# parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polarlab", description="Polarization kernels, scaling exponents and polar codes on the BEC.")
    p.add_argument("--manifest-dir", default=None, help="where run manifests go (default: $POLARLAB_OUT)")
    groups = p.add_subparsers(dest="group", required=True)

    def sub(group, name, func, help_):
        sp = group.add_parser(name, help=help_)
        sp.set_defaults(func=func, command_name=name)
        return sp

    def behavior_args(sp):
        sp.add_argument("--file", required=True, help="kernel file")
        sp.add_argument("--samples", type=int, default=None, help="force Monte-Carlo with this many patterns per weight")
        sp.add_argument("--seed", type=int, default=0)

    g = groups.add_parser("kernel").add_subparsers(dest="action", required=True)
    sp = sub(g, "sample", cmd_kernel_sample, "sample a uniform nonsingular kernel")
    sp.add_argument("--l", type=int, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out")
    sp = sub(g, "check", cmd_kernel_check, "report nonsingularity and polarization")
    sp.add_argument("--file", required=True)

    g = groups.add_parser("behavior").add_subparsers(dest="action", required=True)
    sp = sub(g, "exact", cmd_behavior_exact, "exact behavior table by full enumeration")
    sp.add_argument("--file", required=True)
    sp.add_argument("--cap", type=int, default=bh.EXACT_CAP)
    sp.add_argument("--out")
    sp = sub(g, "mc", cmd_behavior_mc, "weight-stratified Monte-Carlo behavior table")
    sp.add_argument("--file", required=True)
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out")

    g = groups.add_parser("avg").add_subparsers(dest="action", required=True)
    sp = sub(g, "table", cmd_avg_table, "average conditional erasure table")
    sp.add_argument("--l", type=int, required=True)
    sp.add_argument("--out")
    sp = sub(g, "eval", cmd_avg_eval, "average erasure probability of one bit")
    sp.add_argument("--l", type=int, required=True)
    sp.add_argument("--i", type=int, required=True)
    sp.add_argument("--z", type=float, required=True)

    g = groups.add_parser("scaling").add_subparsers(dest="action", required=True)
    sp = sub(g, "lambda", cmd_scaling_lambda, "scan lambda(z) and report its supremum")
    behavior_args(sp)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--grid", type=int, default=4096)
    sp.add_argument("--out")
    sp = sub(g, "mu", cmd_scaling_mu, "scaling exponent estimate")
    behavior_args(sp)
    sp.add_argument("--method", choices=["power", "bound", "fit"], default="power")
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--pe", type=float, default=0.01)
    sp.add_argument("--z0", type=float, default=0.5)
    sp.add_argument("--m-min", type=int, default=7)
    sp.add_argument("--m-max", type=int, default=14)
    sp.add_argument("--grid", type=int, default=4096)
    sp.add_argument("--out")
    sp = sub(g, "process", cmd_scaling_process, "Monte-Carlo of the erasure process")
    behavior_args(sp)
    sp.add_argument("--z0", type=float, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--eps", type=float, default=1e-3)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--out")

    g = groups.add_parser("code").add_subparsers(dest="action", required=True)
    sp = sub(g, "construct", cmd_code_construct, "union-bound (or fixed-rate) code construction")
    sp.add_argument("--kernel", required=True)
    sp.add_argument("-m", type=int, required=True)
    sp.add_argument("--z", type=float, required=True)
    rule = sp.add_mutually_exclusive_group(required=True)
    rule.add_argument("--pe", type=float)
    rule.add_argument("--n-info", type=int)
    sp.add_argument("--out")
    sp = sub(g, "encode", cmd_code_encode, "encode a hex message")
    sp.add_argument("--code", required=True)
    sp.add_argument("--info", required=True, help="message bits as hex")
    sp.add_argument("--out")
    sp = sub(g, "decode", cmd_code_decode, "successive-cancellation decoding")
    sp.add_argument("--code", required=True)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--trits", help="received word over {0,1,e}")
    src.add_argument("--values", help="received bit values as hex (erased positions arbitrary)")
    sp.add_argument("--erasures", help="erasure mask as hex (with --values)")
    sp.add_argument("--out")
    sp = sub(g, "fer", cmd_code_fer, "Monte-Carlo frame-erasure rate")
    sp.add_argument("--code", required=True)
    sp.add_argument("--z", type=float, required=True)
    sp.add_argument("--trials", type=int, default=100_000)
    sp.add_argument("--seed", type=int, required=True)

    g = groups.add_parser("exp").add_subparsers(dest="action", required=True)
    sp = sub(g, "concentration", cmd_exp_concentration, "kernel sampling campaign")
    sp.add_argument("--l", type=int, action="append", required=True, help="kernel size (repeatable)")
    sp.add_argument("--kernels", type=int, default=50)
    sp.add_argument("--alpha", type=float, default=1 / 16)
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--grid", type=int, default=4096)
    sp.add_argument("--exhaustive", action="store_true", help="use every kernel of GL(l) (l <= 4)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out")
    sp = sub(g, "scaling-fit", cmd_exp_scaling_fit, "gap-to-capacity fit across depths")
    sp.add_argument("--file", required=True)
    sp.add_argument("--z0", type=float, default=0.5)
    sp.add_argument("--pe", type=float, default=0.01)
    sp.add_argument("--m-min", type=int, default=7)
    sp.add_argument("--m-max", type=int, default=14)
    sp.add_argument("--grid", type=int, default=4096)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp = sub(g, "rerun", cmd_exp_rerun, "re-execute an experiment manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out")
    return p


def _usage_checks(args: argparse.Namespace) -> str | None:
    for name in ("trials", "samples", "kernels", "m", "grid"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            return f"--{name} must be positive"
    if getattr(args, "erasures", None) and not getattr(args, "values", None):
        return "--erasures requires --values"
    return None


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    problem = _usage_checks(args)
    if problem:
        parser.print_usage(sys.stderr)
        print(f"polarlab: error: {problem}", file=sys.stderr)
        return EXIT_USAGE

    run = _Run(args)
    start, t0 = time.time(), time.perf_counter()
    status = EXIT_OK
    try:
        args.func(run)
    except _DecodeFailure:
        status = EXIT_DOMAIN
    except (ValueError, OverflowError, IndexError, RuntimeError, KeyError, OSError) as exc:
        print(f"polarlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_DOMAIN
    if run.has_manifest:
        return status
    command = f"{args.group} {args.command_name}"
    config = {k: v for k, v in vars(args).items() if k not in ("func", "command_name", "manifest_dir")}
    config["exit_status"] = status
    mdir = Path(args.manifest_dir) if args.manifest_dir else ex.default_out_dir()
    try:
        ex.write_manifest(mdir, command, config, run.seed, start, t0, run.artifacts)
    except OSError as exc:
        print(f"polarlab: could not write manifest: {exc}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
