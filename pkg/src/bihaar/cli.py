"""``bihaar`` command-line interface.

Exit codes: 0 success, 1 bad flags or unreadable input, 2 domain or size errors.
"""

from __future__ import annotations

import argparse
import json
import sys


from . import analysis, io
from .denoise import DenoiseConfig, denoise
from .errors import DomainError, ParseError, SizeError, StructureError
from .transforms import pad_to_scales

EXIT_PARSE = 1
EXIT_DOMAIN = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text):
    vals = _float_list(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    return [int(v) for v in vals]


def _dims(text):
    vals = _int_list(text)
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"need three sizes nx,ny,nnu, got {text!r}")
    return tuple(vals)


def _read_bytes(path):
    if path == "-":
        return sys.stdin.buffer.read()
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None


def _write_bytes(path, data):
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def _write_text(path, text):
    _write_bytes(path, text.encode("utf-8"))


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------- denoise


def _check_denoise_flags(args):
    if not 0.0 < args.alpha < 1.0:
        raise DomainError(f"--alpha must lie in (0, 1), got {args.alpha}")
    if args.fdr is not None and not 0.0 < args.fdr < 1.0:
        raise DomainError(f"--fdr must lie in (0, 1), got {args.fdr}")
    if args.known_lambda is not None and not args.known_lambda >= 0:
        raise DomainError(f"--lambda must be >= 0, got {args.known_lambda}")
    for flag, v in (("--scales", args.scales), ("--scales-xy", args.scales_xy),
                    ("--scales-nu", args.scales_nu)):
        if v is not None and v < 1:
            raise DomainError(f"{flag} must be >= 1, got {v}")


def _load_counts(data, scheme):
    arr, fmt = io.read_any(data)
    if fmt == "bhv1" and (scheme == "2d" or (scheme is None and arr.shape[2] == 1)):
        return io.volume_to_image(arr), fmt, "2d"
    default = {"csv": "1d", "pgm": "2d", "bhv1": "2d1d"}[fmt]
    return arr, fmt, scheme or default


def _encode_output(est, scheme, out_path):
    if scheme == "1d":
        return io.write_csv_1d(est)
    if scheme == "2d":
        if out_path and out_path.lower().endswith(".pgm"):
            return io.write_pgm(est)
        return io.write_bhv1(io.image_to_volume(est), dtype="f64")
    return io.write_bhv1(est, dtype="f64")


def cmd_denoise(args):
    _check_denoise_flags(args)
    counts, fmt, scheme = _load_counts(_read_bytes(args.input), args.scheme)
    if scheme == "2d1d":
        J_xy = args.scales_xy or args.scales
        J_nu = args.scales_nu or args.scales
        axis_scales = (J_xy, J_xy, J_nu)
    else:
        J_xy, J_nu = args.scales, None
        axis_scales = (J_xy,) * counts.ndim
    expected_ndim = {"1d": 1, "2d": 2, "2d1d": 3}[scheme]
    if counts.ndim != expected_ndim:
        raise StructureError(f"--scheme {scheme} needs {expected_ndim}-D input, file holds {counts.ndim}-D")
    mode = "fdr" if args.fdr is not None else ("universal" if args.universal else "fpr")
    cfg = DenoiseConfig(transform=args.transform, scheme=scheme, scales=J_xy, scales_nu=J_nu,
                        alpha=args.alpha, method=args.method, mode=mode, fdr_rate=args.fdr,
                        known_lambda=args.known_lambda, c=args.c)
    padded, crop = pad_to_scales(counts, axis_scales, mode=args.pad)
    est, report = denoise(padded, cfg)
    est = est[crop]
    if padded.shape != counts.shape:
        report.padding = {
            "mode": args.pad,
            "input_shape": list(counts.shape),
            "padded_shape": list(padded.shape),
            "crop_start": [s.start for s in crop],
        }
    _write_bytes(args.output, _encode_output(est, scheme, args.output))
    rep = report.to_dict()
    rep["input_format"] = fmt
    text = json.dumps(rep, indent=2, sort_keys=True) + "\n"
    if args.report:
        _write_text(args.report, text)
    else:
        sys.stderr.write(text)
    return 0


# ---------------------------------------------------------------- pvalues


def cmd_pvalues(args):
    if args.lambda_list is None and args.k0_list is None:
        grid = analysis.PVALUE_GRID
    else:
        lams = args.lambda_list or [lam for lam, _ in analysis.PVALUE_GRID]
        if any(lam < 0 for lam in lams):
            raise DomainError("--lambda-list entries must be >= 0")
        if args.k0_list is None:
            grid = [(lam, dict(analysis.PVALUE_GRID).get(lam, (1, 2, 3))) for lam in lams]
        else:
            if any(k < 1 for k in args.k0_list):
                raise DomainError("--k0-list entries must be >= 1")
            grid = [(lam, args.k0_list) for lam in lams]
    lines = ["lambda_j,k0,p_H,p_BH,bound"]
    for lam, k, ph, pbh, bound in analysis.pvalue_table(grid):
        lines.append(f"{lam:g},{k},{ph:.6e},{pbh:.6e},{bound:.6e}")
    _write_text(args.output, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------- bench


def cmd_bench_nmise(args):
    rows = analysis.run_nmise_benchmark(peaks=args.peaks, reps=args.reps, seed=args.seed,
                                        length=args.length, scales=args.scales, alpha=args.alpha,
                                        method=args.method, oracle=args.oracle)
    lines = ["peak,method,nmise"] + [f"{p:g},{m},{_fmt(v)}" for p, m, v in rows]
    _write_text(args.output, "\n".join(lines) + "\n")
    return 0


def cmd_bench_flux(args):
    res = analysis.run_flux_benchmark(dims=args.dims, sigma=args.sigma, background=args.background,
                                      seed=args.seed, J_xy=args.scales_xy, J_nu=args.scales_nu,
                                      alpha=args.alpha, method=args.method)
    lines = ["# flux_loss", "method,loss"]
    lines += [f"{m},{_fmt(v)}" for m, v in res["losses"].items()]
    lines += ["# flux_curves", "band,truth,haar,bihaar"]
    for i, s in enumerate(res["truth"]):
        lines.append(f"{i},{_fmt(s)},{_fmt(res['curves']['haar'][i])},{_fmt(res['curves']['bihaar'][i])}")
    _write_text(args.output, "\n".join(lines) + "\n")
    return 0


def cmd_bench_speed(args):
    times = analysis.run_speed_benchmark(dims=args.dims, seed=args.seed, J_xy=args.scales_xy,
                                         J_nu=args.scales_nu, alpha=args.alpha, method=args.method,
                                         repeats=args.repeats)
    lines = ["transform,seconds"] + [f"{t},{v:.6f}" for t, v in times.items()]
    lines.append(f"ratio_tihaar_over_bihaar,{times['tihaar'] / times['bihaar']:.3f}")
    _write_text(args.output, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------- simulate


def cmd_simulate(args):
    meta = {"generator": args.generator, "seed": args.seed, "replicate": args.replicate}
    if args.generator == "smooth":
        truth = analysis.gen_smooth(args.peak, args.length)
        meta.update(peak=args.peak, length=args.length)
    else:
        truth = analysis.gen_hyperspectral(args.dims, sigma=args.sigma, background=args.background)
        meta.update(dims=list(args.dims), sigma=args.sigma, background=args.background,
                    amplitude_start=2.0, amplitude_end=1e-4)
    data = truth if args.intensity else analysis.sample_poisson(truth, args.seed, args.replicate)
    if truth.ndim == 1:
        payload = io.write_csv_1d(data)
    else:
        payload = io.write_bhv1(data, dtype="f64" if args.intensity else "u32")
    _write_bytes(args.output, payload)
    if args.meta:
        _write_text(args.meta, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------- parser


def _add_volume_flags(p, alpha):
    p.add_argument("--dims", type=_dims, default=(129, 129, 64), help="volume size nx,ny,nnu")
    p.add_argument("--scales-xy", type=int, default=3)
    p.add_argument("--scales-nu", type=int, default=5)
    p.add_argument("--alpha", type=float, default=alpha)
    p.add_argument("--method", choices=("cltb", "fab"), default="fab")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None, help="output path (default stdout)")


def build_parser():
    ap = _Parser(prog="bihaar", description="Poisson count denoising with Haar-calibrated tests on Bi-Haar coefficients.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("denoise", help="denoise a count file")
    d.add_argument("--input", required=True, help="CSV (1D), PGM (2D) or BHV1 (3D) counts; '-' for stdin")
    d.add_argument("--output", default=None, help="output path (default stdout)")
    d.add_argument("--report", default=None, help="JSON report path (default stderr)")
    d.add_argument("--transform", choices=("haar", "bihaar", "tihaar"), default="bihaar")
    d.add_argument("--scheme", choices=("1d", "2d", "2d1d"), default=None,
                   help="default: 1d for CSV, 2d for PGM, 2d1d for BHV1")
    d.add_argument("--scales", type=int, default=3, help="number of scales J")
    d.add_argument("--scales-xy", type=int, default=None, help="spatial scales for 2d1d (default --scales)")
    d.add_argument("--scales-nu", type=int, default=None, help="spectral scales for 2d1d (default --scales)")
    d.add_argument("--alpha", type=float, default=1e-3, help="per-coefficient false positive rate")
    d.add_argument("--method", choices=("cltb", "fab"), default="fab")
    sel = d.add_mutually_exclusive_group()
    sel.add_argument("--universal", action="store_true", help="use z = sqrt(2 ln N_j) per band")
    sel.add_argument("--fdr", type=float, default=None, metavar="Q", help="Benjamini-Hochberg rate")
    d.add_argument("--lambda", dest="known_lambda", type=float, default=None,
                   help="known background intensity per bin")
    d.add_argument("--c", type=float, default=0.0, help="normalisation exponent")
    d.add_argument("--pad", choices=("none", "zero"), default="none",
                   help="zero-pad non-dyadic axes and crop the output back")
    d.set_defaults(func=cmd_denoise)

    p = sub.add_parser("pvalues", help="Haar vs Bi-Haar null tails")
    p.add_argument("--lambda-list", type=_float_list, default=None)
    p.add_argument("--k0-list", type=_int_list, default=None)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_pvalues)

    b = sub.add_parser("bench", help="simulation benchmarks")
    bsub = b.add_subparsers(dest="bench", required=True, parser_class=_Parser)
    n = bsub.add_parser("nmise", help="NMISE of haar, bihaar and tihaar on the smooth test intensity")
    n.add_argument("--peaks", type=_float_list, default=[0.1, 1.0, 10.0, 100.0])
    n.add_argument("--reps", type=int, default=100)
    n.add_argument("--length", type=int, default=1024)
    n.add_argument("--scales", type=int, default=7)
    n.add_argument("--alpha", type=float, default=1e-3)
    n.add_argument("--method", choices=("cltb", "fab"), default="fab")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--oracle", action="store_true", help="score the truth itself (harness check)")
    n.add_argument("--output", default=None)
    n.set_defaults(func=cmd_bench_nmise)
    f = bsub.add_parser("flux", help="source-flux losses of haar and bihaar")
    _add_volume_flags(f, 1e-5)
    f.add_argument("--sigma", type=float, default=4.0)
    f.add_argument("--background", type=float, default=0.05)
    f.set_defaults(func=cmd_bench_flux)
    s = bsub.add_parser("speed", help="wall time of bihaar vs tihaar on the simulated volume")
    _add_volume_flags(s, 1e-5)
    s.add_argument("--repeats", type=int, default=1)
    s.set_defaults(func=cmd_bench_speed)

    m = sub.add_parser("simulate", help="write a simulated intensity or count file")
    m.add_argument("generator", choices=("smooth", "hyperspectral"))
    m.add_argument("--peak", type=float, default=10.0)
    m.add_argument("--length", type=int, default=1024)
    m.add_argument("--dims", type=_dims, default=(129, 129, 64))
    m.add_argument("--sigma", type=float, default=4.0)
    m.add_argument("--background", type=float, default=0.05)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--replicate", type=int, default=0)
    m.add_argument("--intensity", action="store_true", help="write the noise-free intensity")
    m.add_argument("--output", default=None)
    m.add_argument("--meta", default=None, help="JSON file recording generator parameters")
    m.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"bihaar: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DomainError, SizeError, StructureError) as exc:
        print(f"bihaar: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
