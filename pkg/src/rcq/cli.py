"""``rcq`` command line: design, simulate, compare-quantizers, params-size.

Exit codes: 0 success, 2 usage error, 3 input-data error, 4 numerical failure.
Every file written is accompanied by ``<file>.manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import AwgnChannel, discretize_awgn
from .codes import CodeFormatError, expand, load_base_matrix, parse_alist
from .dde import ThresholdNotFound, design, find_threshold
from .decoder import DecoderConfig
from .params import FixedPointFormat, RcqParamSet
from .quantizer import dp_optimal_quantizer, hdq
from .sim import StopRule, code_rate, default_workers, run_sweep, write_csv

log = logging.getLogger("rcq")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_path, subcommand: str, args: argparse.Namespace, inputs: dict, extra: dict | None = None):
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    digests = {}
    for name, p in inputs.items():
        if p is not None and not str(p).startswith("builtin:"):
            digests[name] = {"path": str(p), "sha256": sha256_of(p)}
        elif p is not None:
            digests[name] = {"path": str(p), "sha256": None}
    manifest = {"tool": "rcq", "version": __version__, "subcommand": subcommand, "arguments": resolved,
                "inputs": digests, "seed": resolved.get("seed"), "outputs": [str(out_path)], **(extra or {})}
    Path(f"{out_path}.manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")


def _load_base(path):
    try:
        return load_base_matrix(path)
    except (OSError, CodeFormatError) as exc:
        raise InputError(f"cannot read base matrix {path}: {exc}") from exc


def _load_params(path) -> RcqParamSet:
    try:
        return RcqParamSet.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read parameter file {path}: {exc}") from exc


# ---------------------------------------------------------------------------


def cmd_design(args) -> int:
    if args.mode == "layered" and args.cn_op == "boxplus":
        raise UsageError("layered designs support --cn-op min only")
    if (args.ebno_db is None) == (not args.at_threshold):
        raise UsageError("give exactly one of --ebno-db or --at-threshold")
    base = _load_base(args.base_matrix)
    extra = {}
    ebno = args.ebno_db
    if args.at_threshold:
        ebno = find_threshold(base, args.be, args.bv, args.iters, eps=args.eps, mode=args.mode,
                              cn_op=args.cn_op, max_labels=args.max_labels)
        extra["threshold_ebno_db"] = ebno
        log.info("threshold %.3f dB", ebno)
    params, state = design(base, ebno, args.be, args.bv, args.iters, args.mode, args.cn_op, args.max_labels)
    params.save(args.out)
    extra.update({"design_ebno_db": ebno, "final_mi": state.final_mi().tolist(),
                  "max_norm_error": state.max_norm_error, "max_sym_error": state.max_sym_error})
    write_manifest(args.out, "design", args, {"base_matrix": args.base_matrix}, extra)
    print(f"wrote {args.out}: {params.n_iterations} iterations x {params.n_layers} layers at {ebno:.3f} dB")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if (args.code is None) == (args.base_matrix is None):
        raise UsageError("give exactly one of --code or --base-matrix")
    rcq = args.decoder in ("msrcq", "bprcq")
    if rcq and args.params is None:
        raise UsageError(f"--decoder {args.decoder} needs --params")
    if args.decoder == "oms" and args.offset is None:
        raise UsageError("--decoder oms needs --offset")
    if args.code is not None:
        try:
            code = parse_alist(Path(args.code).read_text())
        except (OSError, CodeFormatError) as exc:
            raise InputError(f"cannot read code {args.code}: {exc}") from exc
        if args.schedule == "layered":
            raise UsageError("layered schedule needs --base-matrix")
        rate = code_rate(code)
    else:
        base = _load_base(args.base_matrix)
        code = expand(base)
        rate = base.design_rate
    rate = args.rate if args.rate is not None else rate
    params = _load_params(args.params) if args.params else None
    if params is not None and args.schedule == "layered" and params.mode == "flooding":
        log.info("reusing the flooding design for every layer")
        params = params.broadcast_layers(code.layers.n_layers)
    fp = None
    if args.frac_bits is not None:
        fp = FixedPointFormat(args.bv, args.frac_bits)
    elif args.decoder == "oms":
        fp = FixedPointFormat(args.bv, max(0, args.bv - 5))
    try:
        cfg = DecoderConfig(args.decoder, args.schedule, args.iters, params, args.offset,
                            fp if not rcq else None)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    stop = StopRule(args.min_errors, args.max_frames)
    results = run_sweep(code, args.ebno_list, cfg, stop, args.seed, rate, args.workers, csv_path=args.out)
    write_csv(results, args.out)
    inputs = {"code": args.code, "base_matrix": args.base_matrix, "params": args.params}
    write_manifest(args.out, "simulate", args, inputs,
                   {"rate": rate, "frame_error": "any nonzero bit of the full codeword or decoder failure",
                    "fixed_point": None if fp is None else [fp.total_bits, fp.frac_bits]})
    for r in results:
        lo, hi = r.fer_ci
        print(f"{r.ebno_db:6.3f} dB  FER {r.fer:.3e} [{lo:.2e}, {hi:.2e}]  "
              f"{r.frame_errors}/{r.frames}  avg iters {r.avg_iterations:.2f}")
    return EXIT_OK


def compare_quantizers(b: int, B: int, clip: float, sigma2_list) -> list[dict]:
    rows = []
    for s2 in sigma2_list:
        d = discretize_awgn(AwgnChannel(float(np.sqrt(s2))), B, clip)
        th_h, q_h = hdq(d.pmf, b)
        th_d, i_dp = dp_optimal_quantizer(d.pmf, b)
        i_h = q_h.mi()
        rows.append({"sigma2": s2, "I_dp": i_dp, "I_hdq": i_h, "delta_I": i_dp - i_h,
                     "hdq_thresholds": [d.boundary(int(x)) for x in th_h.xi],
                     "dp_thresholds": [d.boundary(int(x)) for x in th_d.xi]})
    return rows


def cmd_compare_quantizers(args) -> int:
    rows = compare_quantizers(args.b, args.B, args.range, args.sigma2_list)
    fields = ["sigma2", "I_dp", "I_hdq", "delta_I", "hdq_thresholds", "dp_thresholds"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({**r, "hdq_thresholds": " ".join(f"{t:.6f}" for t in r["hdq_thresholds"]),
                        "dp_thresholds": " ".join(f"{t:.6f}" for t in r["dp_thresholds"])})
    finally:
        if args.out:
            fh.close()
    if args.out:
        write_manifest(args.out, "compare-quantizers", args, {})
    return EXIT_OK


def cmd_params_size(args) -> int:
    p = _load_params(args.params)
    print(f"mode {p.mode}, cn_op {p.cn_op}, b_e {p.b_e}, b_v {p.b_v}")
    print(f"entries: {p.n_iterations} iterations x {p.n_layers} layers = {p.n_entries}")
    print(f"bits per entry: {p.bits_per_entry()}")
    print(f"total bits: {p.total_bits()}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rcq", description="RCQ decoder design and simulation")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="design an RCQ parameter set by density evolution")
    d.add_argument("--base-matrix", required=True, help="base matrix file or builtin:ieee80211n_1296_r12")
    d.add_argument("--mode", choices=["flooding", "layered"], default="flooding")
    d.add_argument("--cn-op", choices=["min", "boxplus"], default="min")
    d.add_argument("--be", type=int, default=4)
    d.add_argument("--bv", type=int, default=10)
    d.add_argument("--iters", type=int, default=50)
    d.add_argument("--ebno-db", type=float)
    d.add_argument("--at-threshold", action="store_true")
    d.add_argument("--eps", type=float, default=1e-4)
    d.add_argument("--max-labels", type=int, default=1024)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="Monte Carlo FER sweep")
    s.add_argument("--code", help="parity-check matrix in alist format")
    s.add_argument("--base-matrix", help="base matrix file or builtin:ieee80211n_1296_r12")
    s.add_argument("--decoder", choices=["msrcq", "bprcq", "bp", "minsum", "oms"], required=True)
    s.add_argument("--schedule", choices=["flooding", "layered"], default="flooding")
    s.add_argument("--params")
    s.add_argument("--offset", type=float)
    s.add_argument("--bv", type=int, default=8, help="fixed-point width for oms/minsum")
    s.add_argument("--frac-bits", type=int, help="fixed-point fraction bits for oms/minsum")
    s.add_argument("--iters", type=int, default=50)
    s.add_argument("--ebno-list", type=float, nargs="+", required=True)
    s.add_argument("--rate", type=float)
    s.add_argument("--min-errors", type=int, default=100)
    s.add_argument("--max-frames", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=default_workers())
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare-quantizers", help="HDQ vs optimal DP quantizer on BI-AWGN")
    c.add_argument("--b", type=int, required=True)
    c.add_argument("--B", type=int, default=2000)
    c.add_argument("--range", type=float, default=2.0)
    c.add_argument("--sigma2-list", type=float, nargs="+", default=[0.5, 0.6, 0.7, 0.8, 0.9])
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare_quantizers)

    p = sub.add_parser("params-size", help="storage cost of a parameter file")
    p.add_argument("--params", required=True)
    p.set_defaults(func=cmd_params_size)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rcq: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"rcq: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ThresholdNotFound, ValueError, FloatingPointError) as exc:
        print(f"rcq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
