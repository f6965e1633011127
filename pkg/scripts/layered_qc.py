"""Layer-specific vs broadcast (flooding-designed) msRCQ(4,8) on the generated 10-layer QC code.

Both decoders run the layered schedule.  Each parameter set is designed at
its own DDE threshold unless design points are given explicitly.
"""

import argparse
import logging
from pathlib import Path

from rcq.codes import expand, make_quasi_regular_qc
from rcq.dde import design, find_threshold
from rcq.decoder import DecoderConfig
from rcq.sim import StopRule, run_sweep

QC10_ARGS = dict(M=10, U=37, S=32, vn_degree=4, seed=7)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ebno", type=float, nargs="+", default=[2.8, 3.1, 3.4])
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--layered-design-db", type=float, default=None)
    ap.add_argument("--flooding-design-db", type=float, default=None)
    ap.add_argument("--min-errors", type=int, default=100)
    ap.add_argument("--max-frames", type=int, default=300_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = make_quasi_regular_qc(**QC10_ARGS)
    code = expand(base)
    d_lay = args.layered_design_db
    if d_lay is None:
        d_lay = find_threshold(base, 4, 8, args.iters, mode="layered", lo=1.5, hi=4.0)
    d_fl = args.flooding_design_db
    if d_fl is None:
        d_fl = find_threshold(base, 4, 8, args.iters, lo=1.5, hi=4.0)
    logging.info("design points: layered %.3f dB, flooding %.3f dB", d_lay, d_fl)
    lay, _ = design(base, d_lay, 4, 8, args.iters, mode="layered")
    flood = design(base, d_fl, 4, 8, args.iters)[0].broadcast_layers(code.layers.n_layers)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    stop = StopRule(args.min_errors, args.max_frames)
    for name, p in (("layer_specific", lay), ("broadcast", flood)):
        run_sweep(code, args.ebno, DecoderConfig("msrcq", "layered", args.iters, p), stop, args.seed,
                  csv_path=args.out_dir / f"qc10_{name}.csv")
    run_sweep(code, args.ebno, DecoderConfig("minsum", "layered", args.iters), stop, args.seed,
              csv_path=args.out_dir / "qc10_minsum.csv")


if __name__ == "__main__":
    main()
