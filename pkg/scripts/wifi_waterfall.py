"""FER waterfall on the 802.11n (1296,648) code: float BP, Min Sum and msRCQ(4, b_v).

The msRCQ parameters are designed by DDE at ``--design-db`` (default: the
DDE threshold found by bisection).  Results go to one CSV per decoder.
"""

import argparse
import logging
from pathlib import Path

from rcq.codes import expand, ieee80211n_1296
from rcq.dde import design, find_threshold
from rcq.decoder import DecoderConfig
from rcq.sim import StopRule, run_sweep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ebno", type=float, nargs="+", default=[1.2, 1.4, 1.6, 1.8, 2.0])
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--bv", type=int, default=10)
    ap.add_argument("--design-db", type=float, default=None)
    ap.add_argument("--min-errors", type=int, default=100)
    ap.add_argument("--max-frames", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out-dir", type=Path, default=Path("results"))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = ieee80211n_1296()
    code = expand(base)
    d = args.design_db
    if d is None:
        d = find_threshold(base, 4, args.bv, args.iters, lo=0.5, hi=3.0)
        logging.info("DDE threshold %.3f dB", d)
    params, _ = design(base, d, 4, args.bv, args.iters)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    stop = StopRule(args.min_errors, args.max_frames)
    for name, cfg in (("bp", DecoderConfig("bp", max_iterations=args.iters)),
                      ("minsum", DecoderConfig("minsum", max_iterations=args.iters)),
                      (f"msrcq_4_{args.bv}", DecoderConfig("msrcq", max_iterations=args.iters, params=params))):
        run_sweep(code, args.ebno, cfg, stop, args.seed, csv_path=args.out_dir / f"wifi_{name}.csv")


if __name__ == "__main__":
    main()
