"""Mean posterior magnitude per iteration for BP, Min Sum and msRCQ on shared noise."""

import argparse
import csv
import sys

from rcq.channel import AwgnChannel
from rcq.codes import expand, ieee80211n_1296
from rcq.dde import design
from rcq.decoder import DecoderConfig
from rcq.sim import trace_posterior_magnitude


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ebno", type=float, default=2.6)
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--design-db", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    base = ieee80211n_1296()
    code = expand(base)
    params, _ = design(base, args.design_db, 4, 10, args.iters)
    names = ["bp", "minsum", "msrcq"]
    cfgs = [DecoderConfig("bp", max_iterations=args.iters), DecoderConfig("minsum", max_iterations=args.iters),
            DecoderConfig("msrcq", max_iterations=args.iters, params=params)]
    traces = trace_posterior_magnitude(code, AwgnChannel.from_ebno(args.ebno, 0.5), cfgs, args.frames, args.seed)
    w = csv.writer(sys.stdout)
    w.writerow(["iteration"] + names)
    for t in range(args.iters):
        w.writerow([t + 1] + [f"{tr[t]:.4f}" for tr in traces])


if __name__ == "__main__":
    main()
