"""HDQ vs the DP-optimal quantizer on the discretized BI-AWGN channel.

Prints one CSV row per (b, sigma^2) with both mutual informations and the gap.
"""

import argparse
import csv
import sys

import numpy as np

from rcq.cli import compare_quantizers


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--B", type=int, default=2000)
    ap.add_argument("--clip", type=float, default=2.0)
    ap.add_argument("--bits", type=int, nargs="+", default=[3, 4])
    ap.add_argument("--sigma2", type=float, nargs="+", default=list(np.round(np.arange(0.5, 0.91, 0.1), 2)))
    args = ap.parse_args(argv)
    w = csv.writer(sys.stdout)
    w.writerow(["b", "sigma2", "I_dp", "I_hdq", "delta_I"])
    for b in args.bits:
        for r in compare_quantizers(b, args.B, args.clip, args.sigma2):
            w.writerow([b, r["sigma2"], f"{r['I_dp']:.10f}", f"{r['I_hdq']:.10f}", f"{r['delta_I']:.3e}"])


if __name__ == "__main__":
    main()
