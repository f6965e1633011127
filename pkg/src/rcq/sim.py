"""Monte Carlo FER/BER estimation over BPSK/AWGN with the all-zero codeword.

Each frame draws its noise from its own stream, seeded by ``(base_seed, frame
index)``, so results do not depend on how frames are spread over workers and
different decoders can be compared on identical noise.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import beta

from .channel import AwgnChannel
from .codes import SparseParityCheck
from .decoder import DecoderConfig, make_decoder

log = logging.getLogger(__name__)

CSV_COLUMNS = ("ebno_db", "frames", "frame_errors", "fer", "fer_ci_lo", "fer_ci_hi", "ber", "avg_iters", "seconds")
WORKERS_ENV = "RCQ_WORKERS"


@dataclass(frozen=True)
class StopRule:
    min_errors: int = 100
    max_frames: int = 1_000_000

    def __post_init__(self):
        if self.min_errors < 1:
            raise ValueError("min_errors must be >= 1")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval for ``k`` successes in ``n`` trials."""
    if n == 0:
        return 0.0, 1.0
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass
class FerRunResult:
    ebno_db: float
    frames: int
    frame_errors: int
    bit_errors: int
    n: int
    avg_iterations: float
    wall_time: float
    seed: int
    posterior_trace: Optional[np.ndarray] = None

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.n) if self.frames else 0.0

    @property
    def fer_ci(self) -> tuple[float, float]:
        return clopper_pearson(self.frame_errors, self.frames)

    def csv_row(self) -> dict:
        lo, hi = self.fer_ci
        return {"ebno_db": self.ebno_db, "frames": self.frames, "frame_errors": self.frame_errors,
                "fer": self.fer, "fer_ci_lo": lo, "fer_ci_hi": hi, "ber": self.ber,
                "avg_iters": self.avg_iterations, "seconds": self.wall_time}


def frame_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([base_seed, index])


def default_workers() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _frame(decoder, chan: AwgnChannel, n: int, base_seed: int, index: int, want_trace: bool):
    y = chan.observe(n, frame_rng(base_seed, index))
    out = decoder.decode(y)
    bit_errors = int(np.count_nonzero(out.hard_decision))
    error = (not out.success) or bit_errors > 0
    trace = out.posterior_trace if want_trace else None
    return error, bit_errors, out.iterations_used, trace


# worker-process state for parallel runs
_W: dict = {}


def _init_worker(code, cfg, sigma):
    _W["decoder"] = make_decoder(code, cfg, sigma)
    _W["chan"] = AwgnChannel(sigma)
    _W["n"] = code.n


def _chunk(base_seed: int, start: int, stop: int):
    return [_frame(_W["decoder"], _W["chan"], _W["n"], base_seed, i, False) for i in range(start, stop)]


def _as_decoder(code, cfg, chan):
    return make_decoder(code, cfg, chan.sigma) if isinstance(cfg, DecoderConfig) else cfg


def run_fer_point(code: SparseParityCheck, chan: AwgnChannel, cfg, stop: StopRule = StopRule(),
                  base_seed: int = 0, ebno_db: float = float("nan"), workers: Optional[int] = None,
                  want_trace: bool = False, chunk: int = 200) -> FerRunResult:
    """Simulate frames until ``stop.min_errors`` frame errors or ``stop.max_frames`` frames.

    ``cfg`` is a ``DecoderConfig`` or any object with ``decode(y)``.  The run
    stops at the exact frame that reaches the error target, so statistics are
    identical for any worker count.
    """
    workers = default_workers() if workers is None else workers
    t0 = time.perf_counter()
    frames = errors = bits = iters = 0
    traces = []

    def absorb(res) -> bool:
        nonlocal frames, errors, bits, iters
        err, be, it, tr = res
        frames += 1
        errors += err
        bits += be
        iters += it
        if tr is not None:
            traces.append(tr)
        return errors >= stop.min_errors or frames >= stop.max_frames

    if workers <= 1 or not isinstance(cfg, DecoderConfig) or want_trace:
        dec = _as_decoder(code, cfg, chan)
        for i in range(stop.max_frames):
            if absorb(_frame(dec, chan, code.n, base_seed, i, want_trace)):
                break
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(code, cfg, chan.sigma)) as ex:
            nxt = 0
            pending = []
            done = False
            while not done:
                while len(pending) < 2 * workers and nxt < stop.max_frames:
                    hi = min(nxt + chunk, stop.max_frames)
                    pending.append(ex.submit(_chunk, base_seed, nxt, hi))
                    nxt = hi
                if not pending:
                    break
                for res in pending.pop(0).result():
                    if absorb(res):
                        done = True
                        break
            for f in pending:
                f.cancel()
    trace = None
    if traces and len({len(t) for t in traces}) == 1:
        trace = np.mean(traces, axis=0)
    return FerRunResult(ebno_db, frames, errors, bits, code.n, iters / max(frames, 1),
                        time.perf_counter() - t0, base_seed, trace)


def run_sweep(code: SparseParityCheck, ebno_list: Sequence[float], cfg, stop: StopRule = StopRule(),
              base_seed: int = 0, rate: Optional[float] = None, workers: Optional[int] = None,
              csv_path=None) -> list[FerRunResult]:
    """One ``run_fer_point`` per Eb/N0, all with the same base seed."""
    rate = code_rate(code) if rate is None else rate
    out = []
    for e in ebno_list:
        r = run_fer_point(code, AwgnChannel.from_ebno(e, rate), cfg, stop, base_seed, e, workers)
        log.info("%.3f dB: %d/%d frame errors (FER %.3g), %.2f iters", e, r.frame_errors, r.frames,
                 r.fer, r.avg_iterations)
        out.append(r)
        if csv_path is not None:
            write_csv(out, csv_path)
    return out


def write_csv(results: Sequence[FerRunResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in results:
            w.writerow(r.csv_row())


def code_rate(code: SparseParityCheck) -> float:
    return 1.0 - code.m / code.n


def trace_posterior_magnitude(code: SparseParityCheck, chan: AwgnChannel, cfg_list: Sequence[DecoderConfig],
                              n_frames: int, base_seed: int = 0) -> list[np.ndarray]:
    """Mean |posterior| per iteration for each decoder, on shared noise, without early exit."""
    decoders = [make_decoder(code, dataclasses.replace(c, early_exit=False), chan.sigma) for c in cfg_list]
    sums = [np.zeros(c.max_iterations) for c in cfg_list]
    for i in range(n_frames):
        y = chan.observe(code.n, frame_rng(base_seed, i))
        for s, d in zip(sums, decoders):
            s += d.decode(y).posterior_trace
    return [s / n_frames for s in sums]
