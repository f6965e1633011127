"""Message-passing decoders: msRCQ / bpRCQ and floating or fixed-point baselines.

RCQ decoders pass ``b_e``-bit labels on the graph.  Labels use a
sign-magnitude layout on the LLR-sorted axis: with ``H = 2**(b_e-1)``, label
``H + j`` is a positive message of magnitude index ``j`` and ``H - 1 - j`` its
negative mirror.  VNs reconstruct labels into fixed-point values, add, and
quantize the extrinsic sums; the msRCQ CN only ever looks at labels.

All fixed-point values are integers carried in float64 (exact at these widths);
floating-point decoders use the same kernels with infinite saturation bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .channel import observation_labels
from .codes import SparseParityCheck
from .params import FixedPointFormat, RcqParamSet

ALGORITHMS = ("msrcq", "bprcq", "bp", "minsum", "oms")
SCHEDULES = ("flooding", "layered")

_BP, _MS = 0, 1
TANH_CAP = 1.0 - 1e-16


# ---------------------------------------------------------------------------
# scalar helpers


@njit(cache=True, inline="always")
def _clamp(x, bound):
    if x > bound:
        return bound
    if x < -bound:
        return -bound
    return x


@njit(cache=True, inline="always")
def _magnitude_index(a, taus, H):
    # 0 for a <= taus[0], j for taus[j-1] < a <= taus[j], H-1 above the last threshold
    mag = 0
    while mag < H - 1 and taus[mag] < a:
        mag += 1
    return mag


@njit(cache=True, inline="always")
def _quantize_label(x, neg_tie, taus, H):
    """Sign-magnitude label of internal value ``x``; ``neg_tie`` decides the sign of 0."""
    neg = x < 0.0 or (x == 0.0 and neg_tie)
    mag = _magnitude_index(abs(x), taus, H)
    return H - 1 - mag if neg else H + mag


@njit(cache=True, inline="always")
def _reconstruct(label, rec, H):
    if label >= H:
        return rec[label - H]
    return -rec[H - 1 - label]


@njit(cache=True, inline="always")
def _boxplus(a, b):
    s = 1.0 if (a >= 0.0) == (b >= 0.0) else -1.0
    return (s * min(abs(a), abs(b)) + math.log1p(math.exp(-abs(a + b)))
            - math.log1p(math.exp(-abs(a - b))))


@njit(cache=True)
def vn_subtract(post, old, bound):
    """Remove a stored CN contribution from a posterior (layered update, first half)."""
    return _clamp(post - old, bound)


@njit(cache=True)
def vn_add(ext, new, bound):
    """Add a fresh CN contribution back into the posterior (layered update, second half)."""
    return _clamp(ext + new, bound)


# ---------------------------------------------------------------------------
# check-node rules


@njit(cache=True)
def cn_min_row(v2c, c2v, start, stop, H):
    """Label-domain min on edges ``start:stop``: XOR of sign bits, index-min of magnitudes."""
    parity = False
    m1 = H
    m2 = H
    arg = -1
    for e in range(start, stop):
        lab = v2c[e]
        neg = lab < H
        mag = H - 1 - lab if neg else lab - H
        parity ^= neg
        if mag < m1:
            m2 = m1
            m1 = mag
            arg = e
        elif mag < m2:
            m2 = mag
    for e in range(start, stop):
        neg = parity ^ (v2c[e] < H)
        mag = m2 if e == arg else m1
        c2v[e] = H - 1 - mag if neg else H + mag


@njit(cache=True)
def cn_min_labels(row_ptr, v2c, c2v, H):
    for c in range(row_ptr.shape[0] - 1):
        cn_min_row(v2c, c2v, row_ptr[c], row_ptr[c + 1], H)


@njit(cache=True)
def _row_boxplus(vals, out, d):
    """Extrinsic boxplus of ``vals[:d]`` into ``out[:d]`` by forward/backward passes."""
    if d == 1:
        out[0] = 0.0
        return
    fw = np.empty(d)
    bw = np.empty(d)
    fw[0] = vals[0]
    for k in range(1, d):
        fw[k] = _boxplus(fw[k - 1], vals[k])
    bw[d - 1] = vals[d - 1]
    for k in range(d - 2, -1, -1):
        bw[k] = _boxplus(bw[k + 1], vals[k])
    out[0] = bw[1]
    out[d - 1] = fw[d - 2]
    for k in range(1, d - 1):
        out[k] = _boxplus(fw[k - 1], bw[k + 1])


@njit(cache=True)
def cn_boxplus_labels(row_ptr, v2c, c2v, vn_rec, cn_taus, H):
    """bpRCQ CN: reconstruct labels, exact boxplus, quantize back to labels."""
    dmax = 0
    for c in range(row_ptr.shape[0] - 1):
        dmax = max(dmax, row_ptr[c + 1] - row_ptr[c])
    vals = np.empty(dmax)
    out = np.empty(dmax)
    for c in range(row_ptr.shape[0] - 1):
        s = row_ptr[c]
        d = row_ptr[c + 1] - s
        parity = False
        for k in range(d):
            lab = v2c[s + k]
            parity ^= lab < H
            vals[k] = abs(_reconstruct(lab, vn_rec, H))
        _row_boxplus(vals, out, d)
        for k in range(d):
            neg = parity ^ (v2c[s + k] < H)
            mag = _magnitude_index(out[k], cn_taus, H)
            c2v[s + k] = H - 1 - mag if neg else H + mag


@njit(cache=True)
def _row_tanh_rule(vals, out, d):
    """Extrinsic CN update ``2 atanh(prod tanh(x/2))`` with forward/backward products."""
    t = np.empty(d)
    for k in range(d):
        t[k] = math.tanh(0.5 * vals[k])
    acc = 1.0
    for k in range(d):
        out[k] = acc
        acc *= t[k]
    acc = 1.0
    for k in range(d - 1, -1, -1):
        p = out[k] * acc
        # keep atanh finite; caps messages near 37 nats
        p = min(max(p, -TANH_CAP), TANH_CAP)
        out[k] = 2.0 * math.atanh(p)
        acc *= t[k]


@njit(cache=True)
def _cn_float_row(vals, negs, out, d, rule, offset):
    if rule == _BP:
        _row_tanh_rule(vals, out, d)
        return
    parity = False
    m1 = np.inf
    m2 = np.inf
    arg = -1
    for k in range(d):
        parity ^= negs[k]
        a = abs(vals[k])
        if a < m1:
            m2 = m1
            m1 = a
            arg = k
        elif a < m2:
            m2 = a
    for k in range(d):
        mag = m2 if k == arg else m1
        mag = max(mag - offset, 0.0)
        out[k] = -mag if parity ^ negs[k] else mag


# ---------------------------------------------------------------------------
# frame bookkeeping


@njit(cache=True)
def _syndrome_ok(row_ptr, edge_col, hard):
    for c in range(row_ptr.shape[0] - 1):
        p = 0
        for e in range(row_ptr[c], row_ptr[c + 1]):
            p ^= hard[edge_col[e]]
        if p:
            return False
    return True


@njit(cache=True)
def _hard_and_trace(post, chneg, hard, scale):
    acc = 0.0
    for v in range(post.shape[0]):
        x = post[v]
        hard[v] = 1 if (x < 0.0 or (x == 0.0 and chneg[v])) else 0
        acc += abs(x)
    return acc / post.shape[0] / scale


# ---------------------------------------------------------------------------
# flooding kernels


@njit(cache=True)
def _flood_rcq(row_ptr, edge_col, col_ptr, col_edges, ch, chneg, vn_taus, cn_rec, bp, vn_rec, cn_taus,
               ext_max, post_max, max_iter, early_exit, out_hard, trace, scale):
    n = ch.shape[0]
    E = edge_col.shape[0]
    T = cn_rec.shape[0]
    H = cn_rec.shape[1]
    v2c = np.empty(E, dtype=np.int64)
    c2v = np.empty(E, dtype=np.int64)
    c2v_val = np.zeros(E)
    post = np.empty(n)
    hard = np.zeros(n, dtype=np.int8)
    found = False
    iters = max_iter
    for it in range(max_iter):
        ti = min(it, T - 1)
        for v in range(n):
            tot = ch[v]
            for k in range(col_ptr[v], col_ptr[v + 1]):
                tot += c2v_val[col_edges[k]]
            for k in range(col_ptr[v], col_ptr[v + 1]):
                e = col_edges[k]
                x = _clamp(tot - c2v_val[e], ext_max)
                v2c[e] = _quantize_label(x, chneg[v], vn_taus[ti], H)
        if bp:
            cn_boxplus_labels(row_ptr, v2c, c2v, vn_rec[ti], cn_taus[ti], H)
        else:
            cn_min_labels(row_ptr, v2c, c2v, H)
        for e in range(E):
            c2v_val[e] = _reconstruct(c2v[e], cn_rec[ti], H)
        for v in range(n):
            tot = ch[v]
            for k in range(col_ptr[v], col_ptr[v + 1]):
                tot += c2v_val[col_edges[k]]
            post[v] = _clamp(tot, post_max)
        trace[it] = _hard_and_trace(post, chneg, hard, scale)
        if not found and _syndrome_ok(row_ptr, edge_col, hard):
            found = True
            iters = it + 1
            out_hard[:] = hard
            if early_exit:
                break
    if not found:
        out_hard[:] = hard
    return found, iters


@njit(cache=True)
def _flood_float(row_ptr, edge_col, col_ptr, col_edges, ch, chneg, rule, offset,
                 ext_max, post_max, max_iter, early_exit, out_hard, trace, scale):
    n = ch.shape[0]
    E = edge_col.shape[0]
    v2c = np.empty(E)
    v2c_neg = np.zeros(E, dtype=np.bool_)
    c2v = np.zeros(E)
    post = np.empty(n)
    hard = np.zeros(n, dtype=np.int8)
    dmax = 0
    for c in range(row_ptr.shape[0] - 1):
        dmax = max(dmax, row_ptr[c + 1] - row_ptr[c])
    vals = np.empty(dmax)
    negs = np.empty(dmax, dtype=np.bool_)
    out = np.empty(dmax)
    found = False
    iters = max_iter
    for it in range(max_iter):
        for v in range(n):
            tot = ch[v]
            for k in range(col_ptr[v], col_ptr[v + 1]):
                tot += c2v[col_edges[k]]
            for k in range(col_ptr[v], col_ptr[v + 1]):
                e = col_edges[k]
                x = _clamp(tot - c2v[e], ext_max)
                v2c[e] = x
                v2c_neg[e] = x < 0.0 or (x == 0.0 and chneg[v])
        for c in range(row_ptr.shape[0] - 1):
            s = row_ptr[c]
            d = row_ptr[c + 1] - s
            for k in range(d):
                vals[k] = v2c[s + k]
                negs[k] = v2c_neg[s + k]
            _cn_float_row(vals, negs, out, d, rule, offset)
            for k in range(d):
                c2v[s + k] = out[k]
        for v in range(n):
            tot = ch[v]
            for k in range(col_ptr[v], col_ptr[v + 1]):
                tot += c2v[col_edges[k]]
            post[v] = _clamp(tot, post_max)
        trace[it] = _hard_and_trace(post, chneg, hard, scale)
        if not found and _syndrome_ok(row_ptr, edge_col, hard):
            found = True
            iters = it + 1
            out_hard[:] = hard
            if early_exit:
                break
    if not found:
        out_hard[:] = hard
    return found, iters


# ---------------------------------------------------------------------------
# layered kernels


@njit(cache=True)
def _layer_rcq(layer_ptr, layer_rows, row_ptr, edge_col, ch, chneg, vn_taus, cn_rec,
               ext_max, post_max, max_iter, early_exit, out_hard, trace, scale):
    n = ch.shape[0]
    E = edge_col.shape[0]
    T = cn_rec.shape[0]
    L = cn_rec.shape[1]
    H = cn_rec.shape[2]
    label = np.full(E, -1, dtype=np.int64)  # -1: no message yet
    epoch = np.zeros(E, dtype=np.int64)  # design iteration the stored label was made with
    ext = np.empty(E)
    v2c = np.empty(E, dtype=np.int64)
    c2v = np.empty(E, dtype=np.int64)
    post = ch.copy()
    hard = np.zeros(n, dtype=np.int8)
    found = False
    iters = max_iter
    for it in range(max_iter):
        ti = min(it, T - 1)
        for r in range(L):
            for q in range(layer_ptr[r], layer_ptr[r + 1]):
                c = layer_rows[q]
                for e in range(row_ptr[c], row_ptr[c + 1]):
                    v = edge_col[e]
                    old = 0.0
                    if label[e] >= 0:
                        old = _reconstruct(label[e], cn_rec[epoch[e], r], H)
                    x = vn_subtract(post[v], old, post_max)
                    ext[e] = x
                    v2c[e] = _quantize_label(_clamp(x, ext_max), chneg[v], vn_taus[ti, r], H)
                cn_min_row(v2c, c2v, row_ptr[c], row_ptr[c + 1], H)
                for e in range(row_ptr[c], row_ptr[c + 1]):
                    v = edge_col[e]
                    label[e] = c2v[e]
                    epoch[e] = ti
                    post[v] = vn_add(ext[e], _reconstruct(c2v[e], cn_rec[ti, r], H), post_max)
        trace[it] = _hard_and_trace(post, chneg, hard, scale)
        if not found and _syndrome_ok(row_ptr, edge_col, hard):
            found = True
            iters = it + 1
            out_hard[:] = hard
            if early_exit:
                break
    if not found:
        out_hard[:] = hard
    return found, iters


@njit(cache=True)
def _layer_float(layer_ptr, layer_rows, row_ptr, edge_col, ch, chneg, rule, offset,
                 ext_max, post_max, max_iter, early_exit, out_hard, trace, scale):
    n = ch.shape[0]
    E = edge_col.shape[0]
    L = layer_ptr.shape[0] - 1
    c2v = np.zeros(E)
    post = ch.copy()
    hard = np.zeros(n, dtype=np.int8)
    dmax = 0
    for c in range(row_ptr.shape[0] - 1):
        dmax = max(dmax, row_ptr[c + 1] - row_ptr[c])
    vals = np.empty(dmax)
    negs = np.empty(dmax, dtype=np.bool_)
    out = np.empty(dmax)
    xs = np.empty(dmax)
    found = False
    iters = max_iter
    for it in range(max_iter):
        for r in range(L):
            for q in range(layer_ptr[r], layer_ptr[r + 1]):
                c = layer_rows[q]
                s = row_ptr[c]
                d = row_ptr[c + 1] - s
                for k in range(d):
                    v = edge_col[s + k]
                    x = vn_subtract(post[v], c2v[s + k], post_max)
                    xs[k] = x
                    vals[k] = _clamp(x, ext_max)
                    negs[k] = x < 0.0 or (x == 0.0 and chneg[v])
                _cn_float_row(vals, negs, out, d, rule, offset)
                for k in range(d):
                    v = edge_col[s + k]
                    c2v[s + k] = out[k]
                    post[v] = vn_add(xs[k], out[k], post_max)
        trace[it] = _hard_and_trace(post, chneg, hard, scale)
        if not found and _syndrome_ok(row_ptr, edge_col, hard):
            found = True
            iters = it + 1
            out_hard[:] = hard
            if early_exit:
                break
    if not found:
        out_hard[:] = hard
    return found, iters


# ---------------------------------------------------------------------------
# configuration and driver


@dataclass(frozen=True)
class DecoderConfig:
    algorithm: str
    schedule: str = "flooding"
    max_iterations: int = 50
    params: Optional[RcqParamSet] = None
    offset: Optional[float] = None
    fixed_point: Optional[FixedPointFormat] = None
    early_exit: bool = True
    b_e: Optional[int] = None  # if given, must match params
    b_v: Optional[int] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.is_rcq:
            p = self.params
            if p is None:
                raise ValueError(f"{self.algorithm} needs a parameter set")
            if (self.b_e is not None and self.b_e != p.b_e) or (self.b_v is not None and self.b_v != p.b_v):
                raise ValueError("bit widths in config do not match the parameter set")
            want = "min" if self.algorithm == "msrcq" else "boxplus"
            if p.cn_op != want:
                raise ValueError(f"{self.algorithm} needs a {want!r} design, got {p.cn_op!r}")
            if self.schedule == "layered" and self.algorithm != "msrcq":
                raise ValueError("layered decoding is supported for msRCQ only")
            if self.schedule == "layered" and p.mode != "layered":
                raise ValueError("layered schedule needs a layered parameter set (see broadcast_layers)")
            if self.schedule == "flooding" and p.mode != "flooding":
                raise ValueError("flooding schedule needs a flooding parameter set")
        if self.algorithm == "oms":
            if self.offset is None or self.offset < 0:
                raise ValueError("offset Min Sum needs a non-negative offset")
            if self.fixed_point is None:
                raise ValueError("offset Min Sum runs in fixed point; give fixed_point")

    @property
    def is_rcq(self) -> bool:
        return self.algorithm in ("msrcq", "bprcq")


@dataclass
class DecodeOutcome:
    success: bool
    iterations_used: int
    hard_decision: np.ndarray
    posterior_trace: Optional[np.ndarray] = None


class Decoder:
    """Reusable single-threaded decoder for one code and configuration.

    ``sigma`` is the noise level used to form channel LLRs for the baseline
    decoders; RCQ decoders map observations through their designed channel
    levels and ignore it.
    """

    def __init__(self, code: SparseParityCheck, cfg: DecoderConfig, sigma: Optional[float] = None):
        self.code, self.cfg, self.sigma = code, cfg, sigma
        self.row_ptr, self.edge_col, self.col_ptr, self.col_edges = code.edge_arrays()
        if cfg.schedule == "layered":
            if code.layers is None:
                raise ValueError("layered schedule needs a code with a layer partition")
            lp = code.layers
            rows = [np.asarray(lp.rows_of_layer(r)) for r in range(lp.n_layers)]
            self.layer_ptr = np.concatenate([[0], np.cumsum([len(r) for r in rows])]).astype(np.int64)
            self.layer_rows = np.concatenate(rows).astype(np.int64)
        if cfg.is_rcq:
            p = cfg.params
            fp = p.fixed_point
            if cfg.schedule == "layered" and p.n_layers != code.layers.n_layers:
                raise ValueError(f"parameter set has {p.n_layers} layers, code has {code.layers.n_layers}")
            self._ch_table = p.channel_fixed().astype(np.float64)
            self._scale = fp.scale
            self._ext_max, self._post_max = float(fp.ext_max), float(fp.post_max)
            self._vn_taus = p.vn_thresholds_fixed().astype(np.float64)
            self._cn_rec = p.cn_reconstruction_fixed().astype(np.float64)
            if cfg.algorithm == "bprcq":
                self._vn_rec = p.vn_reconstruction_real()[:, 0, :]
                self._cn_taus = p.cn_thresholds_real()[:, 0, :]
            else:
                H = 2 ** (p.b_e - 1)
                self._vn_rec = np.ones((1, H))
                self._cn_taus = np.ones((1, H - 1))
        else:
            fp = cfg.fixed_point
            if fp is None:
                self._scale, self._ext_max, self._post_max = 1.0, np.inf, np.inf
            else:
                self._scale, self._ext_max, self._post_max = fp.scale, float(fp.ext_max), float(fp.post_max)
            off = cfg.offset or 0.0
            self._offset = float(np.rint(off * fp.scale)) if fp is not None else float(off)
            self._rule = _BP if cfg.algorithm == "bp" else _MS

    # -- inputs -------------------------------------------------------------

    def channel_labels(self, y) -> np.ndarray:
        p = self.cfg.params
        return observation_labels(y, 2**p.b_v, p.clip)

    def channel_llr(self, y) -> np.ndarray:
        if self.sigma is None:
            raise ValueError("baseline decoders need sigma to form channel LLRs")
        return 2.0 * np.asarray(y, dtype=np.float64) / self.sigma**2

    def decode(self, y) -> DecodeOutcome:
        """Decode raw channel observations."""
        if self.cfg.is_rcq:
            return self.decode_labels(self.channel_labels(y))
        y = np.asarray(y, dtype=np.float64)
        return self.decode_llr(self.channel_llr(y), chneg=y < 0)

    def decode_labels(self, labels) -> DecodeOutcome:
        """Decode channel cell labels (RCQ decoders)."""
        if not self.cfg.is_rcq:
            raise ValueError("channel labels feed RCQ decoders only")
        labels = np.asarray(labels, dtype=np.int64)
        K = len(self._ch_table)
        if labels.shape != (self.code.n,) or labels.min() < 0 or labels.max() >= K:
            raise ValueError("channel labels out of range or wrong length")
        ch = self._ch_table[labels]
        chneg = labels < K // 2
        return self._run(ch, chneg)

    def decode_llr(self, llr, chneg=None) -> DecodeOutcome:
        """Decode channel LLRs (baseline decoders); fixed-point formats round and saturate them."""
        if self.cfg.is_rcq:
            raise ValueError("RCQ decoders take channel labels")
        llr = np.asarray(llr, dtype=np.float64)
        if chneg is None:
            chneg = llr < 0
        fp = self.cfg.fixed_point
        ch = llr if fp is None else fp.to_fixed(llr).astype(np.float64)
        return self._run(ch, np.asarray(chneg, dtype=np.bool_))

    # -- kernels --------------------------------------------------------------

    def _run(self, ch, chneg) -> DecodeOutcome:
        cfg = self.cfg
        hard = np.zeros(self.code.n, dtype=np.int8)
        trace = np.zeros(cfg.max_iterations)
        if cfg.is_rcq and cfg.schedule == "flooding":
            ok, it = _flood_rcq(self.row_ptr, self.edge_col, self.col_ptr, self.col_edges, ch, chneg,
                                self._vn_taus[:, 0, :], self._cn_rec[:, 0, :], cfg.algorithm == "bprcq",
                                self._vn_rec, self._cn_taus, self._ext_max, self._post_max,
                                cfg.max_iterations, cfg.early_exit, hard, trace, self._scale)
        elif cfg.is_rcq:
            ok, it = _layer_rcq(self.layer_ptr, self.layer_rows, self.row_ptr, self.edge_col, ch, chneg,
                                self._vn_taus, self._cn_rec, self._ext_max, self._post_max,
                                cfg.max_iterations, cfg.early_exit, hard, trace, self._scale)
        elif cfg.schedule == "flooding":
            ok, it = _flood_float(self.row_ptr, self.edge_col, self.col_ptr, self.col_edges, ch, chneg,
                                  self._rule, self._offset, self._ext_max, self._post_max,
                                  cfg.max_iterations, cfg.early_exit, hard, trace, self._scale)
        else:
            ok, it = _layer_float(self.layer_ptr, self.layer_rows, self.row_ptr, self.edge_col, ch, chneg,
                                  self._rule, self._offset, self._ext_max, self._post_max,
                                  cfg.max_iterations, cfg.early_exit, hard, trace, self._scale)
        used = it if cfg.early_exit else cfg.max_iterations
        ran = it if (cfg.early_exit and ok) else cfg.max_iterations
        return DecodeOutcome(bool(ok), int(used), hard, trace[:ran].copy())


def make_decoder(code: SparseParityCheck, cfg: DecoderConfig, sigma: Optional[float] = None) -> Decoder:
    return Decoder(code, cfg, sigma)


def _check(cfg: DecoderConfig, algorithm, schedule):
    if cfg.algorithm not in algorithm or cfg.schedule != schedule:
        raise ValueError(f"config is {cfg.algorithm}/{cfg.schedule}")


def decode_msrcq_flooding(code: SparseParityCheck, llr_words, cfg: DecoderConfig) -> DecodeOutcome:
    _check(cfg, ("msrcq",), "flooding")
    return Decoder(code, cfg).decode_labels(llr_words)


def decode_msrcq_layered(code: SparseParityCheck, llr_words, cfg: DecoderConfig) -> DecodeOutcome:
    _check(cfg, ("msrcq",), "layered")
    return Decoder(code, cfg).decode_labels(llr_words)


def decode_bprcq_flooding(code: SparseParityCheck, llr_words, cfg: DecoderConfig) -> DecodeOutcome:
    _check(cfg, ("bprcq",), "flooding")
    return Decoder(code, cfg).decode_labels(llr_words)


def decode_baseline(code: SparseParityCheck, llrs, cfg: DecoderConfig) -> DecodeOutcome:
    if cfg.is_rcq:
        raise ValueError("decode_baseline runs bp, minsum or oms")
    return Decoder(code, cfg).decode_llr(llrs)
