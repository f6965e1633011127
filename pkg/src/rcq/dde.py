"""Discrete density evolution for RCQ decoder design.

Joint PMFs ``P(X, D)`` of a code bit and a message label are pushed through
VN and CN updates.  VN updates multiply PMFs (LLR addition) and re-cluster the
product alphabet; VN messages are quantized with symmetric HDQ; CN updates use
either the label-domain min (msRCQ) or exact boxplus (bpRCQ).  The per-iteration
(and per-layer) thresholds and reconstructions form an ``RcqParamSet``.

All PMFs that flow between updates are kept in a canonical symmetric form:
labels sorted by LLR, equal LLRs merged, and the lower half rebuilt as the
mirror image of the upper half.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .channel import AwgnChannel, ChannelLlrAlphabet, ebno_to_sigma, uniform_llr_quantizer, DEFAULT_CLIP
from .codes import QcBaseMatrix
from .params import FixedPointFormat, RcqParamSet, RcqStage
from .quantizer import (
    DegeneratePmfError,
    JointLabelPmf,
    hdq,
    label_from_sign_magnitude,
    label_sign_magnitude,
    reconstruction_from_pmf,
    thresholds_to_llr,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_LABELS = 1024
LLR_MERGE_TOL = 1e-10
# once every layer carries this much information the design is frozen
MI_SATURATION = 1.0 - 1e-9
# a VN mixture too concentrated to quantize counts as converged above this MI
DEGENERATE_MI = 1.0 - 1e-6


class ThresholdNotFound(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# PMF operators


def boxdot(p1: JointLabelPmf, p2: JointLabelPmf) -> JointLabelPmf:
    """VN combining: ``P(x, (d1, d2)) = P1(x, d1) P2(x, d2) / P_X(x)``, label ``d1 * K2 + d2``."""
    a, b = p1.joint, p2.joint
    px = a.sum(axis=1)
    out = (a[:, :, None] * b[:, None, :]).reshape(2, -1) / px[:, None]
    return JointLabelPmf(out / out.sum())


def boxplus_pmf(p1: JointLabelPmf, p2: JointLabelPmf) -> JointLabelPmf:
    """Exact CN combining over product labels: ``x = x1 xor x2``."""
    a, b = p1.joint, p2.joint
    same = a[0][:, None] * b[0][None, :] + a[1][:, None] * b[1][None, :]
    diff = a[0][:, None] * b[1][None, :] + a[1][:, None] * b[0][None, :]
    out = np.vstack([same.ravel(), diff.ravel()])
    return JointLabelPmf(out / out.sum())


@dataclass(frozen=True)
class MsLabelTable:
    """``table[d1, d2]``: label carrying the sign product and the smaller magnitude."""

    table: np.ndarray

    @property
    def n_labels(self) -> int:
        return self.table.shape[0]


def ms_label_table(p_v: JointLabelPmf) -> MsLabelTable:
    """Label-domain min table for a symmetric sign-magnitude alphabet.

    Labels are ranked by LLR; rank ``< K/2`` is a negative sign and the
    magnitude index counts outwards from the centre, so the table depends on
    the LLR ordering only, never on LLR values.
    """
    K = p_v.n_labels
    if K % 2:
        raise ValueError("min table needs an even label count")
    order = p_v.sort_order()
    rank = np.empty(K, dtype=np.int64)
    rank[order] = np.arange(K)
    b_e = int(round(math.log2(K)))
    if 2**b_e != K:
        raise ValueError("label count must be a power of two")
    neg, mag = label_sign_magnitude(rank, b_e)
    out_neg = neg[:, None] ^ neg[None, :]
    out_mag = np.minimum(mag[:, None], mag[None, :])
    out_rank = label_from_sign_magnitude(out_neg, out_mag, b_e)
    return MsLabelTable(order[out_rank])


def circledast(p1: JointLabelPmf, p2: JointLabelPmf, table: MsLabelTable) -> JointLabelPmf:
    """CN min combining in the label domain over a shared alphabet."""
    a, b = p1.joint, p2.joint
    K = table.n_labels
    if a.shape[1] != K or b.shape[1] != K:
        raise ValueError("PMFs and table disagree on the alphabet size")
    same = a[0][:, None] * b[0][None, :] + a[1][:, None] * b[1][None, :]
    diff = a[0][:, None] * b[1][None, :] + a[1][:, None] * b[0][None, :]
    idx = table.table.ravel()
    out = np.vstack([np.bincount(idx, weights=same.ravel(), minlength=K),
                     np.bincount(idx, weights=diff.ravel(), minlength=K)])
    return JointLabelPmf(out)


def zero_information_pmf() -> JointLabelPmf:
    return JointLabelPmf(np.full((2, 2), 0.25))


# ---------------------------------------------------------------------------
# canonical symmetric form and clustering


def _sorted_merged(pmf: JointLabelPmf) -> tuple[np.ndarray, np.ndarray]:
    """Drop empty labels, sort by LLR and merge runs of equal LLR; returns (joint, llr)."""
    J = pmf.joint[:, pmf.mass > 0]
    llr = np.log(np.maximum(J[0], 1e-300)) - np.log(np.maximum(J[1], 1e-300))
    order = np.argsort(llr, kind="stable")
    J, llr = J[:, order], llr[order]
    new = np.concatenate([[True], np.diff(llr) > LLR_MERGE_TOL * (1.0 + np.abs(llr[1:]))])
    starts = np.flatnonzero(new)
    J = np.add.reduceat(J, starts, axis=1)
    return J, np.log(np.maximum(J[0], 1e-300)) - np.log(np.maximum(J[1], 1e-300))


def mirror_error(joint: np.ndarray) -> float:
    """max |P(0, d) - P(1, K-1-d)| of a sorted joint table."""
    return float(np.max(np.abs(joint[0] - joint[1, ::-1])))


def canonical_symmetric(pmf: JointLabelPmf) -> tuple[JointLabelPmf, float]:
    """Exactly symmetric, LLR-sorted form of an (almost) symmetric PMF.

    Returns the canonical PMF and the mirror error of the input after sorting,
    so callers can tell genuine asymmetry from rounding.
    """
    J, llr = _sorted_merged(pmf)
    err = mirror_error(J / J.sum())
    tol = LLR_MERGE_TOL
    pos = J[:, llr > tol]
    zero = J[:, np.abs(llr) <= tol].sum()
    upper = pos
    if zero > 0:
        upper = np.hstack([np.full((2, 1), zero / 4.0), pos])
    full = np.hstack([upper[::-1, ::-1], upper])
    return JointLabelPmf(full / full.sum()), err


def symmetrize_fixed(pmf: JointLabelPmf) -> JointLabelPmf:
    """Average a PMF on a fixed sorted alphabet with its mirror image."""
    J = pmf.joint
    S = 0.5 * (J + J[::-1, ::-1])
    return JointLabelPmf(S / S.sum())


@njit(cache=True)
def _neg_cond_entropy(a, b):
    m = a + b
    r = 0.0
    if a > 0.0:
        r += a * math.log(a / m)
    if b > 0.0:
        r += b * math.log(b / m)
    return r


@njit(cache=True)
def _merge_loss(a0, a1, b0, b1):
    return _neg_cond_entropy(a0, a1) + _neg_cond_entropy(b0, b1) - _neg_cond_entropy(a0 + b0, a1 + b1)


@njit(cache=True)
def _greedy_adjacent_merge(p0, p1, target):
    """Merge adjacent labels, cheapest MI loss first, until ``target`` remain."""
    K = p0.shape[0]
    a0 = p0.copy()
    a1 = p1.copy()
    nxt = np.arange(1, K + 1)
    nxt[K - 1] = -1
    prv = np.arange(-1, K - 1)
    alive = np.ones(K, dtype=np.bool_)
    stamp = np.zeros(K, dtype=np.int64)
    heap = [(0.0, 0, 0)]
    heap.pop()
    for i in range(K - 1):
        heap.append((_merge_loss(a0[i], a1[i], a0[i + 1], a1[i + 1]), i, 0))
    heapq.heapify(heap)
    n = K
    while n > target and len(heap) > 0:
        loss, i, s = heapq.heappop(heap)
        if not alive[i] or stamp[i] != s or nxt[i] < 0:
            continue
        j = nxt[i]
        a0[i] += a0[j]
        a1[i] += a1[j]
        alive[j] = False
        nxt[i] = nxt[j]
        if nxt[j] >= 0:
            prv[nxt[j]] = i
        stamp[i] += 1
        n -= 1
        k = nxt[i]
        if k >= 0:
            heapq.heappush(heap, (_merge_loss(a0[i], a1[i], a0[k], a1[k]), i, stamp[i]))
        p = prv[i]
        if p >= 0:
            stamp[p] += 1
            heapq.heappush(heap, (_merge_loss(a0[p], a1[p], a0[i], a1[i]), p, stamp[p]))
    keep = np.flatnonzero(alive)
    return a0[keep], a1[keep]


def cluster_anneal(p: JointLabelPmf, max_labels: int) -> tuple[JointLabelPmf, float]:
    """Reduce ``p`` to at most ``max_labels`` labels by greedy adjacent merging.

    Labels are sorted by LLR first.  A symmetric input is clustered on its
    upper half and mirrored, so symmetry survives exactly.  Returns the
    clustered PMF and the MI lost, in bits.
    """
    if max_labels < 2:
        raise ValueError("max_labels must be >= 2")
    if p.n_labels <= max_labels:
        return p, 0.0
    sp, _ = p.sorted_view()
    J = sp.joint
    K = J.shape[1]
    if K % 2 == 0 and sp.is_symmetric(1e-12 * max(1.0, float(J.max()))):
        h0, h1 = _greedy_adjacent_merge(J[0, K // 2:].copy(), J[1, K // 2:].copy(), max_labels // 2)
        upper = np.vstack([h0, h1])
        out = np.hstack([upper[::-1, ::-1], upper])
    else:
        o0, o1 = _greedy_adjacent_merge(J[0].copy(), J[1].copy(), max_labels)
        out = np.vstack([o0, o1])
    q = JointLabelPmf(out / out.sum())
    return q, max(0.0, p.mi() - q.mi())


# ---------------------------------------------------------------------------
# design state


@dataclass
class DdeState:
    """Everything a design run produced, plus PMF hygiene statistics."""

    channel: JointLabelPmf
    n_iterations: int
    n_layers: int
    cn_pmfs: dict = field(default_factory=dict)  # (t, r) -> CN-message PMF
    vn_pmfs: dict = field(default_factory=dict)  # (t, r) -> quantized VN-message PMF
    mi: np.ndarray = None  # (T, L) MI of the quantized VN messages, bits
    max_norm_error: float = 0.0
    max_sym_error: float = 0.0
    anneal_loss: float = 0.0
    saturated_at: Optional[int] = None

    def __post_init__(self):
        if self.mi is None:
            self.mi = np.zeros((self.n_iterations, self.n_layers))

    def check(self, pmf: JointLabelPmf, presorted_error: float = 0.0) -> JointLabelPmf:
        self.max_norm_error = max(self.max_norm_error, abs(pmf.total() - 1.0))
        sp, _ = pmf.sorted_view()
        self.max_sym_error = max(self.max_sym_error, presorted_error, sp.symmetry_error())
        return pmf

    def final_mi(self) -> np.ndarray:
        return self.mi[-1]


class _Designer:
    """Shared VN/CN update machinery for the flooding and layered designs."""

    def __init__(self, ch: ChannelLlrAlphabet, b_e: int, max_labels: int, cn_op: str):
        if b_e < 2:
            raise ValueError("b_e must be >= 2")
        if max_labels < 2**b_e:
            raise ValueError("max_labels must be at least 2**b_e")
        if cn_op not in ("min", "boxplus"):
            raise ValueError("cn_op must be 'min' or 'boxplus'")
        self.b_e, self.max_labels, self.cn_op = b_e, max_labels, cn_op
        self.ch = ch
        self.state: Optional[DdeState] = None

    def canon(self, pmf: JointLabelPmf) -> JointLabelPmf:
        c, err = canonical_symmetric(pmf)
        return self.state.check(c, err)

    def combine_vn(self, a: JointLabelPmf, b: Optional[JointLabelPmf]) -> JointLabelPmf:
        if b is None:  # zero-information message: LLR addition of 0
            return a
        prod = self.canon(boxdot(a, b))
        out, loss = cluster_anneal(prod, self.max_labels)
        self.state.anneal_loss += loss
        return self.state.check(out)

    def mixture(self, pmfs: list, weights) -> JointLabelPmf:
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
        J = np.hstack([wi * p.joint for wi, p in zip(w, pmfs)])
        return self.canon(JointLabelPmf(J))

    def cn_update(self, vn_mix: JointLabelPmf, cn_degrees, cn_weights) -> tuple[RcqStage, JointLabelPmf, JointLabelPmf]:
        """Quantize the VN mixture and push it through the CN; returns (stage, Pv_q, Pc)."""
        th, pv = hdq(vn_mix, self.b_e, symmetric=True)
        pv = self.state.check(pv)
        taus = thresholds_to_llr(vn_mix, th)
        w = np.asarray(cn_weights, dtype=np.float64)
        w = w / w.sum()
        if self.cn_op == "min":
            table = ms_label_table(pv)
            out = np.zeros_like(pv.joint)
            for dc, wd in zip(cn_degrees, w):
                acc = pv
                for _ in range(dc - 2):
                    acc = circledast(acc, pv, table)
                out += wd * acc.joint
            pc = self.state.check(symmetrize_fixed(JointLabelPmf(out)))
            stage = RcqStage(taus, reconstruction_from_pmf(pc))
            return stage, pv, pc
        per_degree = []
        for dc in cn_degrees:
            acc = pv
            for _ in range(dc - 2):
                prod = self.canon(boxplus_pmf(acc, pv))
                acc, loss = cluster_anneal(prod, self.max_labels)
                self.state.anneal_loss += loss
            per_degree.append(acc)
        cn_mix = self.mixture(per_degree, w)
        th_c, pc = hdq(cn_mix, self.b_e, symmetric=True)
        pc = self.state.check(pc)
        stage = RcqStage(taus, reconstruction_from_pmf(pc),
                         thresholds_to_llr(cn_mix, th_c), reconstruction_from_pmf(pv))
        return stage, pv, pc


def _finish(designer: _Designer, mode: str, stages: list, design_ebno_db: float, meta: dict) -> RcqParamSet:
    ch = designer.ch
    # The binary point follows the channel LLR range.  Late, near-certain
    # stages can produce reconstructions several times larger; sizing for them
    # would cost every earlier stage its resolution, so they saturate instead.
    b_v = ch.b_v
    fp = FixedPointFormat.for_range(b_v, float(np.abs(ch.levels).max()))
    state = designer.state
    meta = {**meta, "max_labels": designer.max_labels, "saturated_at": state.saturated_at,
            "anneal_loss_bits": state.anneal_loss}
    return RcqParamSet(mode, designer.cn_op, designer.b_e, b_v, None, tuple(tuple(r) for r in stages),
                       float(design_ebno_db), ch.levels, ch.clip, fp, state.mi.copy(), meta)


def _column_degrees(base: QcBaseMatrix) -> np.ndarray:
    return base.mask.sum(axis=0)


def _row_degrees(base: QcBaseMatrix) -> np.ndarray:
    return base.mask.sum(axis=1)


def dde_flooding(base: QcBaseMatrix, ch: ChannelLlrAlphabet, b_e: int, I_T: int,
                 max_labels: int = DEFAULT_MAX_LABELS, cn_op: str = "min",
                 design_ebno_db: float = float("nan")) -> tuple[RcqParamSet, DdeState]:
    """One quantizer/reconstruction pair per iteration, pooled over the whole graph."""
    if I_T < 1:
        raise ValueError("I_T must be >= 1")
    d = _Designer(ch, b_e, max_labels, cn_op)
    d.state = DdeState(ch.pmf, I_T, 1)
    chp = d.canon(ch.pmf)
    vdeg = _column_degrees(base)
    cdeg = _row_degrees(base)
    if np.any(vdeg == 0) or np.any(cdeg < 2):
        raise ValueError("every column needs an edge and every row at least two")
    v_degrees, v_counts = np.unique(vdeg, return_counts=True)
    c_degrees, c_counts = np.unique(cdeg, return_counts=True)
    v_weights = v_degrees * v_counts  # edge-perspective weights
    c_weights = c_degrees * c_counts

    stages = []
    pc = None
    for t in range(1, I_T + 1):
        if d.state.saturated_at is not None:
            stages.append(stages[-1])
            d.state.mi[t - 1] = d.state.mi[t - 2]
            continue
        chain = [chp]
        for _ in range(int(v_degrees.max()) - 1):
            chain.append(d.combine_vn(chain[-1], pc))
        vn_mix = d.mixture([chain[dv - 1] for dv in v_degrees], v_weights)
        try:
            stage, pv, pc = d.cn_update(vn_mix, c_degrees, c_weights)
        except DegeneratePmfError:
            if t == 1 or vn_mix.mi() < DEGENERATE_MI:
                raise
            # messages are near-perfect: keep the last stage from here on
            stages.append(stages[-1])
            d.state.mi[t - 1, 0] = vn_mix.mi()
            d.state.saturated_at = t
            continue
        stages.append([stage])
        d.state.vn_pmfs[(t, 0)] = pv
        d.state.cn_pmfs[(t, 0)] = pc
        d.state.mi[t - 1, 0] = pv.mi()
        if d.state.mi[t - 1, 0] >= MI_SATURATION:
            d.state.saturated_at = t
    params = _finish(d, "flooding", stages, design_ebno_db, {"schedule": "flooding"})
    return params, d.state


def dde_layer_specific(base: QcBaseMatrix, ch: ChannelLlrAlphabet, b_e: int, I_T: int,
                       max_labels: int = DEFAULT_MAX_LABELS,
                       design_ebno_db: float = float("nan")) -> tuple[RcqParamSet, DdeState]:
    """Separate parameters for every (iteration, layer); one base row per layer."""
    if I_T < 1:
        raise ValueError("I_T must be >= 1")
    M = base.rows
    cols_of = [base.active_cols(r) for r in range(M)]
    layers_of = [base.active_rows(c) for c in range(base.cols)]
    if any(len(c) < 2 for c in cols_of):
        raise ValueError("every layer needs at least two active columns")
    d = _Designer(ch, b_e, max_labels, "min")
    d.state = DdeState(ch.pmf, I_T, M)
    chp = d.canon(ch.pmf)
    prev: list = [None] * M
    frozen = np.zeros(M, dtype=bool)
    stages = []
    for t in range(1, I_T + 1):
        if d.state.saturated_at is not None:
            stages.append(stages[-1])
            d.state.mi[t - 1] = d.state.mi[t - 2]
            continue
        cur: list = [None] * M
        row = []
        for r in range(M):
            vn = []
            for c in cols_of[r]:
                p = chp
                for k in layers_of[c]:
                    if k != r:
                        p = d.combine_vn(p, cur[k] if k < r else prev[k])
                vn.append(p)
            vn_mix = d.mixture(vn, np.ones(len(vn)))
            deg = len(cols_of[r])
            try:
                stage, pv, pc = d.cn_update(vn_mix, [deg], [1.0])
            except DegeneratePmfError:
                if t == 1 or vn_mix.mi() < DEGENERATE_MI:
                    raise
                # near-perfect layer: reuse its previous stage and CN message
                row.append(stages[-1][r])
                cur[r] = prev[r]
                d.state.mi[t - 1, r] = vn_mix.mi()
                frozen[r] = True
                continue
            row.append(stage)
            cur[r] = pc
            d.state.vn_pmfs[(t, r)] = pv
            d.state.cn_pmfs[(t, r)] = pc
            d.state.mi[t - 1, r] = pv.mi()
        stages.append(row)
        prev = cur
        if np.all(frozen | (d.state.mi[t - 1] >= MI_SATURATION)):
            d.state.saturated_at = t
    params = _finish(d, "layered", stages, design_ebno_db, {"schedule": "layered"})
    return params, d.state


# ---------------------------------------------------------------------------
# design entry points


def channel_alphabet(base: QcBaseMatrix, ebno_db: float, b_v: int, clip: float = DEFAULT_CLIP) -> ChannelLlrAlphabet:
    return uniform_llr_quantizer(AwgnChannel(ebno_to_sigma(ebno_db, base.design_rate)), b_v, clip)


def design(base: QcBaseMatrix, ebno_db: float, b_e: int, b_v: int, I_T: int, mode: str = "flooding",
           cn_op: str = "min", max_labels: int = DEFAULT_MAX_LABELS,
           clip: float = DEFAULT_CLIP) -> tuple[RcqParamSet, DdeState]:
    """Design an RCQ parameter set at ``ebno_db`` for the graph of ``base``."""
    ch = channel_alphabet(base, ebno_db, b_v, clip)
    if mode == "flooding":
        return dde_flooding(base, ch, b_e, I_T, max_labels, cn_op, design_ebno_db=ebno_db)
    if mode == "layered":
        if cn_op != "min":
            raise ValueError("layered designs support the min CN only")
        return dde_layer_specific(base, ch, b_e, I_T, max_labels, design_ebno_db=ebno_db)
    raise ValueError(f"unknown mode {mode!r}")


def converges(base: QcBaseMatrix, ebno_db: float, b_e: int, b_v: int, I_T: int, eps: float,
              mode: str = "flooding", cn_op: str = "min", max_labels: int = DEFAULT_MAX_LABELS,
              clip: float = DEFAULT_CLIP) -> bool:
    """``I(t=I_T, r) > 1 - eps`` for every layer ``r``."""
    try:
        _, state = design(base, ebno_db, b_e, b_v, I_T, mode, cn_op, max_labels, clip)
    except DegeneratePmfError as exc:  # degenerate PMFs far below threshold
        log.debug("design failed at %.3f dB: %s", ebno_db, exc)
        return False
    return bool(np.all(state.final_mi() > 1.0 - eps))


def find_threshold(base: QcBaseMatrix, b_e: int, b_v: int, I_T: int, eps: float = 1e-4,
                   mode: str = "flooding", lo: float = 0.0, hi: float = 6.0, resolution: float = 0.01,
                   cn_op: str = "min", max_labels: int = DEFAULT_MAX_LABELS,
                   clip: float = DEFAULT_CLIP) -> float:
    """Smallest Eb/N0 (dB) whose design reaches ``1 - eps`` in every layer, by bisection.

    Returns the upper end of the final bracket, which is a point that was
    verified to converge and lies within ``resolution`` of the threshold.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    if lo >= hi:
        raise ValueError("empty search bracket")

    def ok(x):
        res = converges(base, x, b_e, b_v, I_T, eps, mode, cn_op, max_labels, clip)
        log.info("threshold search: %.4f dB -> %s", x, res)
        return res

    if not ok(hi):
        raise ThresholdNotFound(f"no convergence at the upper bracket {hi} dB")
    if ok(lo):
        return lo
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
