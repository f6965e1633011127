"""Mutual-information quantizers for binary-input discrete channels.

Everything here works on an LLR-sorted label axis.  Region ``d`` of a quantizer
with index thresholds ``xi`` is ``xi[d-1] <= w < xi[d]`` (with ``xi[-1] = 0``
and ``xi[2**b - 1] = K`` implied), so a threshold is the first index of the
region above it.  ``hdq`` places thresholds one bit level at a time with a
golden-section search per region; ``dp_optimal_quantizer`` is the exact
dynamic-programming reference used to check it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlogy

LOG_FLOOR = 1e-300
ZERO_MASS = 1e-12
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def mutual_information(joint) -> float:
    """I(X;D) in bits for a 2 x K joint table (need not be normalized)."""
    joint = np.asarray(joint, dtype=np.float64)
    total = joint.sum()
    p = joint / total
    px = p.sum(axis=1, keepdims=True)
    pd = p.sum(axis=0, keepdims=True)
    denom = px * pd
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, p / np.where(denom > 0, denom, 1.0), 1.0)
    return float(xlogy(p, ratio).sum() / math.log(2.0))


@dataclass(frozen=True)
class JointLabelPmf:
    """Joint table ``joint[x, d] = P(X = x, D = d)``."""

    joint: np.ndarray

    def __post_init__(self):
        j = np.array(self.joint, dtype=np.float64)
        if j.ndim != 2 or j.shape[0] != 2 or j.shape[1] < 1:
            raise ValueError(f"joint must have shape (2, K), got {j.shape}")
        if np.any(j < 0) or not np.all(np.isfinite(j)):
            raise ValueError("joint has negative or non-finite entries")
        j.setflags(write=False)
        object.__setattr__(self, "joint", j)

    @property
    def n_labels(self) -> int:
        return self.joint.shape[1]

    @property
    def mass(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    @property
    def llr(self) -> np.ndarray:
        j = np.maximum(self.joint, LOG_FLOOR)
        return np.log(j[0]) - np.log(j[1])

    def total(self) -> float:
        return float(self.joint.sum())

    def normalized(self) -> "JointLabelPmf":
        return JointLabelPmf(self.joint / self.joint.sum())

    def mi(self) -> float:
        return mutual_information(self.joint)

    def sort_order(self) -> np.ndarray:
        return np.argsort(self.llr, kind="stable")

    def sorted_view(self) -> tuple["JointLabelPmf", np.ndarray]:
        order = self.sort_order()
        return JointLabelPmf(self.joint[:, order]), order

    def symmetry_error(self) -> float:
        """max |P(0, d) - P(1, K-1-d)| on the stored label order."""
        return float(np.max(np.abs(self.joint[0] - self.joint[1, ::-1])))

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        return self.symmetry_error() <= tol


@dataclass(frozen=True)
class IndexThresholds:
    """``2**b - 1`` thresholds on the sorted axis of a ``K``-label PMF."""

    xi: np.ndarray
    b: int
    n_inputs: int
    order: np.ndarray = field(default=None, compare=False)  # sorted position -> input label

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=np.int64)
        if len(xi) != 2**self.b - 1:
            raise ValueError(f"expected {2**self.b - 1} thresholds, got {len(xi)}")
        edges = np.concatenate([[0], xi, [self.n_inputs]])
        if np.any(np.diff(edges) <= 0):
            raise ValueError(f"thresholds {xi.tolist()} do not define non-empty regions")
        object.__setattr__(self, "xi", xi)
        if self.order is None:
            object.__setattr__(self, "order", np.arange(self.n_inputs))

    def region_of_sorted(self) -> np.ndarray:
        """Output label for each sorted input position."""
        return np.searchsorted(self.xi, np.arange(self.n_inputs), side="right")

    def label_map(self) -> np.ndarray:
        """Output label for each input label (original order)."""
        out = np.empty(self.n_inputs, dtype=np.int64)
        out[self.order] = self.region_of_sorted()
        return out


@dataclass(frozen=True)
class MagnitudeQuantizer:
    """Magnitude thresholds ``tau_0 < ... < tau_max`` in LLR units."""

    taus: np.ndarray
    b_e: int

    def __post_init__(self):
        t = np.asarray(self.taus, dtype=np.float64)
        if self.b_e < 2:
            raise ValueError("b_e must be >= 2 for a sign-magnitude quantizer")
        if len(t) != 2 ** (self.b_e - 1) - 1:
            raise ValueError(f"expected {2 ** (self.b_e - 1) - 1} thresholds, got {len(t)}")
        if len(t) and (t[0] <= 0 or np.any(np.diff(t) <= 0)):
            raise ValueError(f"thresholds must be positive and strictly increasing: {t}")
        object.__setattr__(self, "taus", t)


@dataclass(frozen=True)
class MagnitudeReconstruction:
    """Reconstructed LLR magnitude for each external magnitude label."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        n = len(v)
        if n < 1 or n & (n - 1):
            raise ValueError(f"need a power-of-two number of magnitudes, got {n}")
        if not np.all(np.isfinite(v)) or v[0] <= 0 or np.any(np.diff(v) <= 0):
            raise ValueError(f"reconstruction must be positive and strictly increasing: {v}")
        object.__setattr__(self, "values", v)

    @property
    def b_e(self) -> int:
        return int(np.log2(len(self.values))) + 1


def quantize_magnitude(q: MagnitudeQuantizer, h):
    """Q*(h): 0 for h <= tau_0, j for tau_{j-1} < h <= tau_j, top label above tau_max."""
    out = np.searchsorted(q.taus, h, side="left")
    return int(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# golden-section search


class DegeneratePmfError(ValueError):
    """Too few labels carry mass to fill every quantizer region."""


def golden_section_argmax(f: Callable[[int], float], lo: int, hi: int) -> int:
    """Smallest argmax of a unimodal ``f`` on the integers ``lo..hi``.

    Shrinks the bracket by the golden ratio until at most four points remain,
    then scans them.  If the result is not a local maximum (``f`` was not
    unimodal after all), the whole range is scanned instead.
    """
    if lo > hi:
        raise ValueError(f"empty search range [{lo}, {hi}]")
    cache: dict[int, float] = {}

    def F(i: int) -> float:
        if i not in cache:
            cache[i] = f(i)
        return cache[i]

    a, b = lo, hi
    while b - a > 3:
        w = b - a
        step = max(int(round(w / GOLDEN)), w // 2 + 1)
        c, d = b - step, a + step
        if F(c) >= F(d):
            b = d
        else:
            a = c
    best = max(range(a, b + 1), key=lambda i: (F(i), -i))
    if (best > lo and F(best - 1) >= F(best)) or (best < hi and F(best + 1) > F(best)):
        best = max(range(lo, hi + 1), key=lambda i: (F(i), -i))
    return best


# ---------------------------------------------------------------------------
# HDQ


def _split_mi(c0: np.ndarray, c1: np.ndarray, lo: int, hi: int, x: int) -> float:
    """I(X; D_next | region) for region [lo, hi) cut at x, from prefix sums."""
    a0, a1 = c0[x] - c0[lo], c1[x] - c1[lo]
    b0, b1 = c0[hi] - c0[x], c1[hi] - c1[x]
    t = a0 + a1 + b0 + b1
    if t <= 0:
        return 0.0
    q = np.array([[a0, b0], [a1, b1]]) / t
    px = q.sum(axis=1, keepdims=True)
    ps = q.sum(axis=0, keepdims=True)
    den = px * ps
    with np.errstate(divide="ignore", invalid="ignore"):
        val = xlogy(q, np.where(q > 0, q / np.where(den > 0, den, 1.0), 1.0)).sum()
    return float(val / math.log(2.0))


def _hdq_cuts(c0, c1, lo: int, hi: int, levels: int) -> list[int]:
    if levels == 0:
        return []
    # leave room for the 2**(levels-1) regions still to be carved on each side
    margin = 2 ** (levels - 1)
    x = golden_section_argmax(lambda x: _split_mi(c0, c1, lo, hi, x), lo + margin, hi - margin)
    return _hdq_cuts(c0, c1, lo, x, levels - 1) + [x] + _hdq_cuts(c0, c1, x, hi, levels - 1)


def _aggregate(joint_sorted: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return np.add.reduceat(joint_sorted, np.concatenate([[0], xi]), axis=1)


def hdq(pmf: JointLabelPmf, b: int, symmetric: bool = False) -> tuple[IndexThresholds, JointLabelPmf]:
    """``b``-bit hierarchical dynamic quantization of ``pmf``.

    Labels with mass below ``ZERO_MASS`` never start a region; they ride along
    with the region below them.  With ``symmetric=True`` the input must be
    mirror-symmetric on its sorted axis with an even label count: the sign cut
    is fixed at the centre, the upper half is searched and the lower half is
    its mirror image, so the output PMF is exactly symmetric.
    """
    if b < 1:
        raise ValueError("b must be >= 1")
    spmf, order = pmf.sorted_view()
    J = spmf.joint
    K = spmf.n_labels
    mass = J.sum(axis=0)

    if symmetric:
        if K % 2:
            raise ValueError("symmetric HDQ needs an even number of labels")
        half = K // 2
        keep = half + np.flatnonzero(mass[half:] >= ZERO_MASS)
        if len(keep) < 2 ** (b - 1):
            raise DegeneratePmfError(f"fewer than {2**(b - 1)} positive labels with non-zero mass")
        c0 = np.concatenate([[0.0], np.cumsum(J[0, keep])])
        c1 = np.concatenate([[0.0], np.cumsum(J[1, keep])])
        upper = [int(keep[x]) for x in _hdq_cuts(c0, c1, 0, len(keep), b - 1)]
        xi = np.array(sorted([K - u for u in upper]) + [half] + upper, dtype=np.int64)
        q = _aggregate(J, xi)
        n_out = 2**b
        # rebuild the lower half from the upper half so the output is exactly mirrored
        q[:, : n_out // 2] = q[::-1, n_out // 2:][:, ::-1]
    else:
        keep = np.flatnonzero(mass >= ZERO_MASS)
        if len(keep) < 2**b:
            raise DegeneratePmfError(f"fewer than {2**b} labels with non-zero mass")
        c0 = np.concatenate([[0.0], np.cumsum(J[0, keep])])
        c1 = np.concatenate([[0.0], np.cumsum(J[1, keep])])
        cuts = _hdq_cuts(c0, c1, 0, len(keep), b)
        xi = np.array([int(keep[x]) for x in cuts], dtype=np.int64)
        # zero-mass labels before the first kept label belong to region 0
        q = _aggregate(J, xi)
    return IndexThresholds(xi, b, K, order), JointLabelPmf(q)


def quantize_with(pmf: JointLabelPmf, th: IndexThresholds) -> JointLabelPmf:
    spmf = JointLabelPmf(pmf.joint[:, th.order])
    return JointLabelPmf(_aggregate(spmf.joint, th.xi))


def dp_optimal_quantizer(pmf: JointLabelPmf, b: int) -> tuple[IndexThresholds, float]:
    """MI-optimal contiguous ``b``-bit quantizer on the LLR-sorted axis (O(2^b K^2))."""
    spmf, order = pmf.sorted_view()
    J = spmf.joint / spmf.total()
    K = J.shape[1]
    n_reg = 2**b
    if np.count_nonzero(J.sum(axis=0) >= ZERO_MASS) < n_reg:
        raise DegeneratePmfError(f"fewer than {n_reg} labels with non-zero mass")
    c0 = np.concatenate([[0.0], np.cumsum(J[0])])
    c1 = np.concatenate([[0.0], np.cumsum(J[1])])
    px0, px1 = c0[-1], c1[-1]
    m0 = c0[None, :] - c0[:, None]
    m1 = c1[None, :] - c1[:, None]
    valid = np.triu(np.ones((K + 1, K + 1), dtype=bool), k=1)
    m0 = np.where(valid, np.maximum(m0, 0.0), 0.0)
    m1 = np.where(valid, np.maximum(m1, 0.0), 0.0)
    m = m0 + m1
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(m > 0, m, 1.0)
        cost = xlogy(m0, np.where(m0 > 0, m0 / (safe * px0), 1.0)) + xlogy(
            m1, np.where(m1 > 0, m1 / (safe * px1), 1.0))
    cost = np.where(valid, cost, -np.inf)
    del m0, m1, m, safe

    dp = np.full(K + 1, -np.inf)
    dp[0] = 0.0
    back = []
    cols = np.arange(K + 1)
    for _ in range(n_reg):
        tot = dp[:, None] + cost
        arg = np.argmax(tot, axis=0)
        dp = tot[arg, cols]
        back.append(arg)
    end, cuts = K, []
    for arg in reversed(back):
        end = int(arg[end])
        cuts.append(end)
    xi = np.array(sorted(cuts)[1:], dtype=np.int64)
    th = IndexThresholds(xi, b, K, order)
    return th, quantize_with(pmf, th).mi()


# ---------------------------------------------------------------------------
# threshold / reconstruction read-off


def thresholds_to_llr(pmf: JointLabelPmf, th: IndexThresholds, tol: float = 1e-9) -> MagnitudeQuantizer:
    """Magnitude thresholds from the LLR of each upper-half region's first label.

    Mirrored lower-half boundaries are averaged in, which is a no-op for an
    exactly symmetric design.
    """
    if th.b < 2:
        raise ValueError("magnitude thresholds need b >= 2")
    J = pmf.joint[:, th.order]
    spmf = JointLabelPmf(J)
    if not spmf.is_symmetric(tol * max(1.0, float(J.max()))):
        raise ValueError("thresholds_to_llr needs a symmetric PMF")
    llr = spmf.llr
    half = 2 ** (th.b - 1)
    xi = np.concatenate([[0], th.xi])  # 1-based: xi[j] is threshold j for j >= 1
    taus = []
    for i in range(half - 1):
        j = 1 + i + half
        up = llr[xi[j]]
        down = -llr[xi[2**th.b - j] - 1]
        taus.append(0.5 * (up + down))
    return MagnitudeQuantizer(np.array(taus), th.b)


def reconstruction_from_pmf(quantized: JointLabelPmf) -> MagnitudeReconstruction:
    """R*(d) = LLR of label ``d + 2**(b-1)`` of a symmetric quantized PMF."""
    K = quantized.n_labels
    if K < 2 or K & (K - 1):
        raise ValueError("quantized PMF must have a power-of-two label count")
    J = quantized.joint[:, K // 2:]
    if np.any(J <= 0):
        raise ValueError("zero-mass entry in quantized PMF; reconstruction undefined")
    return MagnitudeReconstruction(np.log(J[0]) - np.log(J[1]))


def label_sign_magnitude(labels, b_e: int):
    """Split sorted-axis labels into (negative flag, magnitude index)."""
    labels = np.asarray(labels)
    half = 2 ** (b_e - 1)
    neg = labels < half
    mag = np.where(neg, half - 1 - labels, labels - half)
    return neg, mag


def label_from_sign_magnitude(neg, mag, b_e: int):
    half = 2 ** (b_e - 1)
    return np.where(neg, half - 1 - np.asarray(mag), half + np.asarray(mag))
