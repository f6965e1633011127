"""BPSK over AWGN: observation discretization and channel-LLR alphabets.

Bit ``x`` is sent as ``s(x) = 1 - 2x`` and received as ``y = s(x) + z``.  LLRs
are natural-log, ``log P(.|x=0) / P(.|x=1)``; mutual information is in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .quantizer import JointLabelPmf

DEFAULT_CLIP = 2.0


def ebno_to_sigma(ebno_db: float, rate: float) -> float:
    return float(np.sqrt(1.0 / (2.0 * rate * 10.0 ** (ebno_db / 10.0))))


def sigma_to_ebno(sigma: float, rate: float) -> float:
    return float(10.0 * np.log10(1.0 / (2.0 * rate * sigma**2)))


@dataclass(frozen=True)
class AwgnChannel:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @classmethod
    def from_ebno(cls, ebno_db: float, rate: float) -> "AwgnChannel":
        return cls(ebno_to_sigma(ebno_db, rate))

    def ebno_db(self, rate: float) -> float:
        return sigma_to_ebno(self.sigma, rate)

    def llr(self, y):
        return 2.0 * np.asarray(y) / self.sigma**2

    def observe(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Observations of the all-zero codeword."""
        return 1.0 + self.sigma * rng.standard_normal(n)


def _log_cell_masses(sigma: float, edges: np.ndarray, mean: float) -> np.ndarray:
    """log P(edges[w] <= y < edges[w+1] | mean) with infinite outer edges."""
    a = (edges[:-1] - mean) / sigma
    b = (edges[1:] - mean) / sigma
    # pick the numerically safer tail for each cell
    upper = a > 0
    lo = np.where(upper, -b, a)
    hi = np.where(upper, -a, b)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide="ignore"):
        return log_hi + np.log1p(-np.exp(log_lo - log_hi))


@dataclass(frozen=True)
class DiscretizedChannel:
    """Uniform ``B``-cell discretization of ``y`` over ``[-Y, Y]``; tails go to edge cells."""

    pmf: JointLabelPmf
    y_grid: np.ndarray  # cell centres
    clip: float
    llr: np.ndarray  # per-cell LLR computed in the log domain

    @property
    def B(self) -> int:
        return self.pmf.n_labels

    @property
    def joint(self) -> np.ndarray:
        return self.pmf.joint

    def boundary(self, index: int) -> float:
        """Observation value at the lower edge of cell ``index``."""
        return -self.clip + 2.0 * self.clip * index / self.B


def cell_edges(B: int, clip: float) -> np.ndarray:
    edges = np.linspace(-clip, clip, B + 1)
    edges[0], edges[-1] = -np.inf, np.inf
    return edges


def discretize_awgn(chan: AwgnChannel, B: int, clip: float = DEFAULT_CLIP) -> DiscretizedChannel:
    if B < 2:
        raise ValueError("B must be >= 2")
    if not clip > 0:
        raise ValueError("clip half-range must be positive")
    edges = cell_edges(B, clip)
    log0 = _log_cell_masses(chan.sigma, edges, 1.0)
    # x = 1 is the mirror image of x = 0
    log1 = log0[::-1]
    joint = 0.5 * np.exp(np.vstack([log0, log1]))
    joint /= joint.sum()
    llr = log0 - log1
    if not np.all(np.diff(llr) > 0):
        raise ValueError("cell LLRs are not strictly increasing; sigma too small for B and clip")
    centres = -clip + (np.arange(B) + 0.5) * (2.0 * clip / B)
    return DiscretizedChannel(JointLabelPmf(joint), centres, clip, llr)


@dataclass(frozen=True)
class ChannelLlrAlphabet:
    levels: np.ndarray  # ascending cell LLRs in nats
    pmf: JointLabelPmf
    clip: float

    @property
    def b_v(self) -> int:
        return int(np.log2(len(self.levels)))

    @property
    def joint(self) -> np.ndarray:
        return self.pmf.joint

    def label_of(self, y) -> np.ndarray:
        return observation_labels(y, len(self.levels), self.clip)


def uniform_llr_quantizer(chan: AwgnChannel, b_v: int, clip: float = DEFAULT_CLIP) -> ChannelLlrAlphabet:
    """Uniform ``2**b_v``-cell channel quantizer with the true LLR of each cell."""
    if b_v < 1:
        raise ValueError("b_v must be >= 1")
    d = discretize_awgn(chan, 2**b_v, clip)
    marg = d.joint.sum(axis=0)
    levels = d.llr
    # P(x, d) = P(d) e^{(1-x) l_d} / (e^{l_d} + 1)
    p0 = marg / (1.0 + np.exp(-levels))
    p1 = marg / (1.0 + np.exp(levels))
    joint = np.vstack([p0, p1])
    joint /= joint.sum()
    return ChannelLlrAlphabet(levels, JointLabelPmf(joint), clip)


def observation_labels(y, n_cells: int, clip: float = DEFAULT_CLIP) -> np.ndarray:
    """Index of the uniform cell over ``[-clip, clip]`` containing each ``y``."""
    y = np.asarray(y, dtype=np.float64)
    idx = np.floor((y + clip) * (n_cells / (2.0 * clip)))
    return np.clip(idx, 0, n_cells - 1).astype(np.int64)


def sample_llr_words(chan: AwgnChannel, n: int, b_v: int, clip: float,
                     rng: np.random.Generator) -> np.ndarray:
    return observation_labels(chan.observe(n, rng), 2**b_v, clip)

