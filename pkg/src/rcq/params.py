"""RCQ parameter sets: per-iteration (and per-layer) quantizers and reconstructions.

A parameter set is a ``T x L`` grid of stages (``L = 1`` for flooding designs).
Real-valued thresholds and reconstructions are kept alongside the fixed-point
integers the decoder actually uses, so a saved file can be audited either way.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .quantizer import MagnitudeQuantizer, MagnitudeReconstruction

FORMAT_VERSION = 1
MODES = ("flooding", "layered")
CN_OPS = ("min", "boxplus")
FLOAT_CN_BITS = 64  # storage width charged to a floating-point CN datapath


@dataclass(frozen=True)
class FixedPointFormat:
    """Two's-complement-style integer grid with ``frac_bits`` fractional bits.

    Extrinsic VN values live in ``total_bits`` and saturate at
    ``+-(2**(total_bits-1) - 1)``; the posterior gets two extra bits of headroom.
    """

    total_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.total_bits < 2:
            raise ValueError("total_bits must be >= 2")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(f"need 0 <= frac_bits < total_bits, got {self.frac_bits}")

    @classmethod
    def for_range(cls, total_bits: int, l_max: float) -> "FixedPointFormat":
        """Largest binary point that still represents ``l_max`` with one spare bit.

        ``f = b_v - 2 - ceil(log2(ceil(l_max)))``, clamped to ``f >= 0``.
        """
        c = max(1, math.ceil(l_max))
        f = total_bits - 2 - math.ceil(math.log2(c))
        return cls(total_bits, max(0, min(f, total_bits - 1)))

    @property
    def scale(self) -> float:
        return float(2**self.frac_bits)

    @property
    def ext_max(self) -> int:
        return 2 ** (self.total_bits - 1) - 1

    @property
    def post_max(self) -> int:
        return 2 ** (self.total_bits + 1) - 1

    def to_fixed(self, x) -> np.ndarray:
        """Round to the grid and saturate at the extrinsic range."""
        v = np.rint(np.asarray(x, dtype=np.float64) * self.scale)
        return np.clip(v, -self.ext_max, self.ext_max).astype(np.int64)

    def thresholds_to_fixed(self, taus) -> np.ndarray:
        # integer h satisfies h <= tau * 2^f  iff  h <= floor(tau * 2^f)
        return np.floor(np.asarray(taus, dtype=np.float64) * self.scale).astype(np.int64)

    def to_real(self, v) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) / self.scale


@dataclass(frozen=True)
class RcqStage:
    """Parameters for one iteration (flooding) or one (iteration, layer) pair."""

    vn_quantizer: MagnitudeQuantizer
    cn_reconstruction: MagnitudeReconstruction
    cn_quantizer: Optional[MagnitudeQuantizer] = None
    vn_reconstruction: Optional[MagnitudeReconstruction] = None

    def __post_init__(self):
        b_e = self.vn_quantizer.b_e
        if self.cn_reconstruction.b_e != b_e:
            raise ValueError("VN quantizer and CN reconstruction disagree on b_e")
        if (self.cn_quantizer is None) != (self.vn_reconstruction is None):
            raise ValueError("cn_quantizer and vn_reconstruction come as a pair")
        if self.cn_quantizer is not None:
            if self.cn_quantizer.b_e != b_e or self.vn_reconstruction.b_e != b_e:
                raise ValueError("CN-side tables disagree on b_e")

    @property
    def b_e(self) -> int:
        return self.vn_quantizer.b_e


@dataclass(frozen=True)
class RcqParamSet:
    mode: str
    cn_op: str
    b_e: int
    b_v: int
    b_ic: Optional[int]
    stages: tuple  # stages[t][r]
    design_ebno_db: float
    channel_levels: np.ndarray  # LLR of each uniform channel cell, ascending
    clip: float
    fixed_point: FixedPointFormat
    mi_trace: np.ndarray = field(default=None, compare=False)  # (T, L) designed MI
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.cn_op not in CN_OPS:
            raise ValueError(f"cn_op must be one of {CN_OPS}")
        stages = tuple(tuple(row) for row in self.stages)
        if not stages or not stages[0]:
            raise ValueError("empty schedule")
        L = len(stages[0])
        if any(len(row) != L for row in stages):
            raise ValueError("ragged schedule")
        if self.mode == "flooding" and L != 1:
            raise ValueError("flooding parameter sets have a single layer column")
        for row in stages:
            for s in row:
                if s.b_e != self.b_e:
                    raise ValueError("stage b_e does not match parameter set")
                if (self.cn_op == "boxplus") != (s.cn_quantizer is not None):
                    raise ValueError("boxplus designs need CN-side tables and min designs must not have them")
        levels = np.asarray(self.channel_levels, dtype=np.float64)
        if len(levels) != 2**self.b_v:
            raise ValueError(f"expected {2**self.b_v} channel levels, got {len(levels)}")
        if self.fixed_point.total_bits != self.b_v:
            raise ValueError("fixed-point width must equal b_v")
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "channel_levels", levels)
        if self.mi_trace is not None:
            object.__setattr__(self, "mi_trace", np.asarray(self.mi_trace, dtype=np.float64))

    # ---- shape -----------------------------------------------------------

    @property
    def n_iterations(self) -> int:
        return len(self.stages)

    @property
    def n_layers(self) -> int:
        return len(self.stages[0])

    @property
    def n_entries(self) -> int:
        return self.n_iterations * self.n_layers

    def stage(self, t: int, r: int = 0) -> RcqStage:
        """Stage for 1-based iteration ``t``; iterations past the design repeat the last one."""
        return self.stages[min(t, self.n_iterations) - 1][r]

    # ---- storage accounting ---------------------------------------------

    def bits_per_entry(self) -> int:
        n_values = 2**self.b_e - 1  # magnitude thresholds plus reconstruction levels
        bits = n_values * (self.b_v - 1)
        if self.cn_op == "boxplus":
            width = FLOAT_CN_BITS if self.b_ic is None else self.b_ic
            bits += n_values * (width - 1)
        return bits

    def total_bits(self) -> int:
        return self.bits_per_entry() * self.n_entries

    # ---- fixed-point tables ---------------------------------------------

    def channel_fixed(self) -> np.ndarray:
        return self.fixed_point.to_fixed(self.channel_levels)

    def vn_thresholds_fixed(self) -> np.ndarray:
        """(T, L, 2**(b_e-1) - 1) integer thresholds for the VN quantizers."""
        return np.array([[self.fixed_point.thresholds_to_fixed(s.vn_quantizer.taus) for s in row]
                         for row in self.stages], dtype=np.int64)

    def cn_reconstruction_fixed(self) -> np.ndarray:
        """(T, L, 2**(b_e-1)) integer CN-message magnitudes used at the VN.

        Magnitudes are floored at one LSB so a coarse binary point never erases
        the sign of a message.
        """
        return np.array([[np.maximum(self.fixed_point.to_fixed(s.cn_reconstruction.values), 1) for s in row]
                         for row in self.stages], dtype=np.int64)

    def cn_thresholds_real(self) -> np.ndarray:
        return np.array([[s.cn_quantizer.taus for s in row] for row in self.stages])

    def vn_reconstruction_real(self) -> np.ndarray:
        return np.array([[s.vn_reconstruction.values for s in row] for row in self.stages])

    def broadcast_layers(self, n_layers: int) -> "RcqParamSet":
        """Reuse a flooding design for every layer of a layered decoder."""
        if self.mode != "flooding":
            raise ValueError("only flooding designs can be broadcast")
        stages = tuple(tuple(row[0] for _ in range(n_layers)) for row in self.stages)
        trace = None if self.mi_trace is None else np.repeat(self.mi_trace[:, :1], n_layers, axis=1)
        return RcqParamSet("layered", self.cn_op, self.b_e, self.b_v, self.b_ic, stages,
                           self.design_ebno_db, self.channel_levels, self.clip, self.fixed_point,
                           trace, {**self.meta, "broadcast_from": "flooding"})

    # ---- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        fp = self.fixed_point

        def stage_dict(s: RcqStage) -> dict:
            d = {
                "vn_thresholds": s.vn_quantizer.taus.tolist(),
                "vn_thresholds_fixed": fp.thresholds_to_fixed(s.vn_quantizer.taus).tolist(),
                "cn_reconstruction": s.cn_reconstruction.values.tolist(),
                "cn_reconstruction_fixed": np.maximum(fp.to_fixed(s.cn_reconstruction.values), 1).tolist(),
            }
            if s.cn_quantizer is not None:
                d["cn_thresholds"] = s.cn_quantizer.taus.tolist()
                d["vn_reconstruction"] = s.vn_reconstruction.values.tolist()
            return d

        return {
            "format": "rcq-params",
            "version": FORMAT_VERSION,
            "mode": self.mode,
            "cn_op": self.cn_op,
            "b_e": self.b_e,
            "b_v": self.b_v,
            "b_ic": self.b_ic,
            "design_ebno_db": self.design_ebno_db,
            "fixed_point": {"total_bits": fp.total_bits, "frac_bits": fp.frac_bits},
            "clip": self.clip,
            "channel_levels": self.channel_levels.tolist(),
            "channel_levels_fixed": self.channel_fixed().tolist(),
            "n_iterations": self.n_iterations,
            "n_layers": self.n_layers,
            "mi_trace": None if self.mi_trace is None else self.mi_trace.tolist(),
            "meta": self.meta,
            "stages": [[stage_dict(s) for s in row] for row in self.stages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RcqParamSet":
        if d.get("format") != "rcq-params":
            raise ValueError("not an RCQ parameter file")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported parameter file version {d.get('version')}")
        b_e = int(d["b_e"])

        def stage(sd: dict) -> RcqStage:
            cq = vr = None
            if "cn_thresholds" in sd:
                cq = MagnitudeQuantizer(np.array(sd["cn_thresholds"]), b_e)
                vr = MagnitudeReconstruction(np.array(sd["vn_reconstruction"]))
            return RcqStage(MagnitudeQuantizer(np.array(sd["vn_thresholds"]), b_e),
                            MagnitudeReconstruction(np.array(sd["cn_reconstruction"])), cq, vr)

        fp = FixedPointFormat(**d["fixed_point"])
        return cls(d["mode"], d["cn_op"], b_e, int(d["b_v"]), d["b_ic"],
                   tuple(tuple(stage(s) for s in row) for row in d["stages"]),
                   float(d["design_ebno_db"]), np.array(d["channel_levels"]), float(d["clip"]), fp,
                   None if d.get("mi_trace") is None else np.array(d["mi_trace"]), d.get("meta", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "RcqParamSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def storage_bits(b_e: int, b_v: int) -> int:
    """Bits to store one msRCQ stage: ``(2**b_e - 1)`` magnitudes of ``b_v - 1`` bits."""
    return (2**b_e - 1) * (b_v - 1)
