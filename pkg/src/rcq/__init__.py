"""Reconstruction-computation-quantization (RCQ) LDPC decoders and their design tools."""

__version__ = "0.1.0"

from .channel import AwgnChannel, discretize_awgn, uniform_llr_quantizer  # noqa: E402
from .codes import QcBaseMatrix, SparseParityCheck, expand, ieee80211n_1296, load_base_matrix, parse_alist  # noqa: E402
from .dde import design, dde_flooding, dde_layer_specific, find_threshold  # noqa: E402
from .decoder import DecoderConfig, DecodeOutcome, make_decoder  # noqa: E402
from .params import FixedPointFormat, RcqParamSet, RcqStage  # noqa: E402
from .quantizer import JointLabelPmf, dp_optimal_quantizer, hdq  # noqa: E402
from .sim import StopRule, run_fer_point, run_sweep  # noqa: E402
