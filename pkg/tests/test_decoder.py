import itertools

import numpy as np
import pytest

from rcq.channel import AwgnChannel, ebno_to_sigma
from rcq.codes import QcBaseMatrix, SparseParityCheck, expand, gf2_nullspace, single_layer_partition
from rcq.dde import design
from rcq.decoder import (
    Decoder,
    DecoderConfig,
    _cn_float_row,
    _MS,
    _row_boxplus,
    cn_min_row,
    decode_baseline,
    decode_bprcq_flooding,
    decode_msrcq_flooding,
    decode_msrcq_layered,
    vn_add,
    vn_subtract,
)
from rcq.params import FixedPointFormat

from conftest import HAMMING_7_4

# a cycle-free Tanner graph on 10 bits: four checks chained through bits 2, 4 and 6
TREE_H = np.zeros((4, 10), dtype=np.uint8)
for r, cols in enumerate([(0, 1, 2), (2, 3, 4), (4, 5, 6), (6, 7, 8, 9)]):
    TREE_H[r, list(cols)] = 1

FP8 = FixedPointFormat(8, 3)


@pytest.fixture(scope="module")
def qc10_designs(qc10_base):
    flood, _ = design(qc10_base, 3.0, 4, 8, 10)
    layered, _ = design(qc10_base, 3.0, 4, 8, 10, mode="layered", max_labels=256)
    box, _ = design(qc10_base, 3.0, 4, 8, 10, cn_op="boxplus", max_labels=256)
    return {"flood": flood, "layered": layered, "box": box}


@pytest.fixture(scope="module")
def hamming_params():
    base = QcBaseMatrix(np.where(HAMMING_7_4 > 0, 0, -1), 1)
    return design(base, 4.0, 3, 8, 6, max_labels=128)[0]


def all_configs(designs):
    return {
        "msrcq": DecoderConfig("msrcq", params=designs["flood"]),
        "msrcq-layered": DecoderConfig("msrcq", "layered", params=designs["layered"]),
        "bprcq": DecoderConfig("bprcq", params=designs["box"]),
        "bp": DecoderConfig("bp"),
        "bp-layered": DecoderConfig("bp", "layered"),
        "minsum": DecoderConfig("minsum"),
        "minsum-layered": DecoderConfig("minsum", "layered"),
        "oms": DecoderConfig("oms", offset=0.5, fixed_point=FP8),
        "oms-layered": DecoderConfig("oms", "layered", offset=0.5, fixed_point=FP8),
    }


def random_codewords(code, count, rng):
    basis = gf2_nullspace(code.to_dense())
    coef = rng.integers(0, 2, (count, basis.shape[0]))
    return (coef @ basis) % 2


def map_posteriors(H, llr):
    """Bitwise MAP LLRs by enumerating every codeword of a small code."""
    n = H.shape[1]
    words = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)
    words = words[((words @ H.T) % 2 == 0).all(axis=1)]
    logw = ((1 - 2.0 * words) * llr).sum(axis=1) / 2
    out = np.empty(n)
    for v in range(n):
        out[v] = np.logaddexp.reduce(logw[words[:, v] == 0]) - np.logaddexp.reduce(logw[words[:, v] == 1])
    return out


# ---------------------------------------------------------------------------
# node rules


def test_cn_min_row_on_labels():
    # H = 4: labels 4..7 are positive with magnitude 0..3, labels 3..0 their negatives
    v2c = np.array([7, 2, 5, 6])
    c2v = np.zeros(4, dtype=np.int64)
    cn_min_row(v2c, c2v, 0, 4, 4)
    # one negative input: output signs flip for every other edge
    assert c2v.tolist() == [2, 5, 2, 2]
    v2c = np.array([6, 6, 7])
    cn_min_row(v2c, c2v, 0, 3, 4)
    assert c2v[:3].tolist() == [6, 6, 6]  # tied minima give every edge that label


def test_min_sum_cn_magnitude_is_min_of_extrinsic():
    vals = np.array([1.5, -0.25, 3.0, -2.0])
    out = np.empty(4)
    _cn_float_row(np.abs(vals), vals < 0, out, 4, _MS, 0.0)
    assert out.tolist() == [0.25, -1.5, 0.25, -0.25]
    _cn_float_row(np.abs(vals), vals < 0, out, 4, _MS, 0.5)
    assert out.tolist() == [0.0, -1.0, 0.0, -0.0]


def test_degree_two_boxplus_is_identity():
    out = np.empty(2)
    _row_boxplus(np.array([1.25, 4.0]), out, 2)
    assert out.tolist() == [4.0, 1.25]


def test_boxplus_row_matches_tanh_rule():
    rng = np.random.default_rng(0)
    vals = rng.uniform(0.1, 5.0, 6)
    out = np.empty(6)
    _row_boxplus(vals, out, 6)
    t = np.tanh(vals / 2)
    expected = [2 * np.arctanh(np.prod(np.delete(t, k))) for k in range(6)]
    assert np.allclose(out, expected, rtol=1e-12)


@pytest.mark.parametrize("post, old", [(13.0, 5.0), (-7.0, 4.0), (0.0, -3.0), (100.0, 100.0)])
def test_layered_bookkeeping_is_idempotent(post, old):
    bound = 1023.0
    assert vn_add(vn_subtract(post, old, bound), old, bound) == post


def test_layered_bookkeeping_saturates():
    assert vn_add(1000.0, 100.0, 1023.0) == 1023.0
    assert vn_subtract(-1000.0, 100.0, 1023.0) == -1023.0


# ---------------------------------------------------------------------------
# whole-frame behaviour


@pytest.mark.parametrize("name", ["msrcq", "msrcq-layered", "bprcq", "bp", "bp-layered", "minsum",
                                  "minsum-layered", "oms", "oms-layered"])
def test_noiseless_frames_decode_in_one_iteration(qc10_code, qc10_designs, name):
    cfg = all_configs(qc10_designs)[name]
    dec = Decoder(qc10_code, cfg, sigma=0.5)
    out = dec.decode(np.ones(qc10_code.n))
    assert out.success and out.iterations_used == 1
    assert not out.hard_decision.any()


def test_single_flipped_strong_label_is_corrected(qc10_code, qc10_designs):
    p = qc10_designs["flood"]
    top = 2**p.b_v - 1
    labels = np.full(qc10_code.n, top)
    labels[17] = 0
    out = decode_msrcq_flooding(qc10_code, labels, DecoderConfig("msrcq", params=p))
    assert out.success and out.iterations_used <= 2 and not out.hard_decision.any()


def test_hamming_single_error(hamming, hamming_params):
    cfg = DecoderConfig("msrcq", params=hamming_params)
    dec = Decoder(hamming, cfg)
    y = np.full(7, 0.9)
    y[0] = -0.3
    out = dec.decode(y)
    assert out.success and not out.hard_decision.any()


def test_single_layer_layered_matches_flooding():
    base = QcBaseMatrix(np.array([[0, 1, 2, 3]]), 5)
    code = expand(base)
    p, _ = design(base, 2.0, 3, 8, 6, max_labels=128)
    flood = DecoderConfig("msrcq", params=p, max_iterations=6)
    lay = DecoderConfig("msrcq", "layered", params=p.broadcast_layers(1), max_iterations=6)
    rng = np.random.default_rng(5)
    for _ in range(300):
        labels = rng.integers(100, 256, code.n)
        a = decode_msrcq_flooding(code, labels, flood)
        b = decode_msrcq_layered(code, labels, lay)
        assert (a.success, a.iterations_used) == (b.success, b.iterations_used)
        assert np.array_equal(a.hard_decision, b.hard_decision)
        assert np.array_equal(a.posterior_trace, b.posterior_trace)


@pytest.mark.parametrize("name", ["msrcq", "msrcq-layered", "bprcq", "bp", "bp-layered", "minsum", "oms",
                                  "oms-layered"])
def test_sign_mirror_symmetry(qc10_code, qc10_designs, name):
    """Flipping the channel signs on a codeword's support flips the decisions on that support."""
    cfg = all_configs(qc10_designs)[name]
    sigma = ebno_to_sigma(2.0, 0.73)
    dec = Decoder(qc10_code, cfg, sigma=sigma)
    rng = np.random.default_rng(9)
    words = random_codewords(qc10_code, 125, rng)
    for c in words:
        y = 1.0 + sigma * rng.standard_normal(qc10_code.n)
        a = dec.decode(y)
        b = dec.decode(np.where(c == 1, -y, y))
        assert (a.success, a.iterations_used) == (b.success, b.iterations_used)
        assert np.array_equal(a.hard_decision ^ c.astype(np.int8), b.hard_decision)
        assert np.allclose(a.posterior_trace, b.posterior_trace)


def test_oms_with_zero_offset_is_min_sum(wifi_code):
    sigma = ebno_to_sigma(1.5, 0.5)
    oms = Decoder(wifi_code, DecoderConfig("oms", offset=0.0, fixed_point=FP8), sigma)
    ms = Decoder(wifi_code, DecoderConfig("minsum", fixed_point=FP8), sigma)
    rng = np.random.default_rng(3)
    for _ in range(200):
        y = 1.0 + sigma * rng.standard_normal(wifi_code.n)
        a, b = oms.decode(y), ms.decode(y)
        assert (a.success, a.iterations_used) == (b.success, b.iterations_used)
        assert np.array_equal(a.hard_decision, b.hard_decision)


def test_bp_on_a_tree_is_map():
    code = single_layer_partition(SparseParityCheck.from_dense(TREE_H))
    cfg = DecoderConfig("bp", max_iterations=8, early_exit=False)
    rng = np.random.default_rng(1)
    for _ in range(50):
        llr = rng.normal(1.0, 1.5, 10)
        out = decode_baseline(code, llr, cfg)
        post = map_posteriors(TREE_H, llr)
        assert np.array_equal(out.hard_decision, (post < 0).astype(np.int8))
        assert out.posterior_trace[-1] == pytest.approx(np.abs(post).mean(), rel=1e-9)


def test_large_label_alphabet_tracks_min_sum(qc10_base, qc10_code):
    # at a moderate SNR both decoders agree on at least 99% of frames
    p, _ = design(qc10_base, 4.0, 6, 10, 20, max_labels=256)
    sigma = ebno_to_sigma(4.0, qc10_base.design_rate)
    rq = Decoder(qc10_code, DecoderConfig("msrcq", params=p, max_iterations=20))
    ms = Decoder(qc10_code, DecoderConfig("minsum", max_iterations=20), sigma)
    rng = np.random.default_rng(2)
    same = 0
    for _ in range(300):
        y = 1.0 + sigma * rng.standard_normal(qc10_code.n)
        same += np.array_equal(rq.decode(y).hard_decision, ms.decode(y).hard_decision)
    assert same >= 297


def test_two_bit_messages_are_supported(qc10_base, qc10_code):
    p, _ = design(qc10_base, 3.5, 2, 8, 10)
    out = Decoder(qc10_code, DecoderConfig("msrcq", params=p)).decode(np.ones(qc10_code.n))
    assert out.success and out.iterations_used == 1


def test_success_implies_zero_syndrome_and_trace_lengths(wifi_code):
    sigma = ebno_to_sigma(1.2, 0.5)
    rng = np.random.default_rng(4)
    dec = Decoder(wifi_code, DecoderConfig("minsum", max_iterations=30), sigma)
    full = Decoder(wifi_code, DecoderConfig("minsum", max_iterations=30, early_exit=False), sigma)
    for _ in range(40):
        y = 1.0 + sigma * rng.standard_normal(wifi_code.n)
        out = dec.decode(y)
        if out.success:
            assert not wifi_code.syndrome(out.hard_decision).any()
            assert len(out.posterior_trace) == out.iterations_used
        else:
            assert out.iterations_used == 30
        f = full.decode(y)
        assert f.iterations_used == 30 and len(f.posterior_trace) == 30
        assert f.success == out.success
        if out.success:
            assert np.array_equal(f.hard_decision, out.hard_decision)


def test_bprcq_degree_two_rows_pass_messages_through():
    # two bits joined by a single check: each bit's extrinsic is the other's channel value
    code = single_layer_partition(SparseParityCheck.from_dense(np.array([[1, 1]])))
    base = QcBaseMatrix(np.array([[0, 0]]), 1)
    p, _ = design(base, 2.0, 3, 8, 2, cn_op="boxplus", max_labels=64)
    out = decode_bprcq_flooding(code, np.array([255, 100]), DecoderConfig("bprcq", params=p, max_iterations=2))
    assert out.success and not out.hard_decision.any()


def test_config_validation(qc10_designs):
    p = qc10_designs["flood"]
    with pytest.raises(ValueError):
        DecoderConfig("magic")
    with pytest.raises(ValueError):
        DecoderConfig("msrcq")
    with pytest.raises(ValueError):
        DecoderConfig("msrcq", params=p, b_e=3)
    with pytest.raises(ValueError):
        DecoderConfig("msrcq", params=p, b_v=10)
    with pytest.raises(ValueError):
        DecoderConfig("bprcq", params=p)
    with pytest.raises(ValueError):
        DecoderConfig("msrcq", "layered", params=p)
    with pytest.raises(ValueError):
        DecoderConfig("msrcq", params=qc10_designs["layered"])
    with pytest.raises(ValueError):
        DecoderConfig("bprcq", "layered", params=qc10_designs["box"])
    with pytest.raises(ValueError):
        DecoderConfig("oms", fixed_point=FP8)
    with pytest.raises(ValueError):
        DecoderConfig("oms", offset=0.5)
    with pytest.raises(ValueError):
        DecoderConfig("bp", max_iterations=0)


def test_decoder_input_validation(qc10_code, qc10_designs, wifi_code):
    dec = Decoder(qc10_code, DecoderConfig("msrcq", params=qc10_designs["flood"]))
    with pytest.raises(ValueError):
        dec.decode_labels(np.full(qc10_code.n, 256))
    with pytest.raises(ValueError):
        dec.decode_llr(np.ones(qc10_code.n))
    with pytest.raises(ValueError):
        Decoder(qc10_code, DecoderConfig("bp")).decode(np.ones(qc10_code.n))
    with pytest.raises(ValueError):
        # ten-layer parameters on a twelve-layer code
        Decoder(wifi_code, DecoderConfig("msrcq", "layered", params=qc10_designs["layered"]))
    with pytest.raises(ValueError):
        decode_msrcq_layered(qc10_code, np.zeros(qc10_code.n, dtype=int), DecoderConfig("msrcq", params=qc10_designs["flood"]))


def test_layered_needs_fewer_iterations_than_flooding(qc10_base, qc10_code, qc10_designs):
    sigma = ebno_to_sigma(3.0, qc10_base.design_rate)
    flood = Decoder(qc10_code, DecoderConfig("msrcq", params=qc10_designs["flood"], max_iterations=10))
    lay = Decoder(qc10_code, DecoderConfig("msrcq", "layered", params=qc10_designs["layered"], max_iterations=10))
    rng = np.random.default_rng(8)
    it_f = it_l = 0
    for _ in range(200):
        y = 1.0 + sigma * rng.standard_normal(qc10_code.n)
        it_f += flood.decode(y).iterations_used
        it_l += lay.decode(y).iterations_used
    assert it_l < it_f
