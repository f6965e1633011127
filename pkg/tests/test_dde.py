import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcq.channel import AwgnChannel, uniform_llr_quantizer
from rcq.codes import QcBaseMatrix, make_quasi_regular_qc
from rcq.dde import (
    ThresholdNotFound,
    boxdot,
    boxplus_pmf,
    canonical_symmetric,
    circledast,
    cluster_anneal,
    dde_flooding,
    dde_layer_specific,
    design,
    find_threshold,
    ms_label_table,
)
from rcq.params import FixedPointFormat
from rcq.quantizer import JointLabelPmf, mutual_information

# LLR map {0: +0.5, 1: +2.0, 2: -0.5, 3: -2.0}
L4 = np.array([0.5, 2.0, -0.5, -2.0])
P4 = JointLabelPmf(np.vstack([np.exp(L4) / (1 + np.exp(L4)), 1 / (1 + np.exp(L4))]) / 4)


def symmetric_pmf(llrs, masses):
    llrs, m = np.asarray(llrs, float), np.asarray(masses, float)
    up = np.vstack([m * np.exp(llrs) / (1 + np.exp(llrs)), m / (1 + np.exp(llrs))])
    J = np.hstack([up[::-1, ::-1], up])
    return JointLabelPmf(J / J.sum())


@st.composite
def symmetric_pmfs(draw, half=None):
    n = half or draw(st.integers(1, 4))
    llrs = np.cumsum(draw(st.lists(st.floats(0.05, 2.0), min_size=n, max_size=n)))
    masses = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    return symmetric_pmf(llrs, masses)


def small_base(rows, cols, S=4, seed=0, deg=2):
    return make_quasi_regular_qc(rows, cols, S, deg, seed=seed, girth_passes=0)


# ---------------------------------------------------------------------------
# operators


def test_boxdot_example():
    p = JointLabelPmf(np.array([[0.4, 0.1], [0.1, 0.4]]))
    assert boxdot(p, p).joint[0, 0] == pytest.approx(0.32)


@given(symmetric_pmfs(), symmetric_pmfs())
@settings(max_examples=50, deadline=None)
def test_boxdot_llrs_add(p1, p2):
    out = boxdot(p1, p2)
    expected = (p1.llr[:, None] + p2.llr[None, :]).ravel()
    assert np.allclose(out.llr, expected, atol=1e-9)
    assert out.total() == pytest.approx(1.0, abs=1e-12)


def test_boxdot_with_a_known_label_shifts_llrs():
    sure = JointLabelPmf(np.array([[0.45, 0.05], [0.05, 0.45]]))
    out = boxdot(P4, sure)
    # pair (d, 0) carries llr(d) + ln 9
    assert np.allclose(out.llr[0::2], L4 + np.log(9))


@given(symmetric_pmfs(), symmetric_pmfs(), symmetric_pmfs())
@settings(max_examples=30, deadline=None)
def test_boxdot_commutative_and_associative_as_multisets(a, b, c):
    def key(p):
        cp, _ = canonical_symmetric(p)
        return cp.joint
    assert np.allclose(key(boxdot(a, b)), key(boxdot(b, a)), atol=1e-14)
    assert np.allclose(key(boxdot(boxdot(a, b), c)), key(boxdot(a, boxdot(b, c))), atol=1e-14)


def test_ms_table_examples():
    t = ms_label_table(P4).table
    assert t[1, 3] == 3
    assert t[0, 3] == 2
    assert np.array_equal(t, t.T)
    # the strongest positive label never constrains the min
    assert t[:, 1].tolist() == [0, 1, 2, 3]


@given(symmetric_pmfs())
@settings(max_examples=40, deadline=None)
def test_ms_table_matches_llr_min(p):
    if p.n_labels & (p.n_labels - 1):
        return
    t = ms_label_table(p).table
    l = p.llr
    target = np.sign(l[:, None]) * np.sign(l[None, :]) * np.minimum(np.abs(l[:, None]), np.abs(l[None, :]))
    assert np.allclose(l[t], target)


def brute_force_cn(pmfs, llr_of_label):
    """Enumerate every tuple of (x_i, d_i) and apply XOR / sign-min on the LLRs."""
    K = len(llr_of_label)
    out = np.zeros((2, K))
    index_of = {round(v, 12): i for i, v in enumerate(llr_of_label)}
    for xs in itertools.product((0, 1), repeat=len(pmfs)):
        for ds in itertools.product(range(K), repeat=len(pmfs)):
            w = np.prod([p.joint[x, d] for p, x, d in zip(pmfs, xs, ds)])
            if w == 0:
                continue
            ls = llr_of_label[list(ds)]
            v = np.prod(np.sign(ls)) * np.min(np.abs(ls))
            out[sum(xs) % 2, index_of[round(v, 12)]] += w
    return out


def test_circledast_four_label_example_matches_brute_force():
    table = ms_label_table(P4)
    out = circledast(P4, P4, table)
    assert np.allclose(out.joint, brute_force_cn([P4, P4], L4))


@pytest.mark.parametrize("degree", [2, 3, 4])
@pytest.mark.parametrize("half", [1, 2, 4])
def test_repeated_circledast_matches_brute_force(degree, half):
    rng = np.random.default_rng(degree * 10 + half)
    p = symmetric_pmf(np.cumsum(rng.uniform(0.1, 1.0, half)), rng.uniform(0.1, 1.0, half))
    table = ms_label_table(p)
    acc = p
    for _ in range(degree - 2):
        acc = circledast(acc, p, table)
    assert np.allclose(acc.joint, brute_force_cn([p] * (degree - 1), p.llr), atol=1e-15)


def test_circledast_with_perfect_knowledge_is_identity():
    # the perfect label must be the strongest positive one of the shared alphabet
    big = JointLabelPmf(np.array([[0.0, 0.0, 0.0, 0.5], [0.5, 0.0, 0.0, 0.0]]))
    p = symmetric_pmf([0.5, 2.0], [1.0, 1.0])
    table = ms_label_table(p)
    assert np.allclose(circledast(p, big, table).joint, p.joint)


@given(symmetric_pmfs())
@settings(max_examples=40, deadline=None)
def test_circledast_symmetric_and_degrading(p):
    if p.n_labels & (p.n_labels - 1):
        return
    out = circledast(p, p, ms_label_table(p))
    assert out.symmetry_error() < 1e-14
    assert out.mi() <= p.mi() + 1e-12


def test_boxplus_with_zero_llr_label():
    zero = JointLabelPmf(np.full((2, 1), 0.5))
    out = boxplus_pmf(P4, zero)
    assert np.allclose(out.llr, 0.0)


@pytest.mark.parametrize("l", [0.1, 0.7, 2.0, 5.0])
def test_boxplus_closed_form(l):
    p = symmetric_pmf([l], [1.0])
    out = boxplus_pmf(p, p)
    # pair (+l, +l) sits at index 3
    assert out.llr[3] == pytest.approx(np.log((np.exp(2 * l) + 1) / (2 * np.exp(l))))
    assert out.llr[3] == pytest.approx(2 * np.arctanh(np.tanh(l / 2) ** 2))


@given(symmetric_pmfs(), symmetric_pmfs())
@settings(max_examples=50, deadline=None)
def test_boxplus_contracts(p1, p2):
    out = boxplus_pmf(p1, p2)
    bound = np.minimum(np.abs(p1.llr)[:, None], np.abs(p2.llr)[None, :]).ravel()
    assert np.all(np.abs(out.llr) <= bound + 1e-9)


# ---------------------------------------------------------------------------
# canonical form and clustering


def test_canonical_form_merges_equal_llrs_and_mirrors():
    J = np.array([[0.1, 0.3, 0.05, 0.05], [0.3, 0.1, 0.05, 0.05]])
    c, err = canonical_symmetric(JointLabelPmf(J))
    assert err < 1e-15
    assert c.n_labels == 4  # zero-LLR mass is split into two labels
    assert np.allclose(c.llr, [-np.log(3), 0, 0, np.log(3)])
    assert c.symmetry_error() == 0.0


def test_cluster_identity_when_small():
    q, loss = cluster_anneal(P4, 8)
    assert q is P4 and loss == 0.0


def test_cluster_equal_llrs_lose_nothing():
    p = symmetric_pmf([1.0, 1.0, 2.0], [0.2, 0.3, 0.5])
    q, loss = cluster_anneal(p, 4)
    assert loss == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(sorted(q.llr), [-2, -1, 1, 2])


def test_cluster_beats_uniform_binning():
    rng = np.random.default_rng(1)
    J = rng.random((2, 256))
    p = JointLabelPmf(J / J.sum())
    q, loss = cluster_anneal(p, 64)
    assert q.n_labels == 64
    sp, _ = p.sorted_view()
    uniform = np.add.reduceat(sp.joint, np.arange(0, 256, 4), axis=1)
    assert loss <= p.mi() - mutual_information(uniform) + 1e-12


def test_cluster_keeps_symmetric_inputs_symmetric():
    rng = np.random.default_rng(2)
    p = symmetric_pmf(np.cumsum(rng.uniform(0.01, 0.3, 100)), rng.random(100))
    q, _ = cluster_anneal(p, 16)
    assert q.n_labels == 16
    assert q.symmetry_error() < 1e-15


# ---------------------------------------------------------------------------
# density evolution


@pytest.fixture(scope="module")
def tiny_base():
    # three rows of degree 3 or 4 and VN degree 2
    return QcBaseMatrix(np.array([[0, 1, 2, -1, 0], [1, -1, 0, 2, -1], [-1, 0, -1, 1, 2]]), 4)


def test_flooding_single_iteration_matches_brute_force(tiny_base):
    b = 3
    ch = uniform_llr_quantizer(AwgnChannel(0.8), b)
    params, state = dde_flooding(tiny_base, ch, b, 1)
    chp, _ = canonical_symmetric(ch.pmf)
    rows = tiny_base.mask.sum(axis=1)
    out = np.zeros((2, 2**b))
    for dc in np.unique(rows):
        w = dc * (rows == dc).sum() / rows.sum()
        out += w * brute_force_cn([chp] * (dc - 1), chp.llr)
    expected = np.log(out[0, 2**(b - 1):] / out[1, 2**(b - 1):])
    assert np.allclose(params.stages[0][0].cn_reconstruction.values, expected, rtol=1e-10)
    assert np.allclose(state.cn_pmfs[(1, 0)].joint, out, atol=1e-15)


def test_single_layer_layered_equals_flooding():
    base = QcBaseMatrix(np.array([[0, 1, 2, 3]]), 5)
    ch = uniform_llr_quantizer(AwgnChannel(0.7), 6)
    pf, _ = dde_flooding(base, ch, 3, 4)
    pl, _ = dde_layer_specific(base, ch, 3, 4)
    for sf, sl in zip(pf.stages, pl.stages):
        assert np.array_equal(sf[0].vn_quantizer.taus, sl[0].vn_quantizer.taus)
        assert np.array_equal(sf[0].cn_reconstruction.values, sl[0].cn_reconstruction.values)


@pytest.fixture(scope="module")
def layered_small():
    base = small_base(4, 12, S=8, seed=3, deg=3)
    return base, design(base, 2.5, 3, 8, 6, mode="layered", max_labels=256)


def test_layered_design_shapes_and_hygiene(layered_small):
    base, (params, state) = layered_small
    assert (params.n_iterations, params.n_layers) == (6, 4)
    assert state.max_norm_error < 1e-12
    assert state.max_sym_error < 1e-9
    for pmf in list(state.cn_pmfs.values()) + list(state.vn_pmfs.values()):
        assert pmf.joint.min() >= 0
        assert pmf.symmetry_error() < 1e-9


def test_layered_mi_non_decreasing(layered_small):
    _, (_, state) = layered_small
    assert np.all(np.diff(state.mi, axis=0) >= -1e-6)


def test_flooding_mi_non_decreasing(wifi_base):
    _, state = design(wifi_base, 1.8, 4, 10, 20)
    assert np.all(np.diff(state.mi[:, 0]) >= -1e-6)
    assert state.max_norm_error < 1e-12 and state.max_sym_error < 1e-9


def test_boxplus_design_dominates_min(qc10_base):
    _, smin = design(qc10_base, 3.0, 3, 8, 8, cn_op="min", max_labels=256)
    pb, sbox = design(qc10_base, 3.0, 3, 8, 8, cn_op="boxplus", max_labels=256)
    assert np.all(sbox.mi[:, 0] >= smin.mi[:, 0] - 1e-9)
    assert pb.stages[0][0].cn_quantizer is not None


def test_zero_information_channel_degenerates(qc10_base):
    try:
        params, state = design(qc10_base, -40.0, 3, 8, 2, max_labels=64)
    except ValueError:
        return
    assert state.mi.max() < 1e-3
    assert np.all(params.stages[-1][0].cn_reconstruction.values < 1e-2)


def test_design_is_deterministic(qc10_base):
    a, _ = design(qc10_base, 3.0, 4, 8, 5)
    b, _ = design(qc10_base, 3.0, 4, 8, 5)
    assert a.dumps() == b.dumps()


def test_binary_point_follows_channel_range_and_late_levels_saturate(qc10_base):
    p, _ = design(qc10_base, 4.0, 4, 8, 10, max_labels=256)
    fp = p.fixed_point
    l_ch = np.abs(p.channel_levels).max()
    assert fp == FixedPointFormat.for_range(8, l_ch)
    top = max(s.cn_reconstruction.values.max() for row in p.stages for s in row)
    assert top * fp.scale > fp.ext_max  # the final stages exceed the format
    assert p.cn_reconstruction_fixed().max() == fp.ext_max


def test_design_rejects_bad_arguments(qc10_base):
    with pytest.raises(ValueError):
        design(qc10_base, 3.0, 4, 8, 0)
    with pytest.raises(ValueError):
        design(qc10_base, 3.0, 4, 8, 5, max_labels=8)
    with pytest.raises(ValueError):
        design(qc10_base, 3.0, 4, 8, 5, mode="layered", cn_op="boxplus")


def test_threshold_monotone_in_eps_and_iterations(qc10_base):
    kw = dict(lo=1.0, hi=6.0, resolution=0.05, max_labels=256)
    t_strict = find_threshold(qc10_base, 3, 8, 10, eps=1e-4, **kw)
    t_loose = find_threshold(qc10_base, 3, 8, 10, eps=0.4, **kw)
    t_long = find_threshold(qc10_base, 3, 8, 20, eps=1e-4, **kw)
    assert t_loose <= t_strict
    assert t_long <= t_strict
    assert 1.0 < t_strict < 6.0


def test_threshold_reports_failure_at_upper_bracket(qc10_base):
    with pytest.raises(ThresholdNotFound):
        find_threshold(qc10_base, 3, 8, 2, eps=1e-6, lo=-2.0, hi=-1.0)
    with pytest.raises(ValueError):
        find_threshold(qc10_base, 3, 8, 2, eps=0.7)
