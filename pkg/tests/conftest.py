import numpy as np
import pytest

from rcq.codes import SparseParityCheck, expand, ieee80211n_1296, make_quasi_regular_qc, single_layer_partition

# pinned stand-in for a 10-layer, VN-degree-4 QC code
QC10_ARGS = dict(M=10, U=37, S=32, vn_degree=4, seed=7)

HAMMING_7_4 = np.array([
    [1, 1, 0, 1, 1, 0, 0],
    [1, 0, 1, 1, 0, 1, 0],
    [0, 1, 1, 1, 0, 0, 1],
])


@pytest.fixture(scope="session")
def wifi_base():
    return ieee80211n_1296()


@pytest.fixture(scope="session")
def wifi_code(wifi_base):
    return expand(wifi_base)


@pytest.fixture(scope="session")
def qc10_base():
    return make_quasi_regular_qc(**QC10_ARGS)


@pytest.fixture(scope="session")
def qc10_code(qc10_base):
    return expand(qc10_base)


@pytest.fixture(scope="session")
def hamming():
    return single_layer_partition(SparseParityCheck.from_dense(HAMMING_7_4))
