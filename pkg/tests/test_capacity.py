import math

import numpy as np
import pytest

from semqam.capacity import (
    ConvergenceError,
    blahut_arimoto,
    entropy,
    mutual_information,
    validate_distribution,
)
from semqam.channel import AwgnChannel, dmc_analytic
from semqam.constellation import make_qam


def bsc(p):
    return np.array([[1 - p, p], [p, 1 - p]])


def h2(p):
    return -(p * math.log2(p) + (1 - p) * math.log2(1 - p))


def test_entropy_values():
    assert entropy(np.full(16, 1 / 16)) == pytest.approx(4.0, abs=1e-12)
    assert entropy(np.eye(8)[0]) == 0.0
    assert entropy(np.array([0.5, 0.25, 0.25])) == pytest.approx(1.5, abs=1e-12)


def test_validate_distribution_errors():
    with pytest.raises(ValueError, match="negative"):
        validate_distribution(np.array([1.1, -0.1]))
    with pytest.raises(ValueError, match="sums to"):
        validate_distribution(np.array([0.5, 0.4]))
    with pytest.raises(ValueError, match="vector"):
        validate_distribution(np.eye(2))


def test_mutual_information_identity_channel():
    p = np.full(16, 1 / 16)
    assert mutual_information(p, np.eye(16)) == pytest.approx(4.0, abs=1e-12)


def test_mutual_information_useless_channel():
    w = np.tile(np.array([0.3, 0.7]), (4, 1))
    for p in (np.full(4, 0.25), np.array([0.7, 0.1, 0.1, 0.1])):
        assert mutual_information(p, w) == pytest.approx(0.0, abs=1e-12)


def test_mutual_information_bsc():
    want = 1 - h2(0.1)
    assert mutual_information(np.array([0.5, 0.5]), bsc(0.1)) == pytest.approx(want, abs=1e-12)


def test_mutual_information_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        mutual_information(np.array([0.5, 0.5]), np.eye(3))


def test_ba_identity_channel():
    res = blahut_arimoto(np.eye(4), tol=1e-9)
    assert abs(res.capacity_bits - 2.0) <= 1e-9
    assert np.allclose(res.input_dist, 0.25, atol=1e-9)
    assert res.gap <= 1e-9


def test_ba_bsc():
    res = blahut_arimoto(bsc(0.1))
    assert res.capacity_bits == pytest.approx(1 - h2(0.1), abs=1e-6)
    assert np.allclose(res.input_dist, 0.5, atol=1e-6)


def test_ba_qam_dmc_beats_uniform():
    w = dmc_analytic(make_qam(16), AwgnChannel(12.0))
    res = blahut_arimoto(w, tol=1e-10)
    assert 0.0 <= res.capacity_bits <= 4.0
    uniform = np.full(16, 1 / 16)
    assert res.capacity_bits >= mutual_information(uniform, w) - 1e-9


def test_ba_lower_bounds_monotone():
    w = dmc_analytic(make_qam(16), AwgnChannel(6.0))
    res = blahut_arimoto(w, tol=1e-10)
    lbs = np.array(res.lower_bounds)
    assert res.iterations > 0
    assert np.all(np.diff(lbs) >= -1e-12)


def test_ba_symmetric_channel_uniform_input():
    # cyclic channel: invariant under a transitive permutation group
    row = np.array([0.7, 0.2, 0.1, 0.0])
    w = np.array([np.roll(row, i) for i in range(4)])
    res = blahut_arimoto(w, tol=1e-10)
    assert np.allclose(res.input_dist, 0.25, atol=1e-6)


def test_ba_capacity_entropy_sandwich():
    w = dmc_analytic(make_qam(16), AwgnChannel(10.0))
    res = blahut_arimoto(w)
    assert res.capacity_bits <= entropy(res.input_dist) + 1e-9
    assert entropy(res.input_dist) <= 4.0 + 1e-12


def test_ba_non_convergence_error():
    z = np.array([[1.0, 0.0], [0.4, 0.6]])  # asymmetric, needs iterations
    with pytest.raises(ConvergenceError) as exc:
        blahut_arimoto(z, tol=1e-12, max_iter=0)
    assert exc.value.gap > 0


def test_ba_rejects_bad_matrix():
    with pytest.raises(ValueError):
        blahut_arimoto(np.array([[0.9, 0.2], [0.5, 0.5]]))
    with pytest.raises(ValueError):
        blahut_arimoto(np.eye(2), tol=0.0)
