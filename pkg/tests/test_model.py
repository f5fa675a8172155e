import numpy as np
import pytest

from ctregions.errors import DimensionError, DomainError
from ctregions.linalg import mat_exp
from ctregions.model import (ARC_BY_REGION, REGION_IDS, ArcSequence, LtiSystem,
                             hamiltonian_bound, hamiltonian_free)


def scalar(a=-1.0, b=1.0, u_max=0.4):
    return LtiSystem([[a]], [b], 5.0, u_max, [-1.0], [1.0])


def test_demo_fields(demo):
    assert demo.n == 3
    assert demo.t_f == 5.0 and demo.u_max == 0.4
    assert demo.theta_volume == pytest.approx(5.2 * 1.8 * 1.4)


@pytest.mark.parametrize("kw,err", [
    (dict(t_f=0.0), DomainError),
    (dict(u_max=0.0), DomainError),
    (dict(u_max=-1.0), DomainError),
    (dict(theta_lo=[1.0]), DomainError),
    (dict(B=[1.0, 2.0]), DimensionError),
    (dict(A=[[1.0, 2.0]]), DimensionError),
])
def test_invalid_systems(kw, err):
    args = dict(A=[[-1.0]], B=[1.0], t_f=5.0, u_max=0.4, theta_lo=[-1.0], theta_hi=[1.0])
    args.update(kw)
    with pytest.raises(err):
        LtiSystem(**args)


def test_system_arrays_are_frozen(demo):
    with pytest.raises(ValueError):
        demo.A[0, 0] = 1.0


def test_catalog_has_five_cases():
    assert len(ArcSequence) == 5
    assert sorted(REGION_IDS.values()) == ["CR01", "CR02", "CR03", "CR04", "CR05"]
    assert ARC_BY_REGION["CR02"] is ArcSequence.UPPER_BA_THEN_FREE
    assert ARC_BY_REGION["CR05"] is ArcSequence.LOWER_BA_FULL
    assert ArcSequence.UPPER_BA_FULL.bound_sign == -1
    assert ArcSequence.LOWER_BA_THEN_FREE.bound_sign == 1
    assert ArcSequence.from_structure(1, True) is ArcSequence.LOWER_BA_THEN_FREE
    assert ArcSequence.from_structure(0, False) is ArcSequence.FREE_FULL


def test_hamiltonian_free_scalar():
    M = hamiltonian_free(scalar(a=-0.7, b=2.0))
    assert np.allclose(M, [[-0.7, -4.0], [-1.0, 0.7]])


def test_hamiltonian_free_demo(demo):
    M = hamiltonian_free(demo)
    assert M.shape == (6, 6)
    top_right = M[:3, 3:]
    expected = np.zeros((3, 3))
    expected[2, 2] = -1.0
    assert np.array_equal(top_right, expected)
    assert np.trace(M) == 0.0


def test_hamiltonian_bound_scalar():
    M = hamiltonian_bound(scalar(a=-0.7), 1)
    assert np.allclose(M, [[-0.7, 0.0, -0.4], [-1.0, 0.7, 0.0], [0.0, 0.0, 0.0]])


def test_hamiltonian_bound_structure(demo):
    for s in (1, -1):
        M = hamiltonian_bound(demo, s)
        assert np.all(M[-1] == 0.0)
        E = mat_exp(M, 1.7)
        assert np.allclose(E[-1], np.r_[np.zeros(6), 1.0], atol=1e-15)
    with pytest.raises(DomainError):
        hamiltonian_bound(demo, 0)
