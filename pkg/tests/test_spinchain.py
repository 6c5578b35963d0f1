import numpy as np
import pytest

from flealab.errors import DomainError
from flealab.spinchain import (ChainOperator, ChainSpec, SpinFlea, basis_index,
                               chain_ground_analysis, dense_lowest, enumerate_spectrum,
                               lanczos_lowest, magnetization, sector_weights)


def test_basis_convention():
    assert basis_index([1, 1, 1]) == 0
    assert basis_index([-1, 1, 1]) == 1
    spec = ChainSpec(3)
    assert magnetization(spec)[0] == 3 and magnetization(spec)[7] == -3


def test_bounds_on_N():
    with pytest.raises(DomainError):
        ChainSpec(1)
    with pytest.raises(DomainError):
        ChainSpec(15)


def test_dense_matches_matvec():
    spec = ChainSpec(5, 0.7, "transverse", "ring")
    op = ChainOperator(spec, SpinFlea(3, 0.1))
    v = np.random.default_rng(0).standard_normal(spec.dim)
    assert np.allclose(op.apply(v), op.dense() @ v)
    assert np.allclose(op.dense(), op.dense().T)


@pytest.mark.parametrize("N", [2, 3, 5, 8])
def test_as_printed_matches_enumeration(N):
    for boundary in ("open", "ring"):
        spec = ChainSpec(N, 0.0, "as_printed", boundary)
        r = chain_ground_analysis(spec, k=2)
        assert np.array_equal(r.energies, enumerate_spectrum(spec)[:2])


def test_n2_flea_splitting_exact():
    r = chain_ground_analysis(ChainSpec(2), SpinFlea(0, 1e-6), k=2)
    assert r.splitting == 1e-6


def test_transverse_matches_dense():
    spec = ChainSpec(6, 0.5, "transverse", "open")
    r = lanczos_lowest(ChainOperator(spec), 3)
    w, _ = dense_lowest(spec, k=3)
    assert np.allclose(r.energies, w, atol=1e-10)


def test_sector_weights_sum_to_one():
    spec = ChainSpec(6, 0.5, "transverse", "ring")
    r = chain_ground_analysis(spec, k=2)
    for sw in r.sector_weights:
        assert sum(sw.values()) == pytest.approx(1.0)
    assert sector_weights(spec, np.eye(spec.dim)[0])[6] == 1.0


def test_flea_polarizes_more_with_size():
    pol = [chain_ground_analysis(ChainSpec(N, 0.5, "transverse", "ring"), SpinFlea(0, 1e-8),
                                 k=2).polarization for N in (4, 6, 8)]
    assert pol[0] < pol[1] < pol[2]
