import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flealab.errors import DomainError
from flealab.toy import (JointState, SGPackets, adversarial_bound_search, almost_ortho_check,
                         counterfactual_bound_check, diagonal_drift, drift_batch,
                         make_block_unitary, reduced_state, schmidt_decompose,
                         stern_gerlach_density)


def test_reduced_state_of_product():
    psi = JointState.product([1.0, 1.0j], [1.0, 0.0, 0.0])
    rho = reduced_state(psi).matrix
    assert np.allclose(rho, 0.5 * np.array([[1, -1j], [1j, 1]]))


@given(st.integers(2, 12), st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_schmidt_recomposes(d, seed):
    psi = JointState.random(d, np.random.default_rng(seed))
    s = schmidt_decompose(psi)
    assert np.allclose(s.recompose(), psi.amplitudes, atol=1e-12)
    assert np.sum(s.coefficients**2) == pytest.approx(1.0)


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_block_unitaries_are_unitary(seed):
    for u in (make_block_unitary(6, "diagonal", seed), make_block_unitary(6, "almost", seed, 0.05)):
        m = u.matrix
        assert np.allclose(m.conj().T @ m, np.eye(12), atol=1e-12)
    u = make_block_unitary(6, "almost", seed, 0.05)
    assert max(u.off_block_norms) <= 0.05


def test_diagonal_flavor_preserves_diagonal():
    worst = max(r.drift for _, r in drift_batch(8, "diagonal", None, range(200)))
    assert worst < 1e-12


def test_almost_flavor_within_bound():
    for _, r in drift_batch(8, "almost", 1e-2, range(100)):
        assert r.drift < r.sharp_bound < r.loose_bound


def test_almost_flavor_needs_eps():
    with pytest.raises(DomainError):
        make_block_unitary(4, "almost", 0)


def test_drift_seeded():
    a = drift_batch(6, "almost", 1e-3, [5])[0][1]
    b = drift_batch(6, "almost", 1e-3, [5])[0][1]
    assert a == b


def test_diagonal_drift_of_identity_like():
    u = make_block_unitary(4, "diagonal", 1)
    psi = JointState.random(4, np.random.default_rng(2))
    assert diagonal_drift(u, psi).drift < 1e-14


def test_counterfactual_bound_and_zero_case():
    assert counterfactual_bound_check(8, 1e-2, 1e-2, 0).holds
    zero = counterfactual_bound_check(8, 0.0, 0.0, 0)
    assert zero.lhs == 0.0 and zero.holds


def test_adversarial_search_stays_under_bound():
    b = adversarial_bound_search(4, 1e-2, 1e-2, n_angles=7)
    assert b.holds and b.ratio > 0.3


def test_almost_orthogonal_distance():
    for e in (0.0, 0.01, 0.5):
        r = almost_ortho_check(e, 200, 1)
        assert r.holds
    with pytest.raises(DomainError):
        almost_ortho_check(1.5)


def test_sg_full_line_matches_closed_form():
    a, b = 1 / math.sqrt(2), 1j / math.sqrt(2)
    pk = SGPackets.symmetric(1.0, 0.5)
    r = stern_gerlach_density(a, b, pk)
    expected = a * np.conj(b) * math.exp(-1.0 / (2 * 0.25))
    assert abs(r.state.matrix[0, 1] - expected) < 1e-10
    assert r.captured == pytest.approx(1.0, abs=1e-12)


def test_sg_half_line_minor_component():
    pk = SGPackets.symmetric(6.0, 1.0)
    a = b = 1 / math.sqrt(2)
    r = stern_gerlach_density(a, b, pk, (0.0, math.inf))
    mm, mp = pk.mass(-1, 0, math.inf), pk.mass(1, 0, math.inf)
    delta = r.state.matrix[1, 1].real
    assert delta > 0
    assert delta == pytest.approx(mm / (mm + mp), rel=1e-8)


def test_sg_rejects_bad_amplitudes():
    with pytest.raises(DomainError):
        stern_gerlach_density(1.0, 1.0, SGPackets.symmetric(1.0, 1.0))
