import math

import numpy as np
import pytest

from flealab.bohr import (ClassicalState, PhaseSpaceGrid, berezin_quantize, bump,
                          coherent_state, double_well_limit, ground_state_family,
                          husimi_measure, operator_expectation, point_state,
                          weak_convergence_check, windowed)
from flealab.core import default_flea, default_grid, make_grid
from flealab.errors import CoverageError, DomainError


def test_coherent_state_moments():
    g = default_grid()
    c = coherent_state(0.5, 0.7, 0.05, g)
    mean, var = c.position_moments()
    assert mean == pytest.approx(0.7, abs=1e-10)
    assert var == pytest.approx(0.05 / 2, rel=1e-6)
    assert c.mean_momentum(0.05) == pytest.approx(0.5, abs=1e-6)


def test_coherent_state_rejects_edge():
    with pytest.raises(DomainError):
        coherent_state(0.0, 3.8, 0.05, default_grid())


def test_husimi_of_coherent_state():
    hb = 0.05
    mu = husimi_measure(coherent_state(0.0, 0.7, hb, default_grid()), hb)
    assert mu.mass == pytest.approx(1.0, abs=1e-3)
    mp, mq = mu.mean()
    assert mp == pytest.approx(0.0, abs=1e-3) and mq == pytest.approx(0.7, abs=2e-3)
    assert mu.density.min() >= -1e-14


def test_husimi_peak_value():
    # Q(p, q) of a coherent state at its own centre is 1/(2 pi hbar)
    hb = 0.05
    pg = PhaseSpaceGrid((-1.0, 1.0), (-1.3, 2.7), 101, 101)
    q0 = float(pg.q[50])
    mu = husimi_measure(coherent_state(float(pg.p[50]), q0, hb, default_grid()), hb, pg)
    assert mu.density.max() == pytest.approx(1 / (2 * math.pi * hb), rel=1e-6)


def test_coverage_error_on_small_grid():
    hb = 0.05
    pg = PhaseSpaceGrid((-0.5, 0.5), (-0.5, 0.5), 32, 32)
    with pytest.raises(CoverageError):
        husimi_measure(coherent_state(0.0, 0.7, hb, default_grid()), hb, pg)


def test_lobe_masses():
    fam = ground_state_family()
    left, right = husimi_measure(fam(0.05), 0.05).half_plane_masses()
    assert left == pytest.approx(0.5, abs=0.01) and right == pytest.approx(0.5, abs=0.01)
    flea = ground_state_family(flea=default_flea(1.0, 0.01))
    left, right = husimi_measure(flea(0.05), 0.05).half_plane_masses()
    assert left > 0.99


def test_classical_state_validation():
    with pytest.raises(DomainError):
        ClassicalState(((((0.0, 1.0), 0.7)),))
    s = double_well_limit()
    assert s.pair(lambda p, q: q**2) == pytest.approx(1.0)
    assert point_state(0.0, -1.0).pair(lambda p, q: q) == -1.0


def test_weak_convergence_needs_decreasing_hbar():
    with pytest.raises(DomainError):
        weak_convergence_check([0.1, 0.2, 0.05], ground_state_family(), bump(0, 1, 0.8),
                               double_well_limit())


def test_berezin_identity_and_symmetry():
    g = make_grid(-4, 4, 384)
    hb = 0.1
    one = windowed(lambda p, q: np.ones_like(p), ((-2.9, 2.9), (-1.9, 1.9)), "one")
    Q1 = berezin_quantize(one, hb, g)
    assert np.abs(Q1 - Q1.conj().T).max() < 1e-12
    psi = coherent_state(0.3, 0.2, hb, g)
    err = math.sqrt(np.sum(np.abs(Q1 @ psi.amplitudes - psi.amplitudes) ** 2) * g.spacing)
    assert err < 1e-3


def test_berezin_position_moment():
    # Q(q) acts as x; Q(q^2) acts as x^2 + hbar/2
    g = make_grid(-4, 4, 384)
    hb = 0.1
    psi = coherent_state(0.0, 0.4, hb, g)
    win = ((-2.9, 2.9), (-1.9, 1.9))
    mean, var = psi.position_moments()
    qop = berezin_quantize(windowed(lambda p, q: q, win, "q"), hb, g)
    q2op = berezin_quantize(windowed(lambda p, q: q * q, win, "q2"), hb, g)
    assert operator_expectation(qop, psi).real == pytest.approx(mean, abs=1e-4)
    assert operator_expectation(q2op, psi).real == pytest.approx(var + mean**2 + hb / 2, abs=1e-4)


def test_berezin_rejects_edge_support():
    with pytest.raises(CoverageError):
        berezin_quantize(lambda p, q: np.ones_like(p), 0.1, make_grid(-4, 4, 128))
