"""Coherent states, Husimi measures and Berezin quantisation on a 1D grid.

Phase-space integrals use the midpoint rule on a uniform (p, q) grid. Both the
Husimi density and the Berezin operator factor into a Gaussian in q times a
plane wave in p, so each reduces to a few dense matrix products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Grid, ModelParams, WaveFunction, default_grid
from .eigen import lowest_eigenpairs
from .errors import CoverageError, DomainError
from .spectral import double_well_operator, doublet_ground_state, resolved_splitting

MASS_FLOOR = 0.999


@dataclass(frozen=True)
class PhaseSpaceGrid:
    p_range: tuple = (-3.0, 3.0)
    q_range: tuple = (-2.0, 2.0)
    n_p: int = 128
    n_q: int = 128

    def __post_init__(self):
        if not (self.p_range[1] > self.p_range[0] and self.q_range[1] > self.q_range[0]):
            raise DomainError("phase-space ranges must be increasing")
        if self.n_p < 1 or self.n_q < 1:
            raise DomainError("phase-space grid needs at least one cell per axis")

    @property
    def dp(self) -> float:
        return (self.p_range[1] - self.p_range[0]) / self.n_p

    @property
    def dq(self) -> float:
        return (self.q_range[1] - self.q_range[0]) / self.n_q

    @property
    def cell_area(self) -> float:
        return self.dp * self.dq

    @property
    def p(self) -> np.ndarray:
        return self.p_range[0] + (np.arange(self.n_p) + 0.5) * self.dp

    @property
    def q(self) -> np.ndarray:
        return self.q_range[0] + (np.arange(self.n_q) + 0.5) * self.dq

    def mesh(self):
        """(P, Q) arrays of shape (n_p, n_q)."""
        return np.meshgrid(self.p, self.q, indexing="ij")

    def cell_of(self, p: float, q: float) -> tuple:
        i = int(np.clip((p - self.p_range[0]) // self.dp, 0, self.n_p - 1))
        j = int(np.clip((q - self.q_range[0]) // self.dq, 0, self.n_q - 1))
        return i, j

    def to_dict(self) -> dict:
        return {"p_range": list(self.p_range), "q_range": list(self.q_range),
                "n_p": self.n_p, "n_q": self.n_q}


def default_phase_grid(a: float = 1.0) -> PhaseSpaceGrid:
    return PhaseSpaceGrid((-3.0, 3.0), (-2.0 * a, 2.0 * a), 128, 128)


@dataclass(frozen=True, eq=False)
class PhaseSpaceMeasure:
    grid: PhaseSpaceGrid
    density: np.ndarray  # (n_p, n_q)
    hbar: float

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.grid.cell_area)

    def integrate(self, f) -> float:
        P, Q = self.grid.mesh()
        return float(np.sum(self.density * f(P, Q)) * self.grid.cell_area)

    def mean(self) -> tuple:
        P, Q = self.grid.mesh()
        w = self.density / self.density.sum()
        return float(np.sum(w * P)), float(np.sum(w * Q))

    def half_plane_masses(self) -> tuple:
        """(mass at q < 0, mass at q > 0)."""
        q = self.grid.q
        area = self.grid.cell_area
        return (float(self.density[:, q < 0].sum() * area),
                float(self.density[:, q > 0].sum() * area))

    def rows(self):
        P, Q = self.grid.mesh()
        for p, q, d in zip(P.ravel(), Q.ravel(), self.density.ravel()):
            yield float(p), float(q), float(d)


@dataclass(frozen=True)
class ClassicalState:
    atoms: tuple  # ((p, q), weight) pairs

    def __post_init__(self):
        weights = [w for _, w in self.atoms]
        if any(w < 0 for w in weights):
            raise DomainError("atom weights must be non-negative")
        if abs(math.fsum(weights) - 1.0) > 4 * np.finfo(float).eps:
            raise DomainError("atom weights must sum to 1")

    def pair(self, f) -> float:
        return math.fsum(w * float(f(np.float64(p), np.float64(q))) for (p, q), w in self.atoms)


def double_well_limit(a: float = 1.0) -> ClassicalState:
    """Equal mixture of the two classical ground states (p=0, q=+-a)."""
    return ClassicalState((((0.0, a), 0.5), ((0.0, -a), 0.5)))


def point_state(p: float, q: float) -> ClassicalState:
    return ClassicalState((((p, q), 1.0),))


@dataclass(frozen=True)
class TestFunction:
    """A phase-space function that vanishes outside ``support`` ((p0, p1), (q0, q1))."""

    __test__ = False  # keep pytest from collecting this class

    func: Callable
    support: tuple
    name: str = "f"

    def __call__(self, p, q):
        (p0, p1), (q0, q1) = self.support
        inside = (p >= p0) & (p <= p1) & (q >= q0) & (q <= q1)
        return np.where(inside, self.func(p, q), 0.0)


def bump(p0: float, q0: float, radius: float, name: str | None = None) -> TestFunction:
    """Smooth compactly supported bump exp(1 - 1/(1 - r^2)) of unit height."""

    def f(p, q):
        r2 = ((p - p0) ** 2 + (q - q0) ** 2) / radius**2
        with np.errstate(divide="ignore", over="ignore"):
            out = np.exp(1.0 - 1.0 / (1.0 - np.minimum(r2, 1.0)))
        return np.where(r2 < 1.0, out, 0.0)

    support = ((p0 - radius, p0 + radius), (q0 - radius, q0 + radius))
    return TestFunction(f, support, name or f"bump({p0},{q0},{radius})")


def windowed(func: Callable, support: tuple, name: str) -> TestFunction:
    return TestFunction(func, support, name)


def classical_hamiltonian(params: ModelParams):
    """h0(p, q) = p^2/2m + (lam/8)(q^2 - a^2)^2."""
    m, lam, a = params.mass, params.lam, params.a
    return lambda p, q: p**2 / (2 * m) + lam / 8.0 * (q**2 - a**2) ** 2


# -- coherent states ------------------------------------------------------------

def _gaussians(qs, hbar, grid):
    x = grid.x
    return np.exp(-((x[None, :] - np.asarray(qs)[:, None]) ** 2) / (2.0 * hbar))


def coherent_state(p: float, q: float, hbar: float, grid: Grid) -> WaveFunction:
    """(pi hbar)^(-1/4) exp(-ipq/2hbar) exp(ipx/hbar) exp(-(x-q)^2/2hbar) on the grid."""
    if not hbar > 0:
        raise DomainError("hbar must be positive")
    margin = 5.0 * math.sqrt(hbar)
    if grid.periodic:
        raise DomainError("coherent states need a Dirichlet grid")
    if not (grid.x_min + margin <= q <= grid.x_max - margin):
        raise DomainError(f"q={q} is closer than 5 sqrt(hbar) to the grid edge")
    x = grid.x
    vals = ((math.pi * hbar) ** -0.25 * np.exp(-1j * p * q / (2 * hbar))
            * np.exp(1j * p * x / hbar) * np.exp(-((x - q) ** 2) / (2 * hbar)))
    tail = math.erfc((min(q - grid.x_min, grid.x_max - q)) / math.sqrt(hbar))
    if tail > 1e-8:
        raise DomainError(f"coherent state tail mass {tail:.2e} leaks past the boundary")
    return WaveFunction.normalized(grid, vals)


def _overlaps(vec, hbar, grid, pgrid):
    """A[i, j] = <Phi^(p_i, q_j), vec> for a grid vector."""
    x = grid.x
    h = grid.spacing
    g = _gaussians(pgrid.q, hbar, grid) * (vec * h)[None, :]  # (n_q, n)
    plane = np.exp(-1j * np.outer(pgrid.p, x) / hbar)  # (n_p, n)
    a = plane @ g.T  # (n_p, n_q)
    P, Q = pgrid.mesh()
    return (math.pi * hbar) ** -0.25 * np.exp(1j * P * Q / (2 * hbar)) * a


def _as_mixture(state):
    if isinstance(state, WaveFunction):
        return [(1.0, np.asarray(state.amplitudes))]
    arr = np.asarray(state)
    if arr.ndim == 1:
        return [(1.0, arr)]
    if arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        # density matrix in the h-weighted inner product: rho @ v with weights h
        w, v = np.linalg.eigh(0.5 * (arr + arr.conj().T))
        return [(float(wi), v[:, i]) for i, wi in enumerate(w) if wi > 1e-14]
    raise DomainError("state must be a WaveFunction, a grid vector or a square density matrix")


def husimi_measure(state, hbar: float, pgrid: PhaseSpaceGrid | None = None,
                   grid: Grid | None = None) -> PhaseSpaceMeasure:
    """Density <Phi^(p,q)|rho|Phi^(p,q)>/(2 pi hbar) at each cell centre.

    A density matrix must be given in grid-vector form normalised so that
    its eigenvectors carry unit h-weighted norm; eigenvectors are rescaled
    here accordingly.
    """
    if grid is None:
        if not isinstance(state, WaveFunction):
            raise DomainError("a grid is required for raw arrays")
        grid = state.grid
    pgrid = pgrid or PhaseSpaceGrid()
    dens = np.zeros((pgrid.n_p, pgrid.n_q))
    for weight, vec in _as_mixture(state):
        norm = math.sqrt(float(np.sum(np.abs(vec) ** 2)) * grid.spacing)
        dens += weight * np.abs(_overlaps(vec / norm, hbar, grid, pgrid)) ** 2
    dens /= 2.0 * math.pi * hbar
    measure = PhaseSpaceMeasure(pgrid, dens, hbar)
    if measure.mass < MASS_FLOOR:
        raise CoverageError(f"phase-space grid captures mass {measure.mass:.6f} < {MASS_FLOOR}")
    return measure


def berezin_quantize(f, hbar: float, grid: Grid, pgrid: PhaseSpaceGrid | None = None
                     ) -> np.ndarray:
    """Matrix of Q_hbar(f) acting on grid vectors (the quadrature weight h is included).

    Raises CoverageError when f does not vanish on the boundary cells, i.e.
    its support is not inside the phase-space grid.
    """
    pgrid = pgrid or PhaseSpaceGrid()
    P, Q = pgrid.mesh()
    fv = np.asarray(f(P, Q), dtype=float) * np.ones_like(P)
    edge = np.concatenate([fv[0], fv[-1], fv[:, 0], fv[:, -1]])
    if np.any(edge != 0.0):
        raise CoverageError("test function support reaches the phase-space grid boundary")
    x = grid.x
    n = len(x)
    diffs = (np.arange(n) - np.arange(n)[:, None])  # k - j
    # Toeplitz generator over lags: sum_p f(p,q) exp(i p (x_j - x_k)/hbar)
    lags = -np.arange(-(n - 1), n) * grid.spacing
    plane = np.exp(1j * np.outer(lags, pgrid.p) / hbar)  # (2n-1, n_p)
    kernel = plane @ fv  # (2n-1, n_q)
    gauss = _gaussians(pgrid.q, hbar, grid)
    pref = (math.pi * hbar) ** -0.5 * pgrid.cell_area / (2.0 * math.pi * hbar) * grid.spacing
    out = np.zeros((n, n), complex)
    idx = diffs + (n - 1)
    for j in np.nonzero(np.any(fv != 0.0, axis=0))[0]:
        g = gauss[j]
        out += np.outer(g, g) * kernel[idx, j]
    return pref * out


def operator_expectation(op: np.ndarray, psi: WaveFunction) -> complex:
    v = np.asarray(psi.amplitudes)
    return complex(np.vdot(v, op @ v) * psi.grid.spacing)


# -- weak convergence -----------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceTable:
    hbar: np.ndarray
    pairing: np.ndarray
    limit_pairing: float
    abs_error: np.ndarray
    test_function: str = "f"
    masses: np.ndarray = field(default=None)

    @property
    def monotone_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.abs_error) < 0))

    def rows(self):
        for h, pr, e in zip(self.hbar, self.pairing, self.abs_error):
            yield float(h), float(pr), float(self.limit_pairing), float(e)


def weak_convergence_check(hbar_values: Sequence[float], state_family: Callable,
                           f: TestFunction, limit: ClassicalState,
                           pgrid: PhaseSpaceGrid | None = None) -> ConvergenceTable:
    """|int f d mu_hbar - sum_i w_i f(atom_i)| along a decreasing hbar sequence."""
    hb = [float(h) for h in hbar_values]
    if len(hb) < 3 or any(b >= a for a, b in zip(hb, hb[1:])):
        raise DomainError("need at least three strictly decreasing hbar values")
    target = limit.pair(f)
    pairs, masses = [], []
    for h in hb:
        mu = husimi_measure(state_family(h), h, pgrid)
        pairs.append(mu.integrate(f))
        masses.append(mu.mass)
    pairs = np.array(pairs)
    return ConvergenceTable(np.array(hb), pairs, target, np.abs(pairs - target), f.name,
                            np.array(masses))


def ground_state_family(lam: float = 1.0, a: float = 1.0, grid: Grid | None = None,
                        flea=None):
    """hbar -> ground state of the double well (optionally with a fixed flea).

    The flea'd ground state falls back to the doublet projection when the
    perturbed doublet is not resolvable in the full operator.
    """
    grid = grid or default_grid(a)

    def state(hbar: float) -> WaveFunction:
        params = ModelParams(hbar=hbar, lam=lam, a=a)
        op = double_well_operator(params, grid)
        es = lowest_eigenpairs(op, 2, params=params)
        if flea is None:
            return es.state(0)
        from .dynamics import flea_on_grid

        w = flea_on_grid(flea, grid)
        pert = lowest_eigenpairs(op.shifted(w), 2)
        if pert.energies[1] - pert.energies[0] > 1e-13 * abs(pert.energies[0]):
            return pert.state(0)
        resolved_splitting(es)
        return doublet_ground_state(es, w)

    return state
