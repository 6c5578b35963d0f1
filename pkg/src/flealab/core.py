"""Grids, model parameters, potentials and finite-difference Hamiltonians.

Everything here is immutable. Arrays handed out by the dataclasses are
read-only views so that operators and wave functions can be shared freely
between worker processes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import DomainError

MIN_POINTS = 16
NORM_TOL = 1e-10


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class Boundary(str, Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Grid:
    """Uniform 1D grid.

    Dirichlet grids include both end points as unknowns (the wave function
    vanishes one spacing beyond them). Periodic grids omit ``x_max``, which
    is identified with ``x_min``.
    """

    x_min: float
    x_max: float
    n_points: int
    boundary: Boundary = Boundary.DIRICHLET

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise DomainError("grid bounds must be finite")
        if self.x_max <= self.x_min:
            raise DomainError(f"x_max={self.x_max} must exceed x_min={self.x_min}")
        if int(self.n_points) != self.n_points or self.n_points < MIN_POINTS:
            raise DomainError(f"n_points must be an integer >= {MIN_POINTS}, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))

    @property
    def spacing(self) -> float:
        length = self.x_max - self.x_min
        if self.boundary is Boundary.PERIODIC:
            return length / self.n_points
        return length / (self.n_points - 1)

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def is_symmetric(self) -> bool:
        """True when the node set is invariant under x -> -x."""
        if self.periodic:
            return False
        scale = max(abs(self.x_min), abs(self.x_max))
        return abs(self.x_min + self.x_max) <= 1e-12 * scale

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_min + self.spacing * np.arange(self.n_points)
        if self.is_symmetric:
            # exact antisymmetry so that even potentials sample bit-identically at +-x
            x = 0.5 * (x - x[::-1])
        return _frozen(x)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max,
                "n_points": self.n_points, "boundary": self.boundary.value}


def make_grid(x_min: float, x_max: float, n_points: int, boundary="dirichlet") -> Grid:
    return Grid(float(x_min), float(x_max), n_points, Boundary(boundary))


def default_grid(a: float = 1.0) -> Grid:
    """[-4a, 4a] with 2048 Dirichlet nodes."""
    return make_grid(-4.0 * a, 4.0 * a, 2048)


@dataclass(frozen=True)
class ModelParams:
    hbar: float
    mass: float = 1.0
    lam: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "lam", "a"):
            value = getattr(self, name)
            if not value > 0:
                raise DomainError(f"{name} must be positive, got {value}")

    @classmethod
    def from_xi(cls, xi: float, lam: float = 1.0, a: float = 1.0) -> "ModelParams":
        """Unit mass with hbar = xi."""
        return cls(hbar=xi, mass=1.0, lam=lam, a=a)

    @property
    def xi(self) -> float:
        return math.sqrt(self.hbar**2 / self.mass)

    @property
    def barrier_height(self) -> float:
        return self.lam * self.a**4 / 8.0

    @property
    def spring_constant(self) -> float:
        return self.lam * self.a**2

    @property
    def char_length(self) -> float:
        return (self.hbar**2 / (self.mass * self.spring_constant)) ** 0.25

    def to_dict(self) -> dict:
        return {"hbar": self.hbar, "mass": self.mass, "lambda": self.lam, "a": self.a}


# -- potentials ---------------------------------------------------------------

@dataclass(frozen=True)
class SymmetricDoubleWell:
    lam: float = 1.0
    a: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.lam / 8.0) * (x * x - self.a * self.a) ** 2

    @property
    def barrier_height(self) -> float:
        return self.lam * self.a**4 / 8.0


@dataclass(frozen=True)
class PeriodicCosSq:
    """V_b cos^2(pi x / 2a) on [-n a, n a); one well per period 2a."""

    v_b: float = 1.0
    a: float = 1.0
    n_wells: int = 4

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.v_b * np.cos(np.pi * x / (2.0 * self.a)) ** 2

    def grid(self, n_points: int = 1024) -> Grid:
        half = self.n_wells * self.a
        return make_grid(-half, half, n_points, Boundary.PERIODIC)


@dataclass(frozen=True)
class Quadratic:
    omega: float = 1.0
    mass: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.mass * self.omega**2 * x * x


@dataclass(frozen=True)
class Custom:
    values: tuple

    def __init__(self, values):
        object.__setattr__(self, "values", tuple(float(v) for v in values))

    def __call__(self, x):
        x = np.asarray(x)
        if x.shape != (len(self.values),):
            raise DomainError("custom potential sampled on a grid of the wrong size")
        return np.array(self.values)


BasePotential = Union[SymmetricDoubleWell, PeriodicCosSq, Quadratic, Custom]


@dataclass(frozen=True)
class ParabolicBump:
    """h * max(0, 1 - ((x - c)/w)^2); the shape of the default flea."""

    center: float
    half_width: float
    height: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")

    @property
    def support(self) -> tuple:
        return (self.center - self.half_width, self.center + self.half_width)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.half_width
        return self.height * np.maximum(0.0, 1.0 - u * u)

    def scaled(self, factor: float) -> "ParabolicBump":
        return ParabolicBump(self.center, self.half_width, self.height * factor)


@dataclass(frozen=True)
class GaussianBump:
    """Gaussian of peak ``height``, truncated to center +- cutoff*sigma."""

    center: float
    sigma: float
    height: float
    cutoff: float = 6.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    @property
    def support(self) -> tuple:
        r = self.cutoff * self.sigma
        return (self.center - r, self.center + r)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.sigma
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        return np.where(inside, self.height * np.exp(-0.5 * u * u), 0.0)

    def scaled(self, factor: float) -> "GaussianBump":
        return GaussianBump(self.center, self.sigma, self.height * factor, self.cutoff)


Perturbation = Union[ParabolicBump, GaussianBump]


def default_flea(a: float = 1.0, height: float = 1.0) -> ParabolicBump:
    """Parabolic flea sitting in the right well."""
    return ParabolicBump(center=a, half_width=0.25 * a, height=height)


@dataclass(frozen=True)
class PotentialSpec:
    base: BasePotential
    perturbations: tuple = field(default=())

    def __post_init__(self):
        perts = tuple((p, float(s)) for p, s in self.perturbations)
        object.__setattr__(self, "perturbations", perts)

    def with_perturbation(self, pert: Perturbation, scale: float = 1.0) -> "PotentialSpec":
        return PotentialSpec(self.base, self.perturbations + ((pert, scale),))


def eval_potential(spec: PotentialSpec, grid: Grid,
                   time_scales: Mapping | Sequence | None = None) -> np.ndarray:
    """Sample ``spec`` on ``grid``.

    ``time_scales`` overrides the stored scales, either positionally (a
    sequence) or keyed by perturbation index or by the perturbation object.
    """
    x = grid.x
    values = np.array(spec.base(x), dtype=float)
    for i, (pert, scale) in enumerate(spec.perturbations):
        lo, hi = pert.support
        if lo < grid.x_min - 1e-12 or hi > grid.x_max + 1e-12:
            raise DomainError(f"perturbation support [{lo}, {hi}] leaves the grid")
        if time_scales is not None:
            if isinstance(time_scales, Mapping):
                if i in time_scales:
                    scale = time_scales[i]
                elif pert in time_scales:
                    scale = time_scales[pert]
            else:
                scale = time_scales[i]
        if scale != 0.0:
            values = values + scale * pert(x)
    return values


# -- operators and states -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscretizedOperator:
    """Three-point finite-difference Hamiltonian.

    ``corner`` is the coupling between the first and last node and is only
    set on periodic grids.
    """

    grid: Grid
    diagonal: np.ndarray
    off_diagonal: np.ndarray
    corner: float | None
    hbar: float
    mass: float

    @property
    def hopping(self) -> float:
        return self.hbar**2 / (2.0 * self.mass * self.grid.spacing**2)

    @property
    def potential(self) -> np.ndarray:
        return self.diagonal - 2.0 * self.hopping

    @property
    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral norm."""
        radius = np.abs(self.diagonal).copy()
        radius[1:] += np.abs(self.off_diagonal)
        radius[:-1] += np.abs(self.off_diagonal)
        if self.corner is not None:
            radius[0] += abs(self.corner)
            radius[-1] += abs(self.corner)
        return float(radius.max())

    def shifted(self, values) -> "DiscretizedOperator":
        """Operator with ``values`` added to the diagonal."""
        return DiscretizedOperator(self.grid, _frozen(self.diagonal + np.asarray(values)),
                                   self.off_diagonal, self.corner, self.hbar, self.mass)

    def matvec(self, psi):
        psi = np.asarray(psi)
        out = self.diagonal * psi
        out[:-1] += self.off_diagonal * psi[1:]
        out[1:] += self.off_diagonal * psi[:-1]
        if self.corner is not None:
            out[0] += self.corner * psi[-1]
            out[-1] += self.corner * psi[0]
        return out

    def to_dense(self) -> np.ndarray:
        n = self.grid.n_points
        mat = np.diag(np.asarray(self.diagonal, dtype=float))
        idx = np.arange(n - 1)
        mat[idx, idx + 1] = self.off_diagonal
        mat[idx + 1, idx] = self.off_diagonal
        if self.corner is not None:
            mat[0, -1] = mat[-1, 0] = self.corner
        return mat

    def to_sparse(self):
        import scipy.sparse as sp

        n = self.grid.n_points
        mat = sp.diags([self.off_diagonal, self.diagonal, self.off_diagonal], [-1, 0, 1],
                       shape=(n, n), format="lil")
        if self.corner is not None:
            mat[0, n - 1] = self.corner
            mat[n - 1, 0] = self.corner
        return mat.tocsc()


def build_hamiltonian(grid: Grid, potential, params: ModelParams) -> DiscretizedOperator:
    """-(hbar^2/2m) d^2/dx^2 + V by the central second difference."""
    potential = np.asarray(potential, dtype=float)
    if potential.shape != (grid.n_points,):
        raise DomainError(f"potential has shape {potential.shape}, grid has {grid.n_points} nodes")
    t = params.hbar**2 / (2.0 * params.mass * grid.spacing**2)
    diag = 2.0 * t + potential
    off = np.full(grid.n_points - 1, -t)
    corner = -t if grid.periodic else None
    return DiscretizedOperator(grid, _frozen(diag), _frozen(off), corner, params.hbar, params.mass)


def discrete_norm(values, grid: Grid) -> float:
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * grid.spacing))


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: Grid
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise DomainError("amplitude array does not match the grid")
        norm = discrete_norm(amps, self.grid)
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"wave function norm {norm!r} differs from 1")
        object.__setattr__(self, "amplitudes", _frozen(amps, complex))

    @classmethod
    def normalized(cls, grid: Grid, values) -> "WaveFunction":
        values = np.asarray(values, dtype=complex)
        norm = discrete_norm(values, grid)
        if norm == 0.0 or not np.isfinite(norm):
            raise DomainError("cannot normalise a zero or non-finite vector")
        return cls(grid, values / norm)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return discrete_norm(self.amplitudes, self.grid)

    def inner(self, other) -> complex:
        """<self|other> with the grid quadrature weight."""
        other = other.amplitudes if isinstance(other, WaveFunction) else np.asarray(other)
        return complex(np.vdot(self.amplitudes, other) * self.grid.spacing)

    def expectation(self, op: DiscretizedOperator) -> float:
        return float(np.real(self.inner(op.matvec(self.amplitudes))))

    def position_moments(self) -> tuple:
        x = self.grid.x
        w = self.density * self.grid.spacing
        mean = float(np.sum(w * x))
        return mean, float(np.sum(w * (x - mean) ** 2))

    def mean_momentum(self, hbar: float, order: int = 8) -> float:
        """<p> with a central-difference derivative of the given even order."""
        dpsi = central_derivative(self.amplitudes, self.grid, order)
        return float(np.real(-1j * hbar * np.vdot(self.amplitudes, dpsi) * self.grid.spacing))


def central_weights(order: int) -> np.ndarray:
    """First-derivative weights on offsets -r..r (r = order/2), unit spacing."""
    if order < 2 or order % 2:
        raise DomainError("order must be a positive even integer")
    r = order // 2
    offs = np.arange(-r, r + 1, dtype=float)
    vander = np.vander(offs, increasing=True).T
    rhs = np.zeros(len(offs))
    rhs[1] = 1.0
    return np.linalg.solve(vander, rhs)


def central_derivative(values, grid: Grid, order: int = 2) -> np.ndarray:
    """d/dx on the grid; values beyond Dirichlet ends are taken as zero."""
    values = np.asarray(values)
    w = central_weights(order)
    r = order // 2
    n = len(values)
    if grid.periodic:
        padded = np.concatenate((values[-r:], values, values[:r]))
    else:
        padded = np.concatenate((np.zeros(r, values.dtype), values, np.zeros(r, values.dtype)))
    out = np.zeros(n, dtype=np.result_type(values, float))
    for k, wk in enumerate(w):
        if wk != 0.0:
            out += wk * padded[k:k + n]
    return out / grid.spacing
