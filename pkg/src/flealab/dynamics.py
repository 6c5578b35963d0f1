"""Time-dependent flea schedules and the collapse-time diagnostics built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Sequence, Union

import numpy as np
import scipy.linalg.lapack as lapack
from scipy.sparse import identity
from scipy.sparse.linalg import splu

from .core import (
    DiscretizedOperator,
    Grid,
    ModelParams,
    SymmetricDoubleWell,
    WaveFunction,
    default_grid,
)
from .eigen import lowest_eigenpairs
from .errors import DomainError, StabilityError
from .parallel import pmap
from .spectral import (
    WellPartition,
    _linear_fit,
    double_well_operator,
    doublet_ground_state,
    find_partition,
    flea_sensitivity_sweep,
    resolved_splitting,
    well_probability,
)

NORM_DRIFT_LIMIT = 1e-6
ADIABATIC_CRITERION = 0.01
_BLOCK = 1024


# -- schedules ----------------------------------------------------------------

@lru_cache(maxsize=4096)
def _normal_block(seed: int, tag: int, b: int) -> np.ndarray:
    return np.random.default_rng([seed, tag, b]).standard_normal(_BLOCK)


@lru_cache(maxsize=4096)
def _exp_block(seed: int, b: int) -> np.ndarray:
    return np.random.default_rng([seed, 2, b]).standard_exponential(_BLOCK)


def _prefix_sum(block_fn, k: int) -> float:
    nb, r = divmod(k, _BLOCK)
    total = sum(float(block_fn(b).sum()) for b in range(nb))
    if r:
        total += float(block_fn(nb)[:r].sum())
    return total


@dataclass(frozen=True)
class Quench:
    epsilon: float
    t_on: float = 0.0

    def scale(self, t: float) -> float:
        return self.epsilon if t >= self.t_on else 0.0


@dataclass(frozen=True)
class SinRamp:
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise DomainError("ramp time must be positive")

    def scale(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if t >= self.T:
            return 1.0
        return math.sin(math.pi * t / (2.0 * self.T))

    def rate(self, t: float) -> float:
        if t < 0.0 or t > self.T:
            return 0.0
        return math.pi / (2.0 * self.T) * math.cos(math.pi * t / (2.0 * self.T))


@dataclass(frozen=True)
class WhiteNoise:
    """Random walk: an independent N(0, amplitude^2 dt_noise) increment every dt_noise."""

    amplitude: float
    dt_noise: float
    seed: int = 0

    def scale(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        k = int(math.floor(t / self.dt_noise + 1e-12))
        steps = _prefix_sum(lambda b: _normal_block(self.seed, 1, b), k)
        return self.amplitude * math.sqrt(self.dt_noise) * steps


@dataclass(frozen=True)
class PoissonKicks:
    """Jumps of kick_scale * N(0,1) at exponential waiting times of the given rate."""

    rate: float
    kick_scale: float
    seed: int = 0

    def kick_times(self, t_end: float) -> np.ndarray:
        out, t, b = [], 0.0, 0
        while t <= t_end:
            waits = _exp_block(self.seed, b) / self.rate
            times = t + np.cumsum(waits)
            out.append(times[times <= t_end])
            t = float(times[-1])
            b += 1
        return np.concatenate(out) if out else np.zeros(0)

    def scale(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        n = len(self.kick_times(t))
        return self.kick_scale * _prefix_sum(lambda b: _normal_block(self.seed, 3, b), n)


ScheduleKind = Union[Quench, SinRamp, WhiteNoise, PoissonKicks]


@dataclass(frozen=True)
class RampSchedule:
    kind: ScheduleKind
    flea: object

    def scale(self, t: float) -> float:
        return self.kind.scale(t)


@dataclass(frozen=True)
class _Zero:
    def scale(self, t):
        return 0.0


def static_schedule(flea=None) -> RampSchedule:
    """Schedule with scale identically zero."""
    return RampSchedule(_Zero(), flea)


def flea_on_grid(flea, grid: Grid) -> np.ndarray:
    """Flea sampled on the grid (zeros for no flea)."""
    if flea is None:
        return np.zeros(grid.n_points)
    lo, hi = flea.support
    if lo < grid.x_min - 1e-12 or hi > grid.x_max + 1e-12:
        raise DomainError(f"flea support [{lo}, {hi}] leaves the grid")
    return np.asarray(flea(grid.x), dtype=float)


# -- Crank-Nicolson -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    norm: np.ndarray
    energy: np.ndarray
    p_left: np.ndarray
    base: DiscretizedOperator
    schedule: RampSchedule
    flea_values: np.ndarray

    def state(self, i: int) -> WaveFunction:
        return WaveFunction.normalized(self.base.grid, self.states[i])

    def rows(self):
        for row in zip(self.times, self.norm, self.energy, self.p_left):
            yield tuple(float(v) for v in row)


class _CayleyStep:
    """(1 + i dt H/2hbar)^-1 (1 - i dt H/2hbar), factorised per scale value."""

    def __init__(self, base: DiscretizedOperator, w: np.ndarray, dt: float):
        self.base, self.w, self.dt = base, w, dt
        self.alpha = 0.5j * dt / base.hbar
        self._key = None

    def _factor(self, s):
        if s == self._key:
            return
        diag = np.asarray(self.base.diagonal) + s * self.w
        off = np.asarray(self.base.off_diagonal)
        self._diag, self._off = diag, off
        if self.base.corner is None:
            dl = (self.alpha * off).astype(complex)
            d = (1.0 + self.alpha * diag).astype(complex)
            du = dl.copy()
            dl, d, du, du2, ipiv, info = lapack.zgttrf(dl, d, du)
            if info != 0:
                raise StabilityError(f"tridiagonal factorisation failed (info={info})")
            self._lu = (dl, d, du, du2, ipiv)
        else:
            op = self.base.shifted(s * self.w).to_sparse()
            n = op.shape[0]
            self._lu = splu((identity(n, format="csc") + self.alpha * op).tocsc())
        self._key = s

    def __call__(self, psi, s):
        self._factor(s)
        rhs = psi * (1.0 - self.alpha * self._diag)
        rhs[:-1] -= self.alpha * self._off * psi[1:]
        rhs[1:] -= self.alpha * self._off * psi[:-1]
        if self.base.corner is None:
            dl, d, du, du2, ipiv = self._lu
            out, info = lapack.zgttrs(dl, d, du, du2, ipiv, rhs)
            if info != 0:
                raise StabilityError(f"tridiagonal solve failed (info={info})")
            return out
        c = self.base.corner
        rhs[0] -= self.alpha * c * psi[-1]
        rhs[-1] -= self.alpha * c * psi[0]
        return self._lu.solve(rhs)


def _energy(base, w, s, psi, h):
    hpsi = base.matvec(psi) + s * w * psi
    return float(np.real(np.vdot(psi, hpsi)) * h)


def propagate(psi0: WaveFunction, base: DiscretizedOperator, schedule: RampSchedule,
              dt: float, t_end: float, stride: int = 1, partition: WellPartition | None = None,
              check_dt: bool = True) -> Trajectory:
    """Crank-Nicolson evolution of ``psi0`` under ``base + scale(t) * flea``.

    The scale is sampled at each step midpoint, which keeps second order for
    time-dependent ramps. Observables are recorded every ``stride`` steps
    and at the final time.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    if t_end < 0:
        raise DomainError("t_end must be non-negative")
    grid = base.grid
    h = grid.spacing
    w = flea_on_grid(schedule.flea, grid)
    psi = np.array(psi0.amplitudes, dtype=complex)
    if check_dt:
        hpsi = base.matvec(psi)
        e_rms = math.sqrt(float(np.real(np.vdot(hpsi, hpsi)) * h))
        if dt * e_rms / base.hbar >= 0.1:
            raise DomainError(f"dt={dt} does not resolve the state's frequency "
                              f"(dt*E/hbar={dt * e_rms / base.hbar:.3g})")
    if partition is None:
        partition = find_partition(base.potential, grid) if not grid.periodic else None
    weights = partition.weights(grid)[0] if partition is not None else np.ones(grid.n_points)
    n_steps = int(round(t_end / dt))
    step = _CayleyStep(base, w, dt)

    times, states, norms, energies, pl = [], [], [], [], []

    def record(t, vec):
        dens = np.abs(vec) ** 2 * h
        times.append(t)
        states.append(vec.copy())
        norms.append(math.sqrt(float(dens.sum())))
        energies.append(_energy(base, w, schedule.scale(t), vec, h))
        pl.append(float(weights @ dens))

    record(0.0, psi)
    for n in range(n_steps):
        t = n * dt
        psi = step(psi, schedule.scale(t + 0.5 * dt))
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            record((n + 1) * dt, psi)
            if abs(norms[-1] - 1.0) > NORM_DRIFT_LIMIT:
                raise StabilityError(f"norm drifted to {norms[-1]!r} at t={(n + 1) * dt}")
    return Trajectory(np.array(times), np.array(states), np.array(norms), np.array(energies),
                      np.array(pl), base, schedule, w)


# -- exact propagation for piecewise-constant H ------------------------------

def spectral_p_left(psi0, op: DiscretizedOperator, times, partition: WellPartition,
                    n_states: int = 8):
    """Left-well probability under a constant H from a truncated eigen-expansion.

    Returns (p_left(times), weight missing from the retained states).
    """
    grid = op.grid
    h = grid.spacing
    es = lowest_eigenpairs(op, n_states)
    amps = psi0.amplitudes if isinstance(psi0, WaveFunction) else np.asarray(psi0)
    c = es.vectors @ amps * h
    deficit = max(0.0, 1.0 - float(np.sum(np.abs(c) ** 2)))
    chi = partition.weights(grid)[0]
    proj = (es.vectors * chi) @ es.vectors.T * h
    times = np.asarray(times, dtype=float)
    e = es.energies - es.energies[0]
    out = np.empty(len(times))
    for lo in range(0, len(times), 8192):
        t = times[lo:lo + 8192]
        a = c[None, :] * np.exp(-1j * np.outer(t, e) / op.hbar)
        out[lo:lo + 8192] = np.real(np.einsum("tn,nm,tm->t", a.conj(), proj, a))
    return out, deficit


@dataclass(frozen=True)
class QuenchStats:
    epsilon: float
    time_averaged_p_left: float
    max_sustained_window: float
    window_fraction: float
    horizon: float
    min_p_left: float
    max_p_left: float
    deficit: float


def _longest_run(mask, dt):
    best = cur = 0
    for m in mask:
        cur = cur + 1 if m else 0
        best = max(best, cur)
    return best * dt


def _quench_point(eps, base, w, psi0, partition, horizon, samples_per_period, n_states,
                  threshold):
    op = base.shifted(eps * w) if eps != 0.0 else base
    es = lowest_eigenpairs(op, 2)
    period = 2.0 * math.pi * base.hbar / max(float(es.energies[1] - es.energies[0]), 1e-300)
    n = int(min(max(horizon / period * samples_per_period, 4096), 400_000)) + 1
    times = np.linspace(0.0, horizon, n)
    p, deficit = spectral_p_left(psi0, op, times, partition, n_states)
    dt = times[1] - times[0]
    window = _longest_run(p > threshold, dt)
    return QuenchStats(float(eps), float(np.mean(p)), window, window / horizon, float(horizon),
                       float(p.min()), float(p.max()), deficit)


def quench_localization_study(epsilons: Sequence[float], horizon: float | None = None,
                              params: ModelParams | None = None, flea=None,
                              grid: Grid | None = None, samples_per_period: int = 64,
                              n_states: int = 8, threshold: float = 0.95,
                              workers: int = 1) -> list:
    """Quench the flea on at t=0 from the symmetric ground state, for each epsilon.

    The constant post-quench Hamiltonian is propagated exactly in its
    eigenbasis (lowest ``n_states``; the missing weight is reported as
    ``deficit``). ``horizon`` defaults to ten periods of the unperturbed
    doublet, which bounds every perturbed period from above.
    """
    from .core import default_flea

    params = params or ModelParams.from_xi(0.2, lam=9.0)
    flea = flea or default_flea(params.a)
    grid = grid or default_grid(params.a)
    base = double_well_operator(params, grid)
    es0 = lowest_eigenpairs(base, 2, params=params)
    delta0 = resolved_splitting(es0)
    min_horizon = 10 * 2.0 * math.pi * params.hbar / delta0
    if horizon is None:
        horizon = min_horizon
    elif horizon < min_horizon:
        raise DomainError(f"horizon {horizon:.4g} is shorter than ten doublet periods "
                          f"({min_horizon:.4g})")
    w = flea_on_grid(flea, grid)
    partition = find_partition(base.potential, grid)
    task = partial(_quench_point, base=base, w=w, psi0=es0.vectors[0], partition=partition,
                   horizon=horizon, samples_per_period=samples_per_period, n_states=n_states,
                   threshold=threshold)
    return pmap(task, list(epsilons), workers)


def static_threshold(params: ModelParams, flea, level: float = 0.75,
                     grid: Grid | None = None) -> float:
    """Flea scale at which the static ground state's left-well weight crosses ``level``."""
    eps = np.logspace(1, -16, 171)
    return flea_sensitivity_sweep(params, flea, eps, grid).crossing(level)


# -- instantaneous eigenbasis ---------------------------------------------------

@dataclass(frozen=True)
class CoefficientSeries:
    times: np.ndarray
    coefficients: np.ndarray
    energies: np.ndarray

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2


def instantaneous_coefficients(traj: Trajectory, schedule: RampSchedule | None = None,
                               k: int = 2) -> CoefficientSeries:
    """c_n(t) = <psi_n(t)|Psi(t)> times exp(+i/hbar int E_n), for n < k.

    Eigenbases are cached by scale value. Successive eigenvectors are
    sign-aligned with the previous sample so that c_n varies smoothly.
    """
    schedule = schedule or traj.schedule
    base, w = traj.base, traj.flea_values
    h = base.grid.spacing
    cache = {}
    coeffs = np.empty((len(traj.times), k), complex)
    energies = np.empty((len(traj.times), k))
    prev = None
    for i, t in enumerate(traj.times):
        s = schedule.scale(float(t))
        if s not in cache:
            op = base.shifted(s * w) if s != 0.0 else base
            cache[s] = lowest_eigenpairs(op, k)
        es = cache[s]
        vecs = np.array(es.vectors)
        if prev is not None:
            signs = np.sign(np.sum(vecs * prev, axis=1))
            signs[signs == 0] = 1.0
            vecs = vecs * signs[:, None]
        prev = vecs
        energies[i] = es.energies
        coeffs[i] = vecs @ traj.states[i] * h
    phase = np.zeros((len(traj.times), k))
    if len(traj.times) > 1:
        dt = np.diff(traj.times)[:, None]
        phase[1:] = np.cumsum(0.5 * (energies[1:] + energies[:-1]) * dt, axis=0)
    coeffs = coeffs * np.exp(1j * phase / base.hbar)
    return CoefficientSeries(np.array(traj.times), coeffs, energies)


def gauge_term(base: DiscretizedOperator, w, scale: float, k: int = 2,
               ds: float | None = None, rate: float = 1.0) -> np.ndarray:
    """rate * <psi_n | d psi_n / ds> for the real instantaneous eigenbasis of base + s*w.

    Pass ``rate = ds/dt`` of a schedule to get the time-derivative form.
    Central difference in the scale; the step defaults to 1e-4 of the
    doublet's rotation scale Delta/||W||. The attainable floor is roughly
    ||d psi/ds|| times the eigenvector angle error, so very sensitive
    doublets cannot show the exact zero.
    """
    w = np.asarray(w)

    def basis(s):
        op = base.shifted(s * w) if s != 0.0 else base
        return lowest_eigenpairs(op, k)

    es = basis(scale)
    if ds is None:
        gap = float(es.energies[1] - es.energies[0])
        ds = 1e-4 * gap / max(float(np.abs(w).max()), 1e-300)
    h = base.grid.spacing
    ref = es.vectors
    out = []
    plus, minus = basis(scale + ds).vectors, basis(scale - ds).vectors
    for n in range(k):
        p = plus[n] * np.sign(np.dot(plus[n], ref[n]))
        m = minus[n] * np.sign(np.dot(minus[n], ref[n]))
        out.append(np.dot(ref[n], p - m) * h / (2.0 * ds))
    return rate * np.array(out)


# -- adiabatic bound and Gamma --------------------------------------------------

@dataclass(frozen=True)
class AdiabaticReport:
    delta0: float
    matrix_element: float
    c1dot0: float
    gamma: float
    T_required: float
    T: float
    criterion: float = ADIABATIC_CRITERION


def doublet_matrix_element(es, w) -> float:
    """|<psi_1|W|psi_0>| on the grid."""
    return abs(float(np.sum(es.vectors[1] * np.asarray(w) * es.vectors[0]) * es.grid.spacing))


def adiabatic_report(params: ModelParams, flea, T: float, grid: Grid | None = None,
                     criterion: float = ADIABATIC_CRITERION) -> AdiabaticReport:
    """Initial transition rate |c1'(0)| = pi |<psi1|W|psi0>| / (2 T Delta0) and friends.

    ``T_required`` is the smallest ramp time with |c1'(0)| <= criterion * Delta0/hbar.
    """
    if not T > 0:
        raise DomainError("T must be positive")
    grid = grid or default_grid(params.a)
    es = lowest_eigenpairs(double_well_operator(params, grid), 2, params=params)
    delta0 = resolved_splitting(es)
    m = doublet_matrix_element(es, flea_on_grid(flea, grid))
    c1dot0 = math.pi / (2.0 * T * delta0) * m
    t_req = math.pi * m * params.hbar / (2.0 * criterion * delta0**2)
    return AdiabaticReport(delta0, m, c1dot0, m / delta0, t_req, T, criterion)


@dataclass(frozen=True)
class GammaScan:
    hbar: np.ndarray
    delta0: np.ndarray
    matrix_element: np.ndarray
    gamma: np.ndarray
    shrunk_max_well_probability: np.ndarray
    slope: float
    intercept: float
    r2: float
    shrink_exponent: int
    excluded: tuple = field(default=())

    @property
    def log10_gamma(self) -> np.ndarray:
        return np.log10(self.gamma)

    def predict_log10(self, hbar: float) -> float:
        return self.intercept + self.slope / hbar

    def rows(self):
        for row in zip(self.hbar, self.delta0, self.matrix_element, self.gamma,
                       self.log10_gamma, self.shrunk_max_well_probability):
            yield tuple(float(v) for v in row)


def _gamma_point(hbar, lam, a, mass, flea, grid, shrink):
    params = ModelParams(hbar=hbar, mass=mass, lam=lam, a=a)
    es = lowest_eigenpairs(double_well_operator(params, grid), 2, params=params)
    try:
        delta0 = resolved_splitting(es)
    except Exception:
        return None
    w = flea_on_grid(flea, grid)
    m = doublet_matrix_element(es, w)
    psi = doublet_ground_state(es, w * 10.0**-shrink)
    probs = well_probability(psi, find_partition(es_potential(params, grid), grid))
    return delta0, m, float(probs.max())


def es_potential(params: ModelParams, grid: Grid):
    return SymmetricDoubleWell(params.lam, params.a)(grid.x)


def gamma_scan(hbar_values: Sequence[float], flea, lam: float = 9.0, a: float = 1.0,
               mass: float = 1.0, grid: Grid | None = None, shrink_exponent: int = 12,
               workers: int = 1) -> GammaScan:
    """Gamma = |<psi1|W|psi0>|/Delta0 over hbar, with a log10-linear fit in 1/hbar.

    Each point also reports the largest single-well probability of the ground
    state perturbed by 10^-shrink_exponent W, computed in the unperturbed
    doublet because that splitting is far below the rounding level of E0.
    """
    grid = grid or default_grid(a)
    hb = [float(h) for h in hbar_values]
    task = partial(_gamma_point, lam=lam, a=a, mass=mass, flea=flea, grid=grid,
                   shrink=shrink_exponent)
    results = pmap(task, hb, workers)
    keep = [r is not None for r in results]
    excluded = tuple(h for h, k in zip(hb, keep) if not k)
    rows = [r for r in results if r is not None]
    if len(rows) < 2:
        raise DomainError("fewer than two resolved points in the Gamma scan")
    hbar = np.array([h for h, k in zip(hb, keep) if k])
    delta0 = np.array([r[0] for r in rows])
    m = np.array([r[1] for r in rows])
    gamma = m / delta0
    intercept, slope, r2 = _linear_fit(1.0 / hbar, np.log10(gamma))
    return GammaScan(hbar, delta0, m, gamma, np.array([r[2] for r in rows]), slope,
                     intercept, r2, shrink_exponent, excluded)
