"""Static spectra: splittings, well populations and flea sensitivity."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from .core import (
    DiscretizedOperator,
    Grid,
    ModelParams,
    ParabolicBump,
    PeriodicCosSq,
    PotentialSpec,
    SymmetricDoubleWell,
    WaveFunction,
    build_hamiltonian,
    default_grid,
    eval_potential,
)
from .eigen import DEFAULT_TOL, EigenSystem, lowest_eigenpairs
from .errors import ConvergenceError, DomainError
from .parallel import pmap

# splittings below this fraction of |E0| are noise on the difference route
RESOLUTION_FLOOR = 1e-13


# -- well partitions ----------------------------------------------------------

@dataclass(frozen=True)
class WellPartition:
    """Cut points splitting the grid into wells.

    On a periodic grid the cuts live on a circle: well ``i`` runs from
    ``cuts[i]`` to ``cuts[i+1]`` and the last one wraps round to ``cuts[0]``.
    A node sitting exactly on a cut contributes half its weight to each side.
    """

    cut_points: tuple
    periodic: bool = False

    def __post_init__(self):
        cuts = tuple(sorted(float(c) for c in self.cut_points))
        if not cuts:
            raise DomainError("a partition needs at least one cut")
        object.__setattr__(self, "cut_points", cuts)

    @property
    def n_wells(self) -> int:
        return len(self.cut_points) if self.periodic else len(self.cut_points) + 1

    def weights(self, grid: Grid) -> np.ndarray:
        """(n_wells, n_points) matrix of node-to-well membership weights."""
        x = grid.x
        cuts = np.array(self.cut_points)
        n_w = self.n_wells
        region = np.searchsorted(cuts, x, side="right")
        if self.periodic:
            region = (region - 1) % n_w
        w = np.zeros((n_w, len(x)))
        w[region, np.arange(len(x))] = 1.0
        tol = 1e-9 * grid.spacing
        for i, c in enumerate(cuts):
            on = np.nonzero(np.abs(x - c) < tol)[0]
            if on.size == 0:
                continue
            left = (i - 1) % n_w if self.periodic else i
            right = i if self.periodic else i + 1
            w[:, on] = 0.0
            w[left, on] += 0.5
            w[right, on] += 0.5
        return w


def find_partition(values, grid: Grid) -> WellPartition:
    """Cut at the local maxima of a sampled potential (plateaus cut at their middle)."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    if grid.periodic:
        left, right = np.roll(v, 1), np.roll(v, -1)
        cand = (v >= left) & (v >= right) & ((v > left) | (v > right))
    else:
        cand = np.zeros(n, bool)
        cand[1:-1] = (v[1:-1] >= v[:-2]) & (v[1:-1] >= v[2:]) & (
            (v[1:-1] > v[:-2]) | (v[1:-1] > v[2:]))
    idx = np.nonzero(cand)[0]
    if idx.size == 0:
        raise DomainError("potential has no interior maximum to cut at")
    groups, current = [], [idx[0]]
    for j in idx[1:]:
        if j == current[-1] + 1:
            current.append(j)
        else:
            groups.append(current)
            current = [j]
    groups.append(current)
    if grid.periodic and len(groups) > 1 and groups[0][0] == 0 and groups[-1][-1] == n - 1:
        groups[0] = groups.pop() + groups[0]
    x = grid.x
    cuts = []
    for g in groups:
        if grid.periodic and g[0] > g[-1]:
            span = [x[j] if j >= g[0] else x[j] + (grid.x_max - grid.x_min) for j in g]
            c = float(np.mean(span))
            if c >= grid.x_max:
                c -= grid.x_max - grid.x_min
            cuts.append(c)
        else:
            cuts.append(float(np.mean(x[g])))
    return WellPartition(tuple(cuts), grid.periodic)


def well_probability(psi, partition: WellPartition, grid: Grid | None = None) -> np.ndarray:
    """Probability per well; sums to one for a normalised state."""
    if isinstance(psi, WaveFunction):
        grid, amps = psi.grid, psi.amplitudes
    else:
        amps = np.asarray(psi)
        if grid is None:
            raise DomainError("a grid is required for raw amplitude arrays")
    dens = np.abs(amps) ** 2 * grid.spacing
    return partition.weights(grid) @ dens


def double_well_partition() -> WellPartition:
    return WellPartition((0.0,))


# -- splittings ---------------------------------------------------------------

def energy_splitting(es: EigenSystem) -> float:
    """E1 - E0, taken from the parity-resolved flux value when available."""
    if len(es) < 2:
        raise DomainError("need at least two states for a splitting")
    if es.flux_splitting is not None:
        return float(es.flux_splitting)
    return float(es.energies[1] - es.energies[0])


def resolved_splitting(es: EigenSystem) -> float:
    """Like :func:`energy_splitting` but refuses values lost in rounding."""
    delta = energy_splitting(es)
    if es.flux_splitting is None and delta < RESOLUTION_FLOOR * abs(es.energies[0]):
        raise ConvergenceError("tunnelling splitting unresolved",
                               context={"delta": delta, "E0": float(es.energies[0])})
    if not delta > 0:
        raise ConvergenceError("non-positive splitting", context={"delta": delta})
    return delta


def _callable_potential(potential):
    if isinstance(potential, PotentialSpec):
        def fn(x):
            out = potential.base(x)
            for pert, scale in potential.perturbations:
                out = out + scale * pert(x)
            return out
        return fn
    return potential


def _local_minima(v):
    idx = np.nonzero((v[1:-1] <= v[:-2]) & (v[1:-1] <= v[2:]) &
                     ((v[1:-1] < v[:-2]) | (v[1:-1] < v[2:])))[0] + 1
    groups = []
    for j in idx:
        if groups and j == groups[-1][-1] + 1:
            groups[-1].append(j)
        else:
            groups.append([j])
    return [g[len(g) // 2] for g in groups]


def wkb_action(potential, params: ModelParams, grid: Grid | None = None,
               refine: int = 16) -> float:
    """Tunnelling action between the two minima: integral of sqrt(2 m (V - V_min)).

    Minima are located on ``grid`` and polished with a bounded scalar
    minimiser; the integral is a trapezoid rule on a mesh ``refine`` times
    finer than the grid.
    """
    fn = _callable_potential(potential)
    grid = grid or default_grid(params.a)
    x = grid.x
    v = np.asarray(fn(x), dtype=float)
    mins = _local_minima(v)
    if len(mins) != 2:
        raise DomainError(f"expected two minima, found {len(mins)}")
    h = grid.spacing
    located = []
    for j in mins:
        res = minimize_scalar(lambda s: float(fn(np.array([s]))[0]),
                              bounds=(x[j] - h, x[j] + h), method="bounded",
                              options={"xatol": 1e-13})
        located.append(float(res.x))
    x1, x2 = sorted(located)
    vmin = min(float(fn(np.array([x1]))[0]), float(fn(np.array([x2]))[0]))
    n_fine = max(int(math.ceil((x2 - x1) / h)) * refine, 64) + 1
    xs = np.linspace(x1, x2, n_fine)
    integrand = np.sqrt(2.0 * params.mass * np.maximum(fn(xs) - vmin, 0.0))
    return float(trapezoid(integrand, xs))


@dataclass(frozen=True)
class SplittingFit:
    hbar: np.ndarray
    delta: np.ndarray
    prefactor: float
    d_fit: float
    r2: float
    excluded: tuple = ()


def _linear_fit(xv, yv):
    A = np.vstack([np.ones_like(xv), xv]).T
    coef, *_ = np.linalg.lstsq(A, yv, rcond=None)
    resid = yv - A @ coef
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def double_well_operator(params: ModelParams, grid: Grid | None = None,
                         flea=None, eps: float = 0.0) -> DiscretizedOperator:
    grid = grid or default_grid(params.a)
    spec = PotentialSpec(SymmetricDoubleWell(params.lam, params.a))
    if flea is not None:
        spec = spec.with_perturbation(flea, eps)
    return build_hamiltonian(grid, eval_potential(spec, grid), params)


def _splitting_point(params, potential, grid):
    spec = potential if isinstance(potential, PotentialSpec) else PotentialSpec(potential)
    op = build_hamiltonian(grid, eval_potential(spec, grid), params)
    es = lowest_eigenpairs(op, 2, params=params)
    try:
        return resolved_splitting(es)
    except ConvergenceError:
        return None


def splitting_scan(params_list: Sequence[ModelParams], potential=None,
                   grid: Grid | None = None, workers: int = 1) -> SplittingFit:
    """Least-squares fit of log(delta/hbar) = log C - d/hbar."""
    params_list = list(params_list)
    hbars = np.array([p.hbar for p in params_list])
    if len(set(hbars.tolist())) < 5:
        raise ConvergenceError("splitting scan needs at least five distinct hbar values",
                               context={"n_points": len(set(hbars.tolist()))})
    if potential is None:
        potential = SymmetricDoubleWell(params_list[0].lam, params_list[0].a)
    grid = grid or default_grid(params_list[0].a)
    deltas = pmap(partial(_splitting_point, potential=potential, grid=grid), params_list, workers)
    keep = np.array([d is not None for d in deltas])
    excluded = tuple(float(h) for h, k in zip(hbars, keep) if not k)
    if keep.sum() < 5:
        raise ConvergenceError("too few resolved splittings for a fit",
                               context={"excluded_hbar": excluded})
    hb = hbars[keep]
    dl = np.array([d for d in deltas if d is not None])
    intercept, slope, r2 = _linear_fit(1.0 / hb, np.log(dl / hb))
    return SplittingFit(hb, dl, math.exp(intercept), -slope, r2, excluded)


# -- flea sensitivity ---------------------------------------------------------

@dataclass(frozen=True)
class SensitivityCurve:
    epsilon_values: np.ndarray
    left_well_probability: np.ndarray
    xi: float

    def crossing(self, level: float = 0.75) -> float:
        """Epsilon (log-interpolated) where the curve first crosses ``level``."""
        eps = np.asarray(self.epsilon_values)
        p = np.asarray(self.left_well_probability)
        order = np.argsort(eps)
        eps, p = eps[order], p[order]
        above = p >= level
        if above.all() or not above.any():
            raise DomainError(f"curve never crosses {level}")
        j = int(np.argmax(above))
        le0, le1 = math.log10(eps[j - 1]), math.log10(eps[j])
        frac = (level - p[j - 1]) / (p[j] - p[j - 1])
        return 10 ** (le0 + frac * (le1 - le0))

    def rows(self):
        for e, p in zip(self.epsilon_values, self.left_well_probability):
            yield (float(e), float(p), float(self.xi))


def _ground_left_probability(eps, base_op, flea_values, partition):
    op = base_op.shifted(eps * flea_values) if eps != 0.0 else base_op
    try:
        es = lowest_eigenpairs(op, 2)
    except ConvergenceError as exc:
        exc.context["epsilon"] = eps
        raise
    return float(well_probability(es.vectors[0], partition, op.grid)[0])


def flea_sensitivity_sweep(params: ModelParams, flea, epsilons, grid: Grid | None = None,
                           base=None, workers: int = 1) -> SensitivityCurve:
    """Left-well ground-state probability of ``base + eps * flea`` for each eps."""
    eps = np.asarray(epsilons, dtype=float)
    if np.any(eps < 0):
        raise DomainError("epsilons must be non-negative")
    grid = grid or default_grid(params.a)
    base = base or SymmetricDoubleWell(params.lam, params.a)
    base_values = eval_potential(PotentialSpec(base), grid)
    base_op = build_hamiltonian(grid, base_values, params)
    lo, hi = flea.support
    if lo < grid.x_min or hi > grid.x_max:
        raise DomainError(f"flea support [{lo}, {hi}] leaves the grid")
    flea_values = np.asarray(flea(grid.x), dtype=float)
    partition = find_partition(base_values, grid)
    task = partial(_ground_left_probability, base_op=base_op, flea_values=flea_values,
                   partition=partition)
    probs = pmap(task, eps.tolist(), workers)
    return SensitivityCurve(eps, np.array(probs), params.xi)


def doublet_ground_state(es: EigenSystem, w_values) -> WaveFunction:
    """Ground state of H0 + W restricted to the unperturbed doublet.

    Used where the perturbed doublet is too close to resolve directly; valid
    while W is small compared to the gap above the doublet.
    """
    h = es.grid.spacing
    psi = es.vectors[:2]
    w = np.asarray(w_values)
    wm = (psi * w) @ psi.T * h
    delta = resolved_splitting(es)
    h2 = np.array([[wm[0, 0], wm[0, 1]], [wm[1, 0], delta + wm[1, 1]]])
    _, vec = np.linalg.eigh(h2)
    coeffs = vec[:, 0]
    return WaveFunction.normalized(es.grid, coeffs @ psi)


# -- n-well potentials --------------------------------------------------------

def nwell_spectrum(params: ModelParams, n_wells: int, fleas: Sequence = (), v_b: float = 1.0,
                   n_points: int = 1024, k: int = 4, tol: float = DEFAULT_TOL) -> EigenSystem:
    """Lowest ``k`` states of v_b cos^2(pi x/2a) on the periodic box [-n a, n a)."""
    base = PeriodicCosSq(v_b, params.a, n_wells)
    grid = base.grid(n_points)
    spec = PotentialSpec(base, tuple((f, 1.0) for f in fleas))
    op = build_hamiltonian(grid, eval_potential(spec, grid), params)
    return lowest_eigenpairs(op, k, tol=tol, params=params)


def nwell_partition(n_wells: int, a: float = 1.0, n_points: int = 1024) -> WellPartition:
    base = PeriodicCosSq(1.0, a, n_wells)
    grid = base.grid(n_points)
    return find_partition(base(grid.x), grid)


def random_fleas(n_wells: int, count: int, rng: np.random.Generator, a: float = 1.0,
                 height_range=(0.01, 0.05)) -> list:
    """``count`` parabolic fleas in distinct random wells with random size and place."""
    if count > n_wells:
        raise DomainError("at most one random flea per well")
    wells = rng.choice(n_wells, size=count, replace=False)
    fleas = []
    for w in sorted(wells.tolist()):
        bottom = -n_wells * a + (2 * w + 1) * a
        half_width = a * rng.uniform(0.15, 0.35)
        center = bottom + a * rng.uniform(-0.3, 0.3)
        height = rng.uniform(*height_range)
        fleas.append(ParabolicBump(float(center), float(half_width), float(height)))
    return fleas
