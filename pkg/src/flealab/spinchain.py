"""Nearest-neighbour Ising chain with a single diagonal flea, solved matrix-free.

Basis index convention: bit i of the index is 1 when spin i points down, so
index 0 is the all-up state and sigma_z on site i is 1 - 2*bit_i.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError, DomainError

MAX_SITES = 14
MAX_K = 6


class Variant(str, Enum):
    AS_PRINTED = "as_printed"  # -sum sz sz - B sum sz, diagonal
    TRANSVERSE = "transverse"  # -sum sz sz - B sum sx


class ChainBoundary(str, Enum):
    OPEN = "open"
    RING = "ring"


@dataclass(frozen=True)
class ChainSpec:
    N: int
    B: float = 0.0
    variant: Variant = Variant.AS_PRINTED
    boundary: ChainBoundary = ChainBoundary.OPEN

    def __post_init__(self):
        if not 2 <= self.N <= MAX_SITES:
            raise DomainError(f"N={self.N} outside 2..{MAX_SITES}")
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "boundary", ChainBoundary(self.boundary))

    @property
    def dim(self) -> int:
        return 1 << self.N

    def bonds(self) -> list:
        pairs = [(i, i + 1) for i in range(self.N - 1)]
        if self.boundary is ChainBoundary.RING and self.N > 2:
            pairs.append((self.N - 1, 0))
        return pairs

    def to_dict(self) -> dict:
        return {"N": self.N, "B": self.B, "variant": self.variant.value,
                "boundary": self.boundary.value}


@dataclass(frozen=True)
class SpinFlea:
    basis_index: int
    epsilon: float


def basis_index(spins) -> int:
    """Index of a product state given as a sequence of +1 (up) / -1 (down)."""
    return sum(1 << i for i, s in enumerate(spins) if s < 0)


def all_up_index(N: int) -> int:
    return 0


def _sz(spec: ChainSpec) -> np.ndarray:
    idx = np.arange(spec.dim)
    return 1 - 2 * ((idx[:, None] >> np.arange(spec.N)[None, :]) & 1)  # (dim, N)


def magnetization(spec: ChainSpec) -> np.ndarray:
    return _sz(spec).sum(axis=1)


def base_diagonal(spec: ChainSpec) -> np.ndarray:
    sz = _sz(spec)
    diag = np.zeros(spec.dim)
    for i, j in spec.bonds():
        diag -= sz[:, i] * sz[:, j]
    if spec.variant is Variant.AS_PRINTED:
        diag -= spec.B * sz.sum(axis=1)
    return diag


def flea_diagonal(spec: ChainSpec, flea: SpinFlea | None) -> np.ndarray:
    w = np.zeros(spec.dim)
    if flea is not None:
        if not 0 <= flea.basis_index < spec.dim:
            raise DomainError("flea basis index out of range")
        w[flea.basis_index] = flea.epsilon
    return w


class ChainOperator:
    """Matrix-free H = diag(base) + diag(flea) - B sum_i sigma_x^i (transverse variant)."""

    def __init__(self, spec: ChainSpec, flea: SpinFlea | None = None):
        self.spec = spec
        self.base = base_diagonal(spec)
        self.flea = flea_diagonal(spec, flea)
        self.diag = self.base + self.flea
        self.transverse = spec.variant is Variant.TRANSVERSE and spec.B != 0.0
        self._idx = np.arange(spec.dim)

    @property
    def norm_bound(self) -> float:
        off = abs(self.spec.B) * self.spec.N if self.transverse else 0.0
        return float(np.abs(self.diag).max() + off) or 1.0

    def _offdiag(self, v):
        out = np.zeros_like(v)
        for i in range(self.spec.N):
            out += v[self._idx ^ (1 << i)]
        return -self.spec.B * out

    def apply(self, v):
        out = self.diag * v
        if self.transverse:
            out = out + self._offdiag(v)
        return out

    def energy_parts(self, v):
        """(base energy, flea energy) Rayleigh quotients in extended precision."""
        vl = np.asarray(v, dtype=np.longdouble)
        nn = np.dot(vl, vl)
        hb = self.base.astype(np.longdouble) * vl
        if self.transverse:
            hb = hb + self._offdiag(vl)
        return np.dot(vl, hb) / nn, np.dot(vl, self.flea.astype(np.longdouble) * vl) / nn

    def dense(self) -> np.ndarray:
        h = np.diag(self.diag)
        if self.transverse:
            for i in range(self.spec.N):
                h[self._idx, self._idx ^ (1 << i)] -= self.spec.B
        return h


@dataclass(frozen=True, eq=False)
class LanczosResult:
    energies: np.ndarray
    vectors: np.ndarray  # rows
    iterations: tuple
    residuals: tuple
    base_energies: tuple = ()
    flea_energies: tuple = ()


def lanczos_lowest(op: ChainOperator, k: int, tol: float = 1e-10, max_krylov: int = 120,
                   max_restarts: int = 60, seed: int = 0) -> LanczosResult:
    """k lowest eigenpairs by restarted Lanczos with full reorthogonalisation and locking.

    Each converged Ritz vector is locked and later Krylov spaces are kept
    orthogonal to it, so degenerate eigenvalues are found one vector at a
    time. Converged when ||H y - theta y|| < tol * ||H||.
    """
    dim = op.spec.dim
    if not 1 <= k <= min(MAX_K, dim):
        raise DomainError(f"k={k} must satisfy 1 <= k <= {min(MAX_K, dim)}")
    rng = np.random.default_rng(seed)
    scale = op.norm_bound
    locked: list = []
    iters, resids = [], []

    def orth(v, basis):
        for _ in range(2):
            for q in basis:
                v = v - np.dot(q, v) * q
        return v

    for _ in range(k):
        start = orth(rng.standard_normal(dim), locked)
        history = []
        for restart in range(max_restarts):
            m = min(max_krylov, dim - len(locked))
            V = []
            alpha, beta = [], []
            q = start / np.linalg.norm(start)
            for j in range(m):
                V.append(q)
                w = op.apply(q)
                a = float(np.dot(q, w))
                alpha.append(a)
                w = orth(w, locked + V)
                b = float(np.linalg.norm(w))
                if b < 1e-12 * scale or j == m - 1:
                    break
                beta.append(b)
                q = w / b
            theta, s = sla.eigh_tridiagonal(np.array(alpha), np.array(beta[: len(alpha) - 1]),
                                            select="i", select_range=(0, 0))
            y = np.array(V).T @ s[:, 0]
            y = orth(y, locked)
            y /= np.linalg.norm(y)
            ry = float(np.dot(y, op.apply(y)))
            res = float(np.linalg.norm(op.apply(y) - ry * y))
            history.append(res / scale)
            if res < tol * scale:
                break
            start = y
        else:
            raise ConvergenceError("Lanczos did not converge", iterations=max_restarts,
                                   residual=history[-1],
                                   context={"restart_residuals": history[-5:],
                                            "locked": len(locked)})
        locked.append(y)
        iters.append(restart + 1)
        resids.append(history[-1])

    # Ritz values inside the locked span, then extended-precision energies
    Y = np.array(locked)
    small = Y @ np.array([op.apply(y) for y in Y]).T
    w, c = np.linalg.eigh(0.5 * (small + small.T))
    vecs = c.T @ Y
    # components below 1e-14 of the peak are under the vectors' own accuracy
    vecs[np.abs(vecs) < 1e-14 * np.abs(vecs).max(axis=1, keepdims=True)] = 0.0
    vecs /= np.linalg.norm(vecs, axis=1)[:, None]
    parts = [op.energy_parts(v) for v in vecs]
    energies = np.array([float(b + f) for b, f in parts])
    order = np.argsort(energies, kind="stable")
    vecs = np.array([_fix_sign(v) for v in vecs[order]])
    parts = [parts[i] for i in order]
    return LanczosResult(energies[order], vecs, tuple(iters), tuple(resids),
                         tuple(p[0] for p in parts), tuple(p[1] for p in parts))


def _fix_sign(v):
    j = int(np.argmax(np.abs(v) > 0.01 * np.abs(v).max()))
    return -v if v[j] < 0 else v


@dataclass(frozen=True, eq=False)
class ChainAnalysis:
    spec: ChainSpec
    flea: SpinFlea | None
    energies: np.ndarray
    vectors: np.ndarray
    sector_weights: list  # per state: {magnetisation: weight}
    splitting: float
    polarization: float
    iterations: tuple = ()


def sector_weights(spec: ChainSpec, vec) -> dict:
    mag = magnetization(spec)
    dens = np.abs(vec) ** 2
    dens = dens / dens.sum()
    return {int(M): float(dens[mag == M].sum()) for M in np.unique(mag)}


def ground_polarization(spec: ChainSpec, vec) -> float:
    """|P(M > 0) - P(M < 0)| of a state."""
    mag = magnetization(spec)
    dens = np.abs(vec) ** 2
    dens = dens / dens.sum()
    return float(abs(dens[mag > 0].sum() - dens[mag < 0].sum()))


def chain_ground_analysis(spec: ChainSpec, flea: SpinFlea | None = None, k: int = 2,
                          tol: float = 1e-10, seed: int = 0) -> ChainAnalysis:
    """Lowest k states with magnetisation-sector weights and the lowest splitting.

    The splitting is assembled from the separate base and flea energies so
    that, for a pure basis-state doublet, it reproduces epsilon exactly.
    """
    if not 1 <= k <= MAX_K:
        raise DomainError(f"k must lie in 1..{MAX_K}")
    op = ChainOperator(spec, flea)
    res = lanczos_lowest(op, k, tol=tol, seed=seed)
    splitting = float("nan")
    if k >= 2:
        b, f = res.base_energies, res.flea_energies
        splitting = float((b[1] - b[0]) + (f[1] - f[0]))
    weights = [sector_weights(spec, v) for v in res.vectors]
    return ChainAnalysis(spec, flea, res.energies, res.vectors, weights, splitting,
                         ground_polarization(spec, res.vectors[0]), res.iterations)


def enumerate_spectrum(spec: ChainSpec, flea: SpinFlea | None = None) -> np.ndarray:
    """Sorted diagonal of the AsPrinted Hamiltonian."""
    if spec.variant is not Variant.AS_PRINTED:
        raise DomainError("direct enumeration only applies to the diagonal variant")
    return np.sort(base_diagonal(spec) + flea_diagonal(spec, flea))


def dense_lowest(spec: ChainSpec, flea: SpinFlea | None = None, k: int = 2):
    """Oracle: dense symmetric eigensolver on the assembled matrix (N <= 12)."""
    if spec.N > 12:
        raise DomainError("dense oracle limited to N <= 12")
    w, v = sla.eigh(ChainOperator(spec, flea).dense(), subset_by_index=[0, k - 1])
    return w, v.T
