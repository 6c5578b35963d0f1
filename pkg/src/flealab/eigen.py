"""Low-lying eigenpairs of the finite-difference Hamiltonians.

Dirichlet operators are symmetric tridiagonal and go through LAPACK's
Sturm-sequence bisection (``stebz``) followed by inverse iteration
(``stein``). When the potential is exactly mirror symmetric on a symmetric
grid the matrix is first split into its even and odd parity blocks, so the
tunnelling doublet is resolved as two separate lowest eigenvalues instead of
a near-degenerate cluster. That is what makes splittings far below machine
precision of the energies computable (see :attr:`EigenSystem.flux_splitting`).
Periodic operators use a dense solver below 4096 nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .core import DiscretizedOperator, Grid, ModelParams, WaveFunction, _frozen
from .errors import ConvergenceError, DomainError

DENSE_LIMIT = 4096
DEFAULT_TOL = 1e-9
# bisection is run to full precision; the default eps*||T|| is too coarse for doublets
_BISECT_TOL = 4 * np.finfo(float).tiny


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending energies with orthonormal real eigenvectors (rows of ``vectors``).

    ``flux_splitting`` is only set when the operator was solved in parity
    blocks. It is E_odd - E_even of the lowest pair, evaluated from the
    discrete current across the mirror plane, which keeps full relative
    accuracy even when the splitting is below the rounding level of E_0.
    """

    energies: np.ndarray
    vectors: np.ndarray
    grid: Grid
    params: ModelParams | None = None
    parity: np.ndarray | None = None
    flux_splitting: float | None = None

    def __len__(self):
        return len(self.energies)

    def state(self, i: int) -> WaveFunction:
        return WaveFunction(self.grid, self.vectors[i])

    def gram(self) -> np.ndarray:
        v = self.vectors
        return (v @ v.conj().T) * self.grid.spacing


def fix_sign(vec: np.ndarray) -> np.ndarray:
    """Make the leftmost antinode positive.

    The antinode is the first local maximum of |v| among nodes carrying at
    least 1% of the peak amplitude.
    """
    amp = np.abs(vec)
    j = int(np.argmax(amp >= 0.01 * amp.max()))
    while j + 1 < len(amp) and amp[j + 1] >= amp[j]:
        j += 1
    return -vec if vec[j] < 0 else vec


def _tridiag_lowest(d, e, k):
    k = min(k, len(d))
    w, v = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1),
                                lapack_driver="stebz", tol=_BISECT_TOL)
    return w, v.T


def _parity_blocks(op: DiscretizedOperator, k: int):
    d, e = np.asarray(op.diagonal), np.asarray(op.off_diagonal)
    n = len(d)
    if n % 2 == 0:
        m = n // 2
        de, do = d[:m].copy(), d[:m].copy()
        de[-1] += e[m - 1]
        do[-1] -= e[m - 1]
        we, ue = _tridiag_lowest(de, e[: m - 1], k)
        wo, uo = _tridiag_lowest(do, e[: m - 1], k)
        even = np.hstack([ue, ue[:, ::-1]])
        odd = np.hstack([uo, -uo[:, ::-1]])
        # (E_odd - E_even) sum_left psi0 psi1 = -2 * coupling * psi0[m-1] psi1[m-1]
        p0, p1 = even[0], odd[0]
        flux = -2.0 * e[m - 1] * p0[m - 1] * p1[m - 1] / np.dot(p0[:m], p1[:m])
    else:
        c = (n - 1) // 2
        ee = e[:c].copy()
        ee[-1] *= math.sqrt(2.0)
        we, ue = _tridiag_lowest(d[: c + 1], ee, k)
        wo, uo = _tridiag_lowest(d[:c], e[: c - 1], k)
        left = ue[:, :c] / math.sqrt(2.0)
        even = np.hstack([left, ue[:, c:c + 1], left[:, ::-1]])
        zero = np.zeros((uo.shape[0], 1))
        odd = np.hstack([uo, zero, -uo[:, ::-1]])
        p0, p1 = even[0], odd[0]
        flux = -e[c - 1] * p1[c - 1] * p0[c] / np.dot(p0[:c], p1[:c])
    energies = np.concatenate([we, wo])
    vectors = np.vstack([even, odd])
    parity = np.concatenate([np.ones(len(we), int), -np.ones(len(wo), int)])
    order = np.argsort(energies, kind="stable")[:k]
    flux = float(flux) if set(order[:2]) == {0, len(we)} else None
    return energies[order], vectors[order], parity[order], flux


def _dense_lowest(op: DiscretizedOperator, k: int):
    n = op.grid.n_points
    if n <= DENSE_LIMIT:
        w, v = sla.eigh(op.to_dense(), subset_by_index=[0, k - 1])
        return w, v.T
    from scipy.sparse.linalg import eigsh

    sigma = float(np.min(op.diagonal) - op.norm_bound * 1e-3 - 1.0)
    w, v = eigsh(op.to_sparse(), k=k, sigma=sigma, which="LM")
    order = np.argsort(w)
    return w[order], v[:, order].T


def is_mirror_symmetric(op: DiscretizedOperator) -> bool:
    if op.corner is not None or not op.grid.is_symmetric:
        return False
    d = np.asarray(op.diagonal)
    return bool(np.array_equal(d, d[::-1]) and np.all(op.off_diagonal == op.off_diagonal[0]))


def lowest_eigenpairs(op: DiscretizedOperator, k: int, tol: float = DEFAULT_TOL,
                      params: ModelParams | None = None, use_parity: bool = True) -> EigenSystem:
    """The ``k`` lowest eigenpairs of ``op``.

    Each pair satisfies ||H v - E v|| < tol * ||H|| (Gershgorin norm, unit
    Euclidean v); otherwise :class:`ConvergenceError` is raised with the
    worst residual. Eigenvectors are real, normalised with the grid weight,
    and signed so that their leftmost antinode is positive.
    """
    n = op.grid.n_points
    if k < 1 or k > max(1, n // 4):
        raise DomainError(f"k={k} must satisfy 1 <= k <= n_points/4")
    parity = flux = None
    attempts = 1
    if op.corner is not None:
        energies, vectors = _dense_lowest(op, k)
    elif use_parity and is_mirror_symmetric(op):
        energies, vectors, parity, flux = _parity_blocks(op, k)
    else:
        energies, vectors = _tridiag_lowest(op.diagonal, op.off_diagonal, k)

    vectors = np.array([fix_sign(v / np.linalg.norm(v)) for v in vectors])
    residuals = _residuals(op, energies, vectors)
    scale = op.norm_bound
    if residuals.max() >= tol * scale and op.corner is None:
        # one retry on the dense path before giving up
        attempts += 1
        energies, vectors = _dense_lowest(op, k)
        parity = flux = None
        vectors = np.array([fix_sign(v / np.linalg.norm(v)) for v in vectors])
        residuals = _residuals(op, energies, vectors)
    if residuals.max() >= tol * scale:
        raise ConvergenceError("eigenpairs did not reach the residual tolerance",
                               iterations=attempts, residual=float(residuals.max() / scale))
    h = op.grid.spacing
    return EigenSystem(_frozen(energies), _frozen(vectors / math.sqrt(h)), op.grid, params,
                       None if parity is None else _frozen(parity, int), flux)


def _residuals(op, energies, vectors):
    return np.array([np.linalg.norm(op.matvec(v) - E * v) for E, v in zip(energies, vectors)])
