"""Two-outcome measurement toy: system qubit times a d-dimensional environment.

A joint state is stored as a 2 x d array ``A`` with A[i] the (unnormalised)
environment vector attached to pointer state |m_i>. Operators on the joint
space are 2d x 2d with the system index major.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special
from scipy.stats import unitary_group

from .errors import ConstructionError, DomainError

TOL = 1e-12


def _opnorm(m) -> float:
    return float(np.linalg.norm(m, 2))


@dataclass(frozen=True, eq=False)
class JointState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.ndim != 2 or a.shape[0] != 2:
            raise DomainError("joint amplitudes must have shape (2, d)")
        if abs(np.linalg.norm(a) - 1.0) > TOL:
            raise DomainError("joint state must have unit norm")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @property
    def d(self) -> int:
        return self.amplitudes.shape[1]

    @classmethod
    def product(cls, system, env) -> "JointState":
        s = np.asarray(system, complex)
        e = np.asarray(env, complex)
        return cls(np.outer(s / np.linalg.norm(s), e / np.linalg.norm(e)))

    @classmethod
    def random(cls, d: int, rng: np.random.Generator) -> "JointState":
        a = rng.standard_normal((2, d)) + 1j * rng.standard_normal((2, d))
        return cls(a / np.linalg.norm(a))

    def vector(self) -> np.ndarray:
        return self.amplitudes.reshape(-1)


@dataclass(frozen=True, eq=False)
class ReducedState:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise DomainError("reduced state must be 2 x 2")
        if np.abs(m - m.conj().T).max() > TOL:
            raise DomainError("reduced state is not Hermitian")
        if abs(np.trace(m).real - 1.0) > TOL:
            raise DomainError("reduced state trace differs from 1")
        if np.linalg.eigvalsh(m).min() < -TOL:
            raise DomainError("reduced state is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()


def reduced_state(psi: JointState) -> ReducedState:
    """rho_S[i, j] = <E_j|E_i> for the pointer-basis components."""
    a = psi.amplitudes
    return ReducedState(a @ a.conj().T)


@dataclass(frozen=True, eq=False)
class SchmidtData:
    coefficients: np.ndarray
    system_vectors: np.ndarray  # columns
    environment_vectors: np.ndarray  # rows

    def recompose(self) -> np.ndarray:
        return (self.system_vectors * self.coefficients) @ self.environment_vectors


def schmidt_decompose(psi: JointState) -> SchmidtData:
    u, s, vh = np.linalg.svd(psi.amplitudes, full_matrices=False)
    return SchmidtData(s, u, vh)


@dataclass(frozen=True, eq=False)
class BlockUnitary:
    d: int
    U11: np.ndarray
    U12: np.ndarray
    U21: np.ndarray
    U22: np.ndarray
    eps: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return np.block([[self.U11, self.U12], [self.U21, self.U22]])

    @property
    def off_block_norms(self) -> tuple:
        return _opnorm(self.U12), _opnorm(self.U21)

    @property
    def diagonal_defects(self) -> tuple:
        eye = np.eye(self.d)
        return (_opnorm(self.U11.conj().T @ self.U11 - eye),
                _opnorm(self.U22.conj().T @ self.U22 - eye))

    def apply(self, psi: JointState) -> JointState:
        a = psi.amplitudes
        out = np.vstack([self.U11 @ a[0] + self.U12 @ a[1], self.U21 @ a[0] + self.U22 @ a[1]])
        return JointState(out / np.linalg.norm(out))

    @classmethod
    def from_matrix(cls, m: np.ndarray, eps: float = 0.0) -> "BlockUnitary":
        d = m.shape[0] // 2
        return cls(d, m[:d, :d], m[:d, d:], m[d:, :d], m[d:, d:], eps)


def _hermitian_exp(k: np.ndarray, t: float) -> np.ndarray:
    if t == 0.0:
        return np.eye(k.shape[0], dtype=complex)
    w, v = np.linalg.eigh(k)
    return (v * np.exp(1j * t * w)) @ v.conj().T


def _random_offblock_generator(d, rng):
    b = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    b /= _opnorm(b)
    z = np.zeros((d, d), complex)
    return np.block([[z, b], [b.conj().T, z]])


def make_block_unitary(d: int, flavor="diagonal", seed: int = 0,
                       eps: float | None = None) -> BlockUnitary:
    """Haar-random block-diagonal unitary, optionally composed with exp(i eps K).

    ``flavor`` is "diagonal" or "almost" (then ``eps`` is required); K is a
    random Hermitian matrix with zero diagonal blocks and unit-norm
    off-diagonal blocks, so the off-blocks of the product have norm
    sin(eps) <= eps.
    """
    if d < 2:
        raise DomainError("environment dimension must be at least 2")
    rng = np.random.default_rng(seed)
    u1 = unitary_group.rvs(d, random_state=rng)
    u2 = unitary_group.rvs(d, random_state=rng)
    z = np.zeros((d, d), complex)
    if flavor == "diagonal":
        return BlockUnitary(d, u1, z, z.copy(), u2, 0.0)
    if flavor != "almost":
        raise DomainError(f"unknown flavor {flavor!r}")
    if eps is None or not 0.0 < eps < 1.0:
        raise DomainError("almost-diagonal flavor needs 0 < eps < 1")
    k = _random_offblock_generator(d, rng)
    m = np.block([[u1, z], [z, u2]]) @ _hermitian_exp(k, eps)
    out = BlockUnitary.from_matrix(m, eps)
    if max(out.off_block_norms) > eps or max(out.diagonal_defects) >= eps:
        raise ConstructionError(f"constructed unitary violates the eps={eps} bounds: "
                                f"off-blocks {out.off_block_norms}, defects {out.diagonal_defects}")
    return out


@dataclass(frozen=True)
class DriftResult:
    initial_diag: tuple
    final_diag: tuple
    drift: float
    eps: float

    @property
    def sharp_bound(self) -> float:
        e = self.eps
        return e * (4.0 + 4.0 * e + 8.0 * math.sqrt(1.0 + e))

    @property
    def loose_bound(self) -> float:
        return 24.0 * self.eps


def diagonal_drift(u: BlockUnitary, psi0: JointState) -> DriftResult:
    """Change of the pointer-basis diagonal of rho_S under ``u``."""
    before = reduced_state(psi0).diagonal
    a = psi0.amplitudes
    after_amp = np.vstack([u.U11 @ a[0] + u.U12 @ a[1], u.U21 @ a[0] + u.U22 @ a[1]])
    after = np.real(np.sum(np.abs(after_amp) ** 2, axis=1))
    drift = float(np.max(np.abs(after - before)))
    return DriftResult(tuple(before), tuple(after), drift, u.eps)


def drift_batch(d: int, flavor: str, eps: float | None, seeds: Sequence[int]) -> list:
    """(seed, DriftResult) for one random unitary and one random state per seed."""
    out = []
    for s in seeds:
        u = make_block_unitary(d, flavor, seed=s, eps=eps)
        psi = JointState.random(d, np.random.default_rng([s, 1]))
        out.append((s, diagonal_drift(u, psi)))
    return out


# -- counterfactual-free bound ----------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    eps1: float
    eps2: float

    @property
    def holds(self) -> bool:
        if self.rhs == 0.0:
            return self.lhs == 0.0
        return self.lhs < self.rhs

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs else 0.0


def _near_unit(v, rng, radius):
    """Unit vector whose distance to unit ``v`` is at most radius (strictly below when > 0)."""
    if radius == 0.0:
        return v.copy()
    n = rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
    n -= np.vdot(v, n) * v
    n /= np.linalg.norm(n)
    alpha = 2.0 * math.asin(min(1.0, radius / 2.0)) * rng.uniform(0.05, 0.95)
    return math.cos(alpha) * v + math.sin(alpha) * n


def _evaluate(u1, u2, uphi, r1, r2, rphi, d):
    m1, m2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    # both sides assembled branch by branch, so identical inputs cancel exactly
    left = uphi @ np.kron(m1, rphi) + uphi @ np.kron(m2, rphi)
    right = u1 @ np.kron(m1, r1) + u2 @ np.kron(m2, r2)
    return float(np.linalg.norm(left - right) / math.sqrt(2.0))


def counterfactual_bound_check(d: int = 16, eps1: float = 1e-2, eps2: float = 1e-2,
                               seed: int = 0) -> BoundCheck:
    """Evaluate both sides of the run-to-run estimate for one random instance.

    U_1 and U_2 are block diagonal (they send m_i (x) r_i to m_i (x) E_i);
    U_phi is a generic perturbation. All pairwise operator-norm distances
    are certified < eps2 and pointer-state distances < eps1.
    """
    if eps1 < 0 or eps2 < 0:
        raise DomainError("eps values must be non-negative")
    rng = np.random.default_rng(seed)
    base = make_block_unitary(d, "diagonal", seed=int(rng.integers(2**63))).matrix
    n = 2 * d

    def gen(block_diag):
        k = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        k = 0.5 * (k + k.conj().T)
        if block_diag:
            k[:d, d:] = 0.0
            k[d:, :d] = 0.0
        return k / _opnorm(k)

    t = 0.45 * eps2
    u1 = base @ _hermitian_exp(gen(True), t * rng.uniform(0.1, 1.0))
    u2 = base @ _hermitian_exp(gen(True), t * rng.uniform(0.1, 1.0))
    uphi = base @ _hermitian_exp(gen(False), t * rng.uniform(0.1, 1.0))
    r = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    r /= np.linalg.norm(r)
    rphi = r
    r1 = _near_unit(r, rng, 0.5 * eps1)
    r2 = _near_unit(r, rng, 0.5 * eps1)
    pairs_u = [(u1, u2), (u1, uphi), (u2, uphi)]
    pairs_r = [(r1, r2), (r1, rphi), (r2, rphi)]
    if eps2 > 0 and max(_opnorm(a - b) for a, b in pairs_u) >= eps2:
        raise ConstructionError("evolution operators are not pairwise within eps2")
    if eps1 > 0 and max(np.linalg.norm(a - b) for a, b in pairs_r) >= eps1:
        raise ConstructionError("pointer states are not pairwise within eps1")
    lhs = _evaluate(u1, u2, uphi, r1, r2, rphi, d)
    return BoundCheck(lhs, math.sqrt(2.0) * (eps1 + eps2), eps1, eps2)


def adversarial_bound_search(d: int = 16, eps1: float = 1e-2, eps2: float = 1e-2,
                             n_angles: int = 41, seed: int = 0) -> BoundCheck:
    """Largest lhs over aligned perturbations: U_phi = exp(i theta) U_i and r_i rotated off r_phi.

    Angles are scanned on a grid up to the largest values the constraints
    allow (scaled by 1 - 1e-9 to keep them strict).
    """
    rng = np.random.default_rng(seed)
    base = make_block_unitary(d, "diagonal", seed=seed).matrix
    r = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    r /= np.linalg.norm(r)
    s = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    s -= np.vdot(r, s) * r
    s /= np.linalg.norm(s)
    shrink = 1.0 - 1e-9
    theta_max = 2.0 * math.asin(min(1.0, shrink * eps2 / 2.0))
    alpha_max = 2.0 * math.asin(min(1.0, shrink * eps1 / 2.0))
    best = 0.0
    for theta in np.linspace(-theta_max, theta_max, n_angles):
        uphi = np.exp(1j * theta) * base
        for alpha in np.linspace(0.0, alpha_max, n_angles):
            for chi in np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False):
                r1 = math.cos(alpha) * r + math.sin(alpha) * np.exp(1j * chi) * s
                best = max(best, _evaluate(base, base, uphi, r1, r1, r, d))
    return BoundCheck(best, math.sqrt(2.0) * (eps1 + eps2), eps1, eps2)


# -- almost orthogonality ---------------------------------------------------

@dataclass(frozen=True)
class OrthoReport:
    epsilon: float
    worst_distance: float
    lower_bound: float
    eta: float
    trials: int

    @property
    def holds(self) -> bool:
        # the bound is attained at |<A|B>| = epsilon, so allow last-bit rounding
        return self.worst_distance >= self.lower_bound - 4 * np.finfo(float).eps


def almost_ortho_check(epsilon: float, trials: int = 1000, seed: int = 0,
                       dim: int = 8) -> OrthoReport:
    """Sample unit pairs with |<A|B>| <= epsilon and compare ||A - B|| with sqrt(2 - 2 epsilon)."""
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError("epsilon must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(trials):
        a = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        a /= np.linalg.norm(a)
        perp = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        perp -= np.vdot(a, perp) * a
        perp /= np.linalg.norm(perp)
        c = epsilon * rng.uniform() * np.exp(2j * math.pi * rng.uniform())
        b = c * a + math.sqrt(1.0 - abs(c) ** 2) * perp
        worst = min(worst, float(np.linalg.norm(a - b)))
    bound = math.sqrt(2.0 - 2.0 * epsilon)
    return OrthoReport(epsilon, worst, bound, math.sqrt(2.0) - bound, trials)


# -- Stern-Gerlach -------------------------------------------------------------

@dataclass(frozen=True)
class SGPackets:
    center_plus: float
    center_minus: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")

    @classmethod
    def symmetric(cls, s: float, sigma: float) -> "SGPackets":
        """Packets centred at +s and -s."""
        return cls(s, -s, sigma)

    @property
    def separation(self) -> float:
        return self.center_plus - self.center_minus

    def psi(self, sign: int):
        c = self.center_plus if sign > 0 else self.center_minus
        norm = (2.0 * math.pi * self.sigma**2) ** -0.25
        sig2 = 4.0 * self.sigma**2
        return lambda x: norm * math.exp(-((x - c) ** 2) / sig2)

    def full_overlap(self) -> float:
        """Closed form of int psi_+ psi_- dx."""
        return math.exp(-self.separation**2 / (8.0 * self.sigma**2))

    def mass(self, sign: int, lo: float, hi: float) -> float:
        """Closed form of int_lo^hi |psi_sign|^2 via erfc."""
        c = self.center_plus if sign > 0 else self.center_minus
        k = math.sqrt(2.0) * self.sigma
        return 0.5 * (special.erfc((lo - c) / k) - special.erfc((hi - c) / k))


@dataclass(frozen=True, eq=False)
class SGResult:
    state: ReducedState
    raw: np.ndarray
    captured: float


def _quad(f, lo, hi, points=()):
    pts = [p for p in points if lo < p < hi] if math.isfinite(lo) and math.isfinite(hi) else None
    val, _ = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400, points=pts or None)
    return val


def stern_gerlach_density(alpha: complex, beta: complex, packets: SGPackets,
                          slit: tuple | None = None) -> SGResult:
    """Spin density matrix after a slit, by quadrature of the packet products.

    ``slit`` is (lo, hi) with infinite ends allowed, or None for the full
    line. Returns the trace-one state together with the raw sub-normalised
    matrix.
    """
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1.0) > 1e-12:
        raise DomainError("|alpha|^2 + |beta|^2 must be 1")
    lo, hi = slit if slit is not None else (-math.inf, math.inf)
    if not hi > lo:
        raise DomainError("slit interval is empty")
    pp, pm = packets.psi(+1), packets.psi(-1)
    centres = (packets.center_plus, packets.center_minus)

    def split(f):
        # break the line at the packet centres so quad sees both peaks
        cuts = sorted({lo, hi, *[c for c in centres if lo < c < hi]})
        return sum(_quad(f, a, b) for a, b in zip(cuts, cuts[1:]))

    m_plus = split(lambda x: pp(x) ** 2)
    m_minus = split(lambda x: pm(x) ** 2)
    cross = split(lambda x: pp(x) * pm(x))
    # rho[i, j] = c_i conj(c_j) <psi_j|psi_i>, same convention as reduced_state
    raw = np.array([[abs(alpha) ** 2 * m_plus, alpha * np.conj(beta) * cross],
                    [np.conj(alpha) * beta * cross, abs(beta) ** 2 * m_minus]], dtype=complex)
    captured = float(raw[0, 0].real + raw[1, 1].real)
    if captured < 1e-12:
        raise DomainError(f"slit captures mass {captured:.3e}; post-selection impossible")
    return SGResult(ReducedState(raw / captured), raw, captured)
