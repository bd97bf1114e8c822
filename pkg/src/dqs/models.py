"""Long-range Ising and lattice Schwinger Hamiltonians, exact evolution,
and the first-order Trotter circuit for the Ising chain.

Both Hamiltonians are real symmetric in the computational basis.  They are
applied matrix-free: the LRI model splits into a part diagonal in the x basis
(couplings + transverse field) and a part diagonal in the z basis, and the
Schwinger model into a diagonal part plus nearest-neighbour spin flips.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .statevec import (CircuitParams, StepAngles, all_up, fwht, n_qubits,
                       neel_state, xx_couplings, z_signs)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LRI:
    """J sum_{j<k} X_j X_k / |k-j|^alpha + m_x sum X_j + m_z sum Z_j"""

    N: int
    J: float = 1.0
    m_x: float = 2.0
    m_z: float = 2.0
    alpha: float = 3.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("LRI needs N >= 1")

    @property
    def gate_alpha(self) -> float:
        return self.alpha

    def initial_state(self) -> np.ndarray:
        return all_up(self.N)


@dataclass(frozen=True)
class Schwinger:
    """Kogut-Susskind spin form of the lattice Schwinger model.

    w sum_j [s+_j s-_{j+1} + h.c.] + (m/2) sum_j (-1)^j Z_j
      + (J/2) sum_{j=1}^{N-1} [sum_{l<=j} (Z_l + (-1)^l)]^2
    """

    N: int
    w: float = 1.0
    J: float = 1.0
    m: float = 0.5
    gate_alpha: float = 1.0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("Schwinger model needs N >= 2")

    def initial_state(self) -> np.ndarray:
        return neel_state(self.N)

    def gauge_expansion(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Expand the squared gauge sums into (pair couplings, fields, constant).

        Returns ``(K, h, c)`` with the gauge energy equal to
        ``sum_{a<b} K[a,b] z_a z_b + sum_a h[a] z_a + c`` (0-based sites).
        """
        N, J = self.N, self.J
        stagger = np.array([(-1) ** l for l in range(1, N + 1)], dtype=float)
        offsets = np.cumsum(stagger)  # offsets[j-1] = sum_{l<=j} (-1)^l
        K = np.zeros((N, N))
        h = np.zeros(N)
        c = 0.0
        for j in range(1, N):
            # L_j^2 = sum_{a,b<=j} z_a z_b + 2 c_j sum_{a<=j} z_a + c_j^2, z_a^2 = 1
            cj = offsets[j - 1]
            for a in range(j):
                for b in range(a + 1, j):
                    K[a, b] += J
                h[a] += J * cj
            c += 0.5 * J * (j + cj * cj)
        return K, h, c


HamiltonianSpec = LRI | Schwinger


class Hamiltonian:
    """Matrix-free action of a model Hamiltonian on state vectors."""

    def __init__(self, spec: HamiltonianSpec):
        self.spec = spec
        N = spec.N
        s = z_signs(N).astype(float)
        if isinstance(spec, LRI):
            C = xx_couplings(N, spec.alpha)
            self.diag_x = spec.J * np.einsum("ij,jk,ik->i", s, C, s) + spec.m_x * s.sum(1)
            self.diag_z = spec.m_z * s.sum(1)
            self.bonds = []
        elif isinstance(spec, Schwinger):
            stagger = np.array([(-1) ** j for j in range(1, N + 1)], dtype=float)
            K, h, c = spec.gauge_expansion()
            gauge = np.einsum("ij,jk,ik->i", s, K, s) + s @ h + c
            self.diag_x = None
            self.diag_z = 0.5 * spec.m * (s @ stagger) + gauge
            self.bonds = self._hopping_bonds(N)
        else:
            raise TypeError(f"unknown Hamiltonian spec {spec!r}")

    @staticmethod
    def _hopping_bonds(N: int) -> list[tuple[np.ndarray, np.ndarray]]:
        # s+_j s-_{j+1} + h.c. flips an antiparallel pair (j, j+1), amplitude 1
        idx = np.arange(1 << N)
        bonds = []
        for b in range(N - 1):
            mask = (1 << b) | (1 << (b + 1))
            anti = ((idx >> b) & 1) != ((idx >> (b + 1)) & 1)
            src = idx[anti]
            bonds.append((src, src ^ mask))
        return bonds

    @property
    def N(self) -> int:
        return self.spec.N

    def apply(self, psi: np.ndarray) -> np.ndarray:
        if psi.shape != (1 << self.N,):
            raise ValueError(f"state shape {psi.shape} does not match N={self.N}")
        out = self.diag_z * psi
        if self.diag_x is not None:
            out = out + fwht(self.diag_x * fwht(psi))
        for src, dst in self.bonds:
            out[dst] += self.spec.w * psi[src]
        return out

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.vdot(psi, self.apply(psi)).real)

    def dense(self) -> np.ndarray:
        """Real symmetric 2**N x 2**N matrix."""
        N = self.N
        dim = 1 << N
        H = np.diag(self.diag_z).astype(float)
        if self.diag_x is not None:
            had = scipy.linalg.hadamard(dim).astype(float)
            H += (had * self.diag_x) @ had / dim
        for src, dst in self.bonds:
            H[dst, src] += self.spec.w
        return H

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.dense())


_cache_lock = threading.Lock()
_hamiltonians: dict = {}


def hamiltonian(spec: HamiltonianSpec) -> Hamiltonian:
    """Shared, lazily built Hamiltonian per spec."""
    with _cache_lock:
        H = _hamiltonians.get(spec)
        if H is None:
            H = _hamiltonians[spec] = Hamiltonian(spec)
        return H


def apply_hamiltonian(spec: HamiltonianSpec, psi: np.ndarray) -> np.ndarray:
    return hamiltonian(spec).apply(psi)


@dataclass(frozen=True)
class EvolutionConfig:
    tau: float
    method: str = "auto"  # "dense", "krylov" or "auto"
    krylov_dim: int = 30
    substep_tolerance: float = 1e-10
    dense_max_N: int = 12
    auto_dense_up_to: int = 10

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.method not in ("auto", "dense", "krylov"):
            raise ValueError(f"unknown evolution method {self.method!r}")
        if self.krylov_dim < 2:
            raise ValueError("krylov_dim must be >= 2")


class KrylovBreakdown(RuntimeError):
    pass


def _lanczos_step(H: Hamiltonian, v: np.ndarray, dt: float, m: int,
                  tol: float) -> tuple[np.ndarray, float]:
    """exp(-i H dt) v on an m-dimensional Krylov space.

    Returns the propagated vector and an a-posteriori error estimate.  Happy
    breakdown (invariant subspace) gives an exact result with zero error.
    """
    beta0 = np.linalg.norm(v)
    V = np.zeros((m + 1, v.size), dtype=complex)
    a = np.zeros(m)
    b = np.zeros(m)
    V[0] = v / beta0
    k = m
    for j in range(m):
        w = H.apply(V[j])
        a[j] = np.vdot(V[j], w).real
        w -= a[j] * V[j]
        if j > 0:
            w -= b[j - 1] * V[j - 1]
        # full reorthogonalisation keeps the basis honest at tight tolerances
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b[j] = np.linalg.norm(w)
        if b[j] < 1e-14 * max(1.0, abs(a[j])):
            k = j + 1
            break
        V[j + 1] = w / b[j]
    evals, evecs = scipy.linalg.eigh_tridiagonal(a[:k], b[: k - 1])
    coeffs = evecs @ (np.exp(-1j * evals * dt) * evecs[0].conj())
    if k < m or b[k - 1] < 1e-14:
        err = 0.0
    else:
        err = b[k - 1] * abs(coeffs[k - 1])
    return beta0 * (V[:k].T @ coeffs), err


def _krylov_evolve(H: Hamiltonian, psi0: np.ndarray, cfg: EvolutionConfig) -> np.ndarray:
    psi = psi0.astype(complex)
    t, dt = 0.0, cfg.tau
    while t < cfg.tau:
        dt = min(dt, cfg.tau - t)
        new, err = _lanczos_step(H, psi, dt, cfg.krylov_dim, cfg.substep_tolerance)
        if err > cfg.substep_tolerance or not np.all(np.isfinite(new)):
            dt *= 0.5
            if dt < 1e-12 * max(cfg.tau, 1.0):
                raise KrylovBreakdown(f"substep shrank below resolution at t={t}")
            continue
        psi = new
        t += dt
        dt *= 1.5
    return psi


def exact_evolve(spec: HamiltonianSpec, psi0: np.ndarray, cfg: EvolutionConfig) -> np.ndarray:
    """exp(-i H tau) psi0."""
    N = n_qubits(psi0)
    if N != spec.N:
        raise ValueError(f"state has N={N}, model has N={spec.N}")
    if cfg.tau == 0:
        return psi0.astype(complex, copy=True)
    method = cfg.method
    if method == "auto":
        method = "dense" if N <= cfg.auto_dense_up_to else "krylov"
    H = hamiltonian(spec)
    if method == "dense":
        if N > cfg.dense_max_N:
            raise ValueError(f"dense evolution refused above N={cfg.dense_max_N}")
        evals, evecs = H.spectrum
        return evecs @ (np.exp(-1j * evals * cfg.tau) * (evecs.T @ psi0))
    return _krylov_evolve(H, psi0, cfg)


def trotter_params(spec: HamiltonianSpec, tau: float, n: int) -> CircuitParams:
    """First-order Trotter circuit with n entangling gates (LRI only)."""
    if not isinstance(spec, LRI):
        raise ValueError("only the LRI model has a natural Trotter decomposition "
                         "into the trapped-ion gate set")
    if n < 1:
        raise ValueError("n must be >= 1")
    N = spec.N
    step = dict(theta_xx=spec.J * tau / n,
                theta_z=np.full(N, spec.m_z * tau / n),
                theta_x=np.full(N, spec.m_x * tau / n),
                alpha=spec.alpha)
    return CircuitParams([StepAngles(**step) for _ in range(n)])


def model_from_dict(d: dict) -> HamiltonianSpec:
    d = dict(d)
    name = str(d.pop("name", "")).lower()
    cls = {"lri": LRI, "schwinger": Schwinger}.get(name)
    if cls is None:
        raise ValueError(f"unknown model name {name!r} (expected 'lri' or 'schwinger')")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ValueError(f"bad parameters for model {name!r}: {exc}") from exc
