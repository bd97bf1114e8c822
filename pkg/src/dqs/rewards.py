"""Figures of merit: fidelity, local (relative-entropy) reward, the
observable error bound, and physical observables.

Two-site density matrices use the ordering |s_j s_k> with site j as the
leading tensor factor, so index = 2*bit_j + bit_k and |up up> is index 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, NamedTuple

import numpy as np

from .models import HamiltonianSpec, hamiltonian
from .statevec import n_qubits, overlap, z_signs

EIGEN_FLOOR = 1e-12


class RewardKind(str, enum.Enum):
    FIDELITY = "fidelity"
    LOCAL = "local"


def _check_pair(N: int, j: int, k: int) -> None:
    if not 1 <= j < k <= N:
        raise ValueError(f"need 1 <= j < k <= N, got j={j}, k={k}, N={N}")


def partial_trace_pair(psi: np.ndarray, j: int, k: int) -> np.ndarray:
    """Reduced 4x4 density matrix of sites j < k."""
    N = n_qubits(psi)
    _check_pair(N, j, k)
    t = psi.reshape(-1, 2, 1 << (k - j - 1), 2, 1 << (j - 1))
    rho = np.einsum("akbjc,albic->jkil", t, t.conj())
    return rho.reshape(4, 4)


def _validate_density(rho: np.ndarray, name: str) -> None:
    if rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{name} is not square")
    if not np.allclose(rho, rho.conj().T, atol=1e-10):
        raise ValueError(f"{name} is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-10:
        raise ValueError(f"{name} does not have unit trace")


def relative_entropy(rho: np.ndarray, sigma: np.ndarray, floor: float = EIGEN_FLOOR) -> float:
    """D(rho || sigma) = Tr rho (log rho - log sigma) in nats.

    The spectrum of ``sigma`` is floored at ``floor`` and renormalised, which
    keeps D finite when sigma is rank deficient.  Renormalising shifts D by at
    most ``(dim - 1) * floor``; values below ``dim * floor`` are reported as 0.
    """
    _validate_density(rho, "rho")
    _validate_density(sigma, "sigma")
    p = np.clip(np.linalg.eigvalsh(rho), 0.0, None)
    p = p / p.sum()
    nz = p > 0
    neg_entropy = float(np.sum(p[nz] * np.log(p[nz])))

    lam, vecs = np.linalg.eigh(sigma)
    lam = np.maximum(lam, floor)
    lam = lam / lam.sum()
    weights = np.einsum("ik,ij,jk->k", vecs.conj(), rho, vecs).real
    cross = float(weights @ np.log(lam))
    d = neg_entropy - cross
    return 0.0 if d < len(lam) * floor else d


def pair_divergences(psi_dqs: np.ndarray, psi_target: np.ndarray,
                     floor: float = EIGEN_FLOOR) -> dict[tuple[int, int], float]:
    """D(rho^{jk} || sigma^{jk}) for all pairs; rho from the target state."""
    N = n_qubits(psi_dqs)
    if psi_target.shape != psi_dqs.shape:
        raise ValueError("dimension mismatch")
    return {
        (j, k): relative_entropy(partial_trace_pair(psi_target, j, k),
                                 partial_trace_pair(psi_dqs, j, k), floor)
        for j, k in combinations(range(1, N + 1), 2)
    }


def local_reward_raw(psi_dqs: np.ndarray, psi_target: np.ndarray,
                     floor: float = EIGEN_FLOOR) -> float:
    """1 - mean_{j<k} sqrt(D), without clamping."""
    N = n_qubits(psi_dqs)
    if N < 2:
        raise ValueError("local reward needs N >= 2")
    D = pair_divergences(psi_dqs, psi_target, floor)
    return 1.0 - float(np.mean(np.sqrt(list(D.values()))))


def local_reward(psi_dqs: np.ndarray, psi_target: np.ndarray,
                 floor: float = EIGEN_FLOOR) -> float:
    return min(max(local_reward_raw(psi_dqs, psi_target, floor), 0.0), 1.0)


def fidelity_reward(psi_dqs: np.ndarray, psi_target: np.ndarray) -> float:
    return min(abs(overlap(psi_dqs, psi_target)) ** 2, 1.0)


def reward(kind: RewardKind | str, psi_dqs: np.ndarray, psi_target: np.ndarray) -> float:
    if RewardKind(kind) is RewardKind.LOCAL:
        return local_reward(psi_dqs, psi_target)
    return fidelity_reward(psi_dqs, psi_target)


@dataclass
class ObservableReport:
    sx: np.ndarray
    sz: np.ndarray
    mx: float
    mz: float
    energy: float
    loschmidt: float
    nu: float
    czz: np.ndarray = field(default_factory=lambda: np.zeros(0))
    czz_mid: float = float("nan")

    def row(self) -> dict[str, float]:
        """Flat mapping in the fixed CSV column order."""
        out = {"loschmidt": self.loschmidt, "energy": self.energy, "mx": self.mx,
               "mz": self.mz, "nu": self.nu, "czz_mid": self.czz_mid}
        out.update({f"sx_{j + 1}": float(v) for j, v in enumerate(self.sx)})
        out.update({f"sz_{j + 1}": float(v) for j, v in enumerate(self.sz)})
        out.update({f"czz_{j + 1}": float(v) for j, v in enumerate(self.czz)})
        return out


def observable_columns(N: int) -> list[str]:
    return (["loschmidt", "energy", "mx", "mz", "nu", "czz_mid"]
            + [f"sx_{j}" for j in range(1, N + 1)]
            + [f"sz_{j}" for j in range(1, N + 1)]
            + [f"czz_{j}" for j in range(1, N)])


def observable_report(psi: np.ndarray, spec: HamiltonianSpec, psi0: np.ndarray) -> ObservableReport:
    N = n_qubits(psi)
    if psi0.shape != psi.shape or spec.N != N:
        raise ValueError("dimension mismatch between state, initial state and model")
    prob = np.abs(psi) ** 2
    z = z_signs(N)
    sz = prob @ z
    idx = np.arange(1 << N)
    sx = np.array([np.vdot(psi, psi[idx ^ (1 << b)]).real for b in range(N)])
    zz = np.array([prob @ (z[:, b] * z[:, b + 1]) for b in range(N - 1)])
    czz = zz - sz[:-1] * sz[1:]
    stagger = np.array([(-1) ** j for j in range(1, N + 1)])
    nu = float(np.sum(stagger * sz + 1) / (2 * N))
    mid = N // 2
    return ObservableReport(
        sx=sx, sz=sz, mx=float(sx.mean()), mz=float(sz.mean()),
        energy=hamiltonian(spec).expectation(psi),
        loschmidt=abs(overlap(psi0, psi)) ** 2,
        nu=nu, czz=czz,
        czz_mid=float(czz[mid - 1]) if N >= 2 else float("nan"),
    )


class BoundCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def check_observable_bound(psi_dqs: np.ndarray, psi_target: np.ndarray,
                           blocks: Mapping[tuple[int, int], np.ndarray],
                           floor: float = EIGEN_FLOOR) -> BoundCheck:
    """Compare |<O>_target - <O>_dqs| against sqrt(2) max ||O^{jk}|| eps.

    ``O = 2/(N(N-1)) sum_{j<k} O^{jk}``; pairs missing from ``blocks`` are
    zero.  ``eps`` is one minus the unclamped local reward.
    """
    N = n_qubits(psi_dqs)
    if N < 2:
        raise ValueError("two-body observables need N >= 2")
    for (j, k), O in blocks.items():
        _check_pair(N, j, k)
        O = np.asarray(O)
        if O.shape != (4, 4) or not np.allclose(O, O.conj().T, atol=1e-12):
            raise ValueError(f"block {(j, k)} must be a Hermitian 4x4 matrix")
    norm = 2.0 / (N * (N - 1))
    diff = 0.0
    for (j, k), O in blocks.items():
        rho = partial_trace_pair(psi_target, j, k)
        sigma = partial_trace_pair(psi_dqs, j, k)
        diff += np.trace((rho - sigma) @ O).real
    lhs = abs(norm * diff)
    eps = 1.0 - local_reward_raw(psi_dqs, psi_target, floor)
    op_norm = max((np.linalg.norm(np.asarray(O), 2) for O in blocks.values()), default=0.0)
    rhs = np.sqrt(2.0) * op_norm * eps
    return BoundCheck(float(lhs), float(rhs), bool(lhs <= rhs + 1e-9))
