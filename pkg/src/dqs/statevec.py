"""Exact state vectors for N qubits and the trapped-ion gate set.

States are plain complex numpy arrays of length 2**N.  Site ``j`` (1-based)
lives on bit ``j - 1`` of the basis index, and bit value 0 means spin up
(sigma^z = +1).  Gate functions never modify their input array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

UP, DOWN = 0, 1


def n_qubits(state: np.ndarray) -> int:
    dim = state.shape[-1]
    N = dim.bit_length() - 1
    if dim < 2 or (1 << N) != dim:
        raise ValueError(f"state length {dim} is not a power of two >= 2")
    return N


def _check_site(N: int, j: int) -> None:
    if not 1 <= j <= N:
        raise ValueError(f"site {j} out of range 1..{N}")


def basis_state(N: int, pattern: Sequence) -> np.ndarray:
    """Product basis state.

    ``pattern[j-1]`` gives site j either as a bit (0 = up, 1 = down) or as
    one of the strings ``"u"``, ``"d"``, ``"up"``, ``"down"``.
    """
    if N < 1:
        raise ValueError("need at least one qubit")
    if len(pattern) != N:
        raise ValueError(f"pattern has length {len(pattern)}, expected {N}")
    index = 0
    for j, p in enumerate(pattern):
        if isinstance(p, str):
            bit = {"u": UP, "up": UP, "d": DOWN, "down": DOWN}[p.lower()]
        elif p in (0, 1):
            bit = int(p)
        else:
            raise ValueError(f"cannot read site value {p!r}")
        index |= bit << j
    psi = np.zeros(1 << N, dtype=complex)
    psi[index] = 1.0
    return psi


def all_up(N: int) -> np.ndarray:
    return basis_state(N, [UP] * N)


def neel_state(N: int) -> np.ndarray:
    """Bare vacuum: sigma^z_j = -(-1)^j, i.e. site 1 up, site 2 down, ..."""
    return basis_state(N, [UP if j % 2 == 1 else DOWN for j in range(1, N + 1)])


def z_signs(N: int) -> np.ndarray:
    """(2**N, N) array of sigma^z eigenvalues; column j-1 is site j."""
    idx = np.arange(1 << N)
    bits = (idx[:, None] >> np.arange(N)) & 1
    return 1 - 2 * bits


def fwht(state: np.ndarray) -> np.ndarray:
    """Normalized Walsh-Hadamard transform (Hadamard on every qubit).

    Self-inverse; maps the z basis onto the x basis.
    """
    N = n_qubits(state)
    out = np.array(state, dtype=complex, copy=True)
    scale = 1.0 / np.sqrt(2.0)
    for b in range(N):
        v = out.reshape(-1, 2, 1 << b)
        a = v[:, 0, :].copy()
        c = v[:, 1, :]
        v[:, 0, :] = (a + c) * scale
        v[:, 1, :] = (a - c) * scale
    return out


def xx_couplings(N: int, alpha: float) -> np.ndarray:
    """Upper-triangular matrix of 1/|k-j|**alpha for j < k (0-based)."""
    d = np.abs(np.subtract.outer(np.arange(N), np.arange(N))).astype(float)
    with np.errstate(divide="ignore"):
        C = np.where(d > 0, d ** (-float(alpha)), 0.0)
    return np.triu(C, 1)


def xx_diagonal(N: int, alpha: float) -> np.ndarray:
    """Sum_{j<k} s_j s_k / |k-j|**alpha for every x-basis configuration."""
    s = z_signs(N).astype(float)
    C = xx_couplings(N, alpha)
    return np.einsum("ij,jk,ik->i", s, C, s)


def apply_rx(state: np.ndarray, j: int, theta: float) -> np.ndarray:
    """exp(-i theta sigma^x_j)"""
    N = n_qubits(state)
    _check_site(N, j)
    v = state.reshape(-1, 2, 1 << (j - 1))
    c, s = np.cos(theta), -1j * np.sin(theta)
    out = np.empty_like(v, dtype=complex)
    out[:, 0, :] = c * v[:, 0, :] + s * v[:, 1, :]
    out[:, 1, :] = s * v[:, 0, :] + c * v[:, 1, :]
    return out.reshape(state.shape)


def apply_rz(state: np.ndarray, j: int, theta: float) -> np.ndarray:
    """exp(-i theta sigma^z_j)"""
    N = n_qubits(state)
    _check_site(N, j)
    v = state.reshape(-1, 2, 1 << (j - 1))
    out = np.empty_like(v, dtype=complex)
    out[:, 0, :] = np.exp(-1j * theta) * v[:, 0, :]
    out[:, 1, :] = np.exp(1j * theta) * v[:, 1, :]
    return out.reshape(state.shape)


def apply_xx(state: np.ndarray, theta: float, alpha: float,
             diagonal: np.ndarray | None = None) -> np.ndarray:
    """Global entangler exp(-i theta sum_{j<k} X_j X_k / |k-j|**alpha).

    Every term commutes, so the gate is a phase in the x basis.  ``diagonal``
    may carry a precomputed :func:`xx_diagonal` for repeated use.
    """
    N = n_qubits(state)
    if N < 2:
        raise ValueError("the entangling gate needs at least two qubits")
    if diagonal is None:
        diagonal = xx_diagonal(N, alpha)
    return fwht(np.exp(-1j * theta * diagonal) * fwht(state))


@dataclass
class StepAngles:
    theta_xx: float
    theta_z: np.ndarray
    theta_x: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        self.theta_xx = float(self.theta_xx)
        self.theta_z = np.asarray(self.theta_z, dtype=float)
        self.theta_x = np.asarray(self.theta_x, dtype=float)
        if self.theta_z.shape != self.theta_x.shape or self.theta_z.ndim != 1:
            raise ValueError("theta_z and theta_x must be 1-d arrays of equal length")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @property
    def N(self) -> int:
        return len(self.theta_z)

    @classmethod
    def zeros(cls, N: int, alpha: float = 1.0) -> "StepAngles":
        return cls(0.0, np.zeros(N), np.zeros(N), alpha)


@dataclass
class CircuitParams:
    steps: list[StepAngles] = field(default_factory=list)

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a circuit needs at least one step")
        if len({s.N for s in self.steps}) != 1 or len({s.alpha for s in self.steps}) != 1:
            raise ValueError("all steps must share N and alpha")

    @property
    def n(self) -> int:
        return len(self.steps)

    @property
    def N(self) -> int:
        return self.steps[0].N

    @property
    def alpha(self) -> float:
        return self.steps[0].alpha

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "alpha": self.alpha,
            "steps": [
                {"theta_xx": s.theta_xx, "theta_z": s.theta_z.tolist(),
                 "theta_x": s.theta_x.tolist()}
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitParams":
        try:
            alpha = float(d["alpha"])
            steps = [StepAngles(s["theta_xx"], s["theta_z"], s["theta_x"], alpha)
                     for s in d["steps"]]
            n, N = int(d["n"]), int(d["N"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed circuit description: {exc!r}") from exc
        params = cls(steps)
        if params.n != n or params.N != N:
            raise ValueError(f"circuit declares n={n}, N={N} but holds "
                             f"n={params.n}, N={params.N}")
        return params


def apply_step(state: np.ndarray, step: StepAngles,
               diagonal: np.ndarray | None = None) -> np.ndarray:
    """One layer: all X rotations, then all Z rotations, then the entangler."""
    N = n_qubits(state)
    if step.N != N:
        raise ValueError(f"step built for N={step.N}, state has N={N}")
    psi = state
    for j in range(1, N + 1):
        psi = apply_rx(psi, j, step.theta_x[j - 1])
    for j in range(1, N + 1):
        psi = apply_rz(psi, j, step.theta_z[j - 1])
    if N >= 2:
        psi = apply_xx(psi, step.theta_xx, step.alpha, diagonal)
    return psi


def run_circuit(psi0: np.ndarray, params: CircuitParams) -> np.ndarray:
    N = n_qubits(psi0)
    diagonal = xx_diagonal(N, params.alpha) if N >= 2 else None
    psi = psi0
    for step in params.steps:
        psi = apply_step(psi, step, diagonal)
    return psi


def overlap(a: np.ndarray, b: np.ndarray) -> complex:
    """<a|b>"""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))
