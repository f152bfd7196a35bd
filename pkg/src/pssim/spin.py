"""Hilbert-space primitives for N qubits.

Basis convention used everywhere in the package: qubit 0 is the most
significant bit of a basis index, bit 0 is spin up (|0>) and bit 1 is spin
down (|1>).  A basis index ``b`` therefore has ``m(b) = popcount(b)`` spins
down and collective projection ``M(b) = N/2 - m(b)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from math import comb

import numpy as np

MAX_QUBITS = 14


class CollectiveAxis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"


@dataclass(frozen=True)
class ExcitationProfile:
    """Per-basis-index down-spin count ``m`` and projection ``M = N/2 - m``."""

    n_qubits: int
    m: np.ndarray
    M: np.ndarray

    @classmethod
    def build(cls, n_qubits: int) -> "ExcitationProfile":
        idx = np.arange(2**n_qubits)
        m = np.zeros(idx.size, dtype=np.int64)
        for q in range(n_qubits):
            m += (idx >> q) & 1
        m.setflags(write=False)
        M = n_qubits / 2 - m
        M.setflags(write=False)
        return cls(n_qubits, m, M)

    def multiplicities(self) -> np.ndarray:
        return np.bincount(self.m, minlength=self.n_qubits + 1)


@dataclass(frozen=True)
class SystemSpec:
    n_qubits: int
    max_qubits: int = MAX_QUBITS

    def __post_init__(self):
        if not isinstance(self.n_qubits, (int, np.integer)):
            raise TypeError("n_qubits must be an integer")
        if not 2 <= self.n_qubits <= self.max_qubits:
            raise ValueError(
                f"n_qubits must lie in [2, {self.max_qubits}], got {self.n_qubits}"
            )

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @cached_property
    def profile(self) -> ExcitationProfile:
        return ExcitationProfile.build(self.n_qubits)

    def qubit_mask(self, qubit: int) -> int:
        if not 0 <= qubit < self.n_qubits:
            raise IndexError(f"qubit {qubit} out of range for N={self.n_qubits}")
        return 1 << (self.n_qubits - 1 - qubit)


@dataclass
class PureState:
    spec: SystemSpec
    amplitudes: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.spec.dim,):
            raise ValueError(
                f"expected {self.spec.dim} amplitudes, got {self.amplitudes.shape}"
            )
        if not 0.0 <= self.weight <= 1.0 + 1e-12:
            raise ValueError(f"weight must lie in [0, 1], got {self.weight}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        return PureState(self.spec, self.amplitudes / self.norm(), self.weight)

    def copy(self) -> "PureState":
        return PureState(self.spec, self.amplitudes.copy(), self.weight)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expectation(self, axis: CollectiveAxis) -> float:
        j_psi = apply_collective(self.amplitudes, axis, self.spec.n_qubits)
        return float(np.vdot(self.amplitudes, j_psi).real)


@dataclass
class DensityOperator:
    spec: SystemSpec
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = self.spec.dim
        if self.matrix.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got {self.matrix.shape}")

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityOperator":
        a = state.amplitudes
        return cls(state.spec, np.outer(a, a.conj()))

    @classmethod
    def maximally_mixed(cls, spec: SystemSpec) -> "DensityOperator":
        return cls(spec, np.eye(spec.dim, dtype=complex) / spec.dim)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def populations(self) -> np.ndarray:
        return np.diagonal(self.matrix).real.copy()

    def check(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-10) -> None:
        """Raise ``ValueError`` unless Hermitian, unit trace and PSD within tolerance."""
        rho = self.matrix
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > herm_tol:
            raise ValueError(f"not Hermitian: max|rho - rho^+| = {herm:.3e}")
        if abs(self.trace() - 1.0) > trace_tol:
            raise ValueError(f"trace {self.trace():.12f} != 1")
        lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        if lam[0] < -eig_tol:
            raise ValueError(f"negative eigenvalue {lam[0]:.3e}")


# ---------------------------------------------------------------------------
# local and collective operators

def single_qubit_rotation(axis: CollectiveAxis, angle: float) -> np.ndarray:
    """exp(-i angle sigma_axis / 2)."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    axis = CollectiveAxis(axis)
    if axis is CollectiveAxis.X:
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis is CollectiveAxis.Y:
        return np.array([[c, -s], [s, c]], dtype=complex)
    return np.array([[c - 1j * s, 0], [0, c + 1j * s]])


def apply_local(arr: np.ndarray, u: np.ndarray, n_qubits: int, qubit: int) -> np.ndarray:
    """Apply a 2x2 matrix to ``qubit`` along axis 0 of ``arr`` (shape (2^N, ...))."""
    tail = arr.shape[1:]
    k = int(np.prod(tail)) if tail else 1
    view = arr.reshape(2**qubit, 2, 2 ** (n_qubits - qubit - 1) * k)
    out = np.einsum("ij,ajb->aib", u, view)
    return out.reshape(arr.shape)


def apply_product(arr: np.ndarray, u: np.ndarray, n_qubits: int) -> np.ndarray:
    """Apply u on every qubit, i.e. the tensor power u^{(x)N}, along axis 0."""
    out = arr
    for q in range(n_qubits):
        out = apply_local(out, u, n_qubits, q)
    return out


def apply_collective(arr: np.ndarray, axis: CollectiveAxis, n_qubits: int) -> np.ndarray:
    """J_axis |psi> with J = (1/2) sum_j sigma_j, acting along axis 0 of ``arr``."""
    axis = CollectiveAxis(axis)
    d = 2**n_qubits
    idx = np.arange(d)
    if axis is CollectiveAxis.Z:
        M = n_qubits / 2 - ExcitationProfile.build(n_qubits).m
        return (M.reshape((d,) + (1,) * (arr.ndim - 1))) * arr
    out = np.zeros_like(arr, dtype=complex)
    for q in range(n_qubits):
        mask = 1 << (n_qubits - 1 - q)
        flipped = arr[idx ^ mask]
        if axis is CollectiveAxis.X:
            out += flipped
        else:
            # sigma_y |0> = i|1>, sigma_y |1> = -i|0>
            phase = np.where(idx & mask, 1j, -1j)
            out += phase.reshape((d,) + (1,) * (arr.ndim - 1)) * flipped
    return 0.5 * out


def collective_operator(spec: SystemSpec, axis: CollectiveAxis) -> np.ndarray:
    """Dense 2^N x 2^N matrix of J_axis (for validation at small N)."""
    return apply_collective(np.eye(spec.dim, dtype=complex), axis, spec.n_qubits)


# ---------------------------------------------------------------------------
# states

def make_all_up(spec: SystemSpec) -> PureState:
    amps = np.zeros(spec.dim, dtype=complex)
    amps[0] = 1.0
    return PureState(spec, amps)


def collective_rotation(state: PureState, axis: CollectiveAxis, angle: float) -> PureState:
    """exp(-i angle J_axis)|psi>, applied as N identical single-qubit rotations."""
    angle = float(np.fmod(angle, 4 * np.pi))
    u = single_qubit_rotation(axis, angle)
    amps = apply_product(state.amplitudes, u, state.spec.n_qubits)
    return PureState(state.spec, amps, state.weight)


def rotate_density(rho: DensityOperator, axis: CollectiveAxis, angle: float) -> DensityOperator:
    """U rho U^+ for the collective rotation U = exp(-i angle J_axis)."""
    angle = float(np.fmod(angle, 4 * np.pi))
    u = single_qubit_rotation(axis, angle)
    n = rho.spec.n_qubits
    left = apply_product(rho.matrix, u, n)
    both = apply_product(left.conj().T, u, n).conj().T
    return DensityOperator(rho.spec, both)


def apply_one_axis_twist(state: PureState, chi_t: float) -> PureState:
    """exp(-i chi_t J_z^2)|psi> (diagonal)."""
    M = state.spec.profile.M
    return PureState(state.spec, state.amplitudes * np.exp(-1j * chi_t * M**2), state.weight)


def coherent_spin_state(spec: SystemSpec) -> PureState:
    """The protocol's |CS> = exp(-i pi/2 J_x)|up...up>, pointing along -y."""
    return collective_rotation(make_all_up(spec), CollectiveAxis.X, np.pi / 2)


def dicke_state(spec: SystemSpec, m: int) -> PureState:
    if not 0 <= m <= spec.n_qubits:
        raise ValueError(f"m must lie in [0, {spec.n_qubits}], got {m}")
    amps = np.where(spec.profile.m == m, 1.0 / np.sqrt(comb(spec.n_qubits, m)), 0.0)
    return PureState(spec, amps.astype(complex))


def ghz_state(spec: SystemSpec) -> PureState:
    amps = np.zeros(spec.dim, dtype=complex)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return PureState(spec, amps)


def dicke_coefficients(state: PureState) -> tuple[np.ndarray, float]:
    """Project onto the Dicke basis.

    Returns the N+1 coefficients a_m = <N/2, N/2-m|psi> and the norm of the
    residual outside the symmetric subspace.
    """
    spec = state.spec
    m = spec.profile.m
    sums = np.bincount(m, weights=state.amplitudes.real, minlength=spec.n_qubits + 1) + 1j * np.bincount(
        m, weights=state.amplitudes.imag, minlength=spec.n_qubits + 1
    )
    mult = spec.profile.multiplicities()
    coeffs = sums / np.sqrt(mult)
    projected = coeffs[m] / np.sqrt(mult[m])
    residual = float(np.linalg.norm(state.amplitudes - projected))
    return coeffs, residual


# ---------------------------------------------------------------------------
# Husimi distribution

def _husimi_rows(state: PureState, thetas: np.ndarray, phis: np.ndarray, offset: float) -> np.ndarray:
    spec = state.spec
    n = spec.n_qubits
    m = spec.profile.m
    Ms = n / 2 - np.arange(n + 1)
    out = np.empty((len(thetas), len(phis)))
    up = make_all_up(spec).amplitudes
    for i, theta in enumerate(thetas):
        # rotated reference is a product state, so build it qubit by qubit
        ref = apply_product(up, single_qubit_rotation(CollectiveAxis.X, theta + offset), n)
        prod = state.amplitudes.conj() * ref
        per_m = np.bincount(m, weights=prod.real, minlength=n + 1) + 1j * np.bincount(
            m, weights=prod.imag, minlength=n + 1
        )
        # exp(-i phi J_z) contributes exp(-i phi M)
        amp = np.exp(-1j * np.outer(phis, Ms)) @ per_m
        out[i] = np.abs(amp) ** 2
    return out


def husimi(state: PureState, theta: float, phi: float) -> float:
    """|<psi| exp(-i phi J_z) exp(-i theta J_x) |CS>|^2."""
    return float(_husimi_rows(state, np.array([theta]), np.array([phi]), np.pi / 2)[0, 0])


def husimi_grid(state: PureState, thetas, phis, *, bloch: bool = True) -> np.ndarray:
    """Husimi values on a (theta, phi) grid, shape (len(thetas), len(phis)).

    With ``bloch=True`` theta is the polar angle measured from the north pole
    (reference state exp(-i phi J_z) exp(-i theta J_x)|up...up>), which covers
    the whole sphere.  This equals ``husimi`` with theta shifted by -pi/2.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    return _husimi_rows(state, thetas, phis, 0.0 if bloch else np.pi / 2)
