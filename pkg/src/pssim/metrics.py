"""Fidelity, quantum Fisher information, GHZ witness and the Cramer-Rao bound."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import sqrtm

from .errors import NumericalInvariantError
from .spin import CollectiveAxis, DensityOperator, PureState, apply_collective, collective_operator

EIGEN_THRESHOLD = 1e-12
NEGATIVE_EIGEN_TOL = 1e-10
GENERAL_FIDELITY_MAX_QUBITS = 4


class QfiMethod(str, Enum):
    PURE_VARIANCE = "pure_variance"
    MIXED_SPECTRAL = "mixed_spectral"
    ENSEMBLE_AVERAGE = "ensemble_average"


@dataclass(frozen=True)
class QfiResult:
    value: float
    method: QfiMethod
    eigen_threshold: float | None = None


def _same_spec(a, b):
    if a.spec.dim != b.spec.dim:
        raise ValueError(f"dimension mismatch: {a.spec.dim} vs {b.spec.dim}")


def fidelity_pure(a: PureState, b: PureState) -> float:
    _same_spec(a, b)
    return float(min(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2, 1.0))


def fidelity_with_pure_target(rho: DensityOperator, target: PureState) -> float:
    """<target| rho |target>."""
    _same_spec(rho, target)
    t = target.amplitudes
    return float(np.vdot(t, rho.matrix @ t).real)


def fidelity_general(rho: DensityOperator, sigma: DensityOperator) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, for validation at small N only."""
    _same_spec(rho, sigma)
    if rho.spec.n_qubits > GENERAL_FIDELITY_MAX_QUBITS:
        raise ValueError(f"general fidelity is limited to N <= {GENERAL_FIDELITY_MAX_QUBITS}")
    s = sqrtm(rho.matrix)
    inner = sqrtm(s @ sigma.matrix @ s)
    return float(np.trace(inner).real ** 2)


def qfi_pure(state: PureState, generator: CollectiveAxis = CollectiveAxis.Z) -> QfiResult:
    """4 Var(J_generator) for a normalized pure state."""
    generator = CollectiveAxis(generator)
    psi = state.amplitudes
    if generator is CollectiveAxis.Z:
        p = state.probabilities()
        M = state.spec.profile.M
        mean = p @ M
        var = p @ M**2 - mean**2
    else:
        jpsi = apply_collective(psi, generator, state.spec.n_qubits)
        mean = np.vdot(psi, jpsi).real
        var = np.vdot(jpsi, jpsi).real - mean**2
    return QfiResult(float(4 * max(var, 0.0)), QfiMethod.PURE_VARIANCE)


def qfi_mixed(rho: DensityOperator, generator: CollectiveAxis = CollectiveAxis.Z,
              eigen_threshold: float = EIGEN_THRESHOLD) -> QfiResult:
    """2 sum_{jk} (l_j - l_k)^2 / (l_j + l_k) |<j|J|k>|^2 over the spectrum of rho."""
    mat = 0.5 * (rho.matrix + rho.matrix.conj().T)
    try:
        lam, vec = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalInvariantError(f"eigensolver failed: {exc}") from exc
    if lam[0] < -NEGATIVE_EIGEN_TOL:
        raise NumericalInvariantError(f"density operator has eigenvalue {lam[0]:.3e}")
    lam = np.clip(lam, 0.0, None)
    gen = CollectiveAxis(generator)
    if gen is CollectiveAxis.Z:
        h = (vec.conj().T * rho.spec.profile.M) @ vec
    else:
        h = vec.conj().T @ collective_operator(rho.spec, gen) @ vec
    s = lam[:, None] + lam[None, :]
    diff2 = (lam[:, None] - lam[None, :]) ** 2
    keep = s > eigen_threshold
    terms = np.zeros_like(s)
    terms[keep] = diff2[keep] / s[keep] * np.abs(h[keep]) ** 2
    return QfiResult(float(2 * terms.sum()), QfiMethod.MIXED_SPECTRAL, eigen_threshold)


def ensemble_qfi(ensemble, generator: CollectiveAxis = CollectiveAxis.Z) -> QfiResult:
    """Weighted average of member QFIs; an upper bound on the QFI of the mixture."""
    val = sum(m.weight * qfi_pure(m, generator).value for m in ensemble.members)
    return QfiResult(float(val), QfiMethod.ENSEMBLE_AVERAGE)


def witness_expectation(fidelity: float) -> float:
    """Tr[W rho] for W = 1/2 - |GHZ><GHZ|; negative flags genuine multipartite entanglement."""
    return 0.5 - fidelity


def cramer_rao_bound(qfi: QfiResult) -> float:
    """Smallest phase-estimator variance, 1/Q (single shot)."""
    if not qfi.value > 0:
        raise ValueError("QFI is zero; the phase variance is unbounded")
    return 1.0 / qfi.value
