"""Single-qubit decoherence channels and the trapped-ion rate model.

Three independent per-qubit channels act during squeezing: dephasing (phase
flip), amplitude damping (down -> up) and spontaneous excitation (up -> down).
Jump operators are never materialised as 2^N matrices; a jump is a kind plus
a qubit index and is applied with O(2^N) index arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import EngineGuardError, ImpossibleJump
from .spin import PureState, SystemSpec

DEFAULT_J = 3300.0  # s^-1
DEFAULT_DT = 1e-7  # s
MAX_STEP_JUMP_PROBABILITY = 0.05


class ChannelKind(str, Enum):
    DEPHASING = "dephasing"
    AMPLITUDE_DAMPING = "amplitude_damping"
    SPONTANEOUS_EXCITATION = "spontaneous_excitation"


CHANNEL_ORDER = (
    ChannelKind.DEPHASING,
    ChannelKind.AMPLITUDE_DAMPING,
    ChannelKind.SPONTANEOUS_EXCITATION,
)


@dataclass(frozen=True)
class RateModel:
    J: float
    n_qubits: int
    x: float

    @property
    def chi(self) -> float:
        return 2 * self.J / self.n_qubits

    @property
    def gamma_dep(self) -> float:
        return self.x * self.J / 50

    @property
    def gamma_ad(self) -> float:
        return self.x * self.J / 100

    @property
    def gamma_se(self) -> float:
        return self.x * self.J / 100


def build_rate_model(J: float = DEFAULT_J, N: int = 2, x: float = 1.0) -> RateModel:
    if J <= 0:
        raise ValueError(f"J must be positive, got {J}")
    if N < 2:
        raise ValueError(f"N must be at least 2, got {N}")
    if x < 0:
        raise ValueError(f"decay scale x must be nonnegative, got {x}")
    return RateModel(float(J), int(N), float(x))


def single_qubit_kraus(kind: ChannelKind, p: float) -> tuple[np.ndarray, np.ndarray]:
    """(M0, M1) for one qubit with decay probability p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    kind = ChannelKind(kind)
    a, b = np.sqrt(1 - p), np.sqrt(p)
    if kind is ChannelKind.DEPHASING:
        return np.diag([a, a]).astype(complex), np.diag([b, -b]).astype(complex)
    if kind is ChannelKind.AMPLITUDE_DAMPING:
        return np.diag([1.0, a]).astype(complex), np.array([[0, b], [0, 0]], dtype=complex)
    return np.diag([a, 1.0]).astype(complex), np.array([[0, 0], [b, 0]], dtype=complex)


@dataclass(frozen=True)
class ChannelSet:
    spec: SystemSpec
    rates: RateModel
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.rates.n_qubits != self.spec.n_qubits:
            raise ValueError("rate model and system size disagree")
        if self.total_jump_probability > MAX_STEP_JUMP_PROBABILITY:
            raise EngineGuardError(
                f"single-jump probability per step {self.total_jump_probability:.3g} "
                f"exceeds {MAX_STEP_JUMP_PROBABILITY}; reduce dt"
            )

    @property
    def p1(self) -> float:
        """Per-qubit dephasing probability per step, x N chi dt / 100."""
        return self.rates.x * self.spec.n_qubits * self.rates.chi * self.dt / 100

    @property
    def p2(self) -> float:
        """Per-qubit damping / excitation probability per step, p1 / 2."""
        return self.p1 / 2

    @property
    def total_jump_probability(self) -> float:
        """Sum of the 3N channel probabilities, N(p1 + 2 p2); the step-size guard."""
        return self.spec.n_qubits * (self.p1 + 2 * self.p2)

    @property
    def step_jump_probability(self) -> float:
        """Sum of dp_j over all 3N jumps for any normalized state.

        State independent: per qubit the damping and excitation probabilities
        are p2 times the down and up populations, which add up to p2.
        """
        return self.spec.n_qubits * (self.p1 + self.p2)

    @cached_property
    def jump_list(self) -> list[tuple[ChannelKind, int, float]]:
        probs = {ChannelKind.DEPHASING: self.p1}
        probs[ChannelKind.AMPLITUDE_DAMPING] = probs[ChannelKind.SPONTANEOUS_EXCITATION] = self.p2
        return [(k, q, probs[k]) for k in CHANNEL_ORDER for q in range(self.spec.n_qubits)]

    def with_dt(self, dt: float) -> "ChannelSet":
        return ChannelSet(self.spec, self.rates, dt)

    def probability(self, kind: ChannelKind) -> float:
        return self.p1 if ChannelKind(kind) is ChannelKind.DEPHASING else self.p2


def make_channel_set(spec: SystemSpec, x: float, J: float = DEFAULT_J, dt: float = DEFAULT_DT) -> ChannelSet:
    return ChannelSet(spec, build_rate_model(J, spec.n_qubits, x), dt)


def _bits(spec: SystemSpec, qubit: int) -> tuple[int, np.ndarray]:
    mask = spec.qubit_mask(qubit)
    return mask, (np.arange(spec.dim) & mask) != 0


def apply_jump_unnormalized(amps: np.ndarray, spec: SystemSpec, kind: ChannelKind, qubit: int) -> np.ndarray:
    """The embedded M1 / sqrt(p) applied to a raw amplitude vector."""
    kind = ChannelKind(kind)
    mask, down = _bits(spec, qubit)
    if kind is ChannelKind.DEPHASING:
        return np.where(down, -amps, amps)
    idx = np.arange(spec.dim)
    out = np.zeros_like(amps)
    if kind is ChannelKind.AMPLITUDE_DAMPING:
        # |0><1|: down component moves to up
        out[~down] = amps[idx[~down] | mask]
    else:
        out[down] = amps[idx[down] ^ mask]
    return out


def apply_jump(state: PureState, kind: ChannelKind, qubit: int) -> PureState:
    out = apply_jump_unnormalized(state.amplitudes, state.spec, kind, qubit)
    norm = np.linalg.norm(out)
    if norm < 1e-300:
        raise ImpossibleJump(f"{ChannelKind(kind).value} jump on qubit {qubit} has no support")
    return PureState(state.spec, out / norm, state.weight)


def jump_probability(state: PureState, kind: ChannelKind, qubit: int, channel_set: ChannelSet) -> float:
    """dp = <psi|M1^+ M1|psi> for one jump."""
    kind = ChannelKind(kind)
    if kind is ChannelKind.DEPHASING:
        return channel_set.p1
    _, down = _bits(state.spec, qubit)
    pop_down = float(np.sum(state.probabilities()[down]))
    if kind is ChannelKind.AMPLITUDE_DAMPING:
        return channel_set.p2 * pop_down
    return channel_set.p2 * (1.0 - pop_down)


def qubit_down_populations(amps: np.ndarray, n_qubits: int) -> np.ndarray:
    """Probability that each qubit is down, qubit 0 first."""
    probs = (np.abs(amps) ** 2).reshape((2,) * n_qubits)
    total = probs.sum()
    out = np.empty(n_qubits)
    for q in range(n_qubits):
        axes = tuple(a for a in range(n_qubits) if a != q)
        out[q] = probs.sum(axis=axes)[1] / total
    return out


def jump_probabilities(amps: np.ndarray, channel_set: ChannelSet) -> np.ndarray:
    """All 3N dp_j in the fixed jump order, for a normalized amplitude vector."""
    n = channel_set.spec.n_qubits
    down = qubit_down_populations(amps, n)
    return np.concatenate(
        [np.full(n, channel_set.p1), channel_set.p2 * down, channel_set.p2 * (1 - down)]
    )


def effective_hamiltonian_diagonal(channel_set: ChannelSet, chi: float | None = None):
    """Diagonal of H_eff / hbar = chi M^2 - (i/2) sum_j L_j^+ L_j.

    Returns ``(hermitian, anti)`` with H_eff = hermitian - i * anti, so
    ``anti`` is half the diagonal of sum_j L_j^+ L_j.
    """
    spec = channel_set.spec
    chi = channel_set.rates.chi if chi is None else chi
    m = spec.profile.m
    n = spec.n_qubits
    hermitian = chi * spec.profile.M**2
    ldl = (n * channel_set.p1 + m * channel_set.p2 + (n - m) * channel_set.p2) / channel_set.dt
    return hermitian, 0.5 * ldl


def no_jump_diagonal(channel_set: ChannelSet, chi: float | None = None) -> np.ndarray:
    """Diagonal of the first-order no-jump operator M0 = 1 - i dt H_eff / hbar."""
    herm, anti = effective_hamiltonian_diagonal(channel_set, chi)
    dt = channel_set.dt
    return 1.0 - 1j * dt * herm - dt * anti
