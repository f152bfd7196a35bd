"""Time evolution of the squeezing step under decoherence.

Three engines share one configuration:

* ``kraus``: first-order Kraus map on the full density matrix, one
  no-jump term plus 3N single-qubit jump terms per step.
* ``trajectory``: quantum-jump unraveling into pure states.
* ``pure``: the exact closed-system twist (decay must be off).

Decoherence acts only while squeezing; rotations and measurement are
instantaneous and handled by the protocols module.
"""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numba
import numpy as np

from .channels import (
    ChannelKind,
    ChannelSet,
    apply_jump_unnormalized,
    jump_probabilities,
    no_jump_diagonal,
)
from .errors import EngineGuardError, NumericalInvariantError, StepSizeError
from .measurement import PovmSpec, apply_measurement
from .spin import DensityOperator, PureState, SystemSpec, apply_one_axis_twist

KRAUS_MAX_QUBITS = 10


class Engine(str, Enum):
    KRAUS = "kraus"
    TRAJECTORY = "trajectory"
    PURE = "pure"


@dataclass(frozen=True)
class EngineConfig:
    channel_set: ChannelSet
    total_chi_t: float
    engine: Engine = Engine.KRAUS
    kraus_max_qubits: int = KRAUS_MAX_QUBITS

    def __post_init__(self):
        object.__setattr__(self, "engine", Engine(self.engine))
        if self.total_chi_t < 0:
            raise ValueError(f"chi t must be nonnegative, got {self.total_chi_t}")
        n = self.spec.n_qubits
        if self.engine is Engine.KRAUS and n > self.kraus_max_qubits:
            raise EngineGuardError(
                f"Kraus engine limited to N <= {self.kraus_max_qubits}, got N={n}"
            )
        if self.engine is Engine.PURE and self.channel_set.rates.x != 0:
            raise EngineGuardError("the pure engine has no decoherence; use x=0")

    @property
    def spec(self) -> SystemSpec:
        return self.channel_set.spec

    @property
    def dt(self) -> float:
        return self.channel_set.dt

    @property
    def chi(self) -> float:
        return self.channel_set.rates.chi

    @property
    def total_time(self) -> float:
        return self.total_chi_t / self.chi

    @property
    def n_steps(self) -> int:
        if self.total_chi_t == 0:
            return 0
        return max(int(round(self.total_time / self.dt)), 1)

    @property
    def last_dt(self) -> float:
        """Length of the final step, chosen so the steps add up to t exactly."""
        n = self.n_steps
        return self.total_time - (n - 1) * self.dt if n else 0.0

    def step_channels(self) -> list[tuple[int, ChannelSet]]:
        """(count, channel set) blocks covering all steps in order."""
        n = self.n_steps
        if n == 0:
            return []
        blocks = [(n - 1, self.channel_set)] if n > 1 else []
        last = self.last_dt
        if abs(last - self.dt) <= 1e-15 * self.dt:
            return [(n, self.channel_set)]
        return blocks + [(1, self.channel_set.with_dt(last))]


# ---------------------------------------------------------------------------
# Kraus engine


@numba.njit(cache=True)
def _kraus_kernel(rho, out, h, popcount, p1, p2, n):
    # out[b,b'] = (h_b h_b'^* + p1 sum_j s_j(b) s_j(b')) rho[b,b']
    #           + p2 sum_{j: b_j = b'_j} rho[b^e_j, b'^e_j]
    # The last term is damping (both bits 0) plus excitation (both bits 1).
    d = rho.shape[0]
    full = d - 1
    for b in range(d):
        hb = h[b]
        for bp in range(b, d):
            x = b ^ bp
            val = (hb * np.conj(h[bp]) + p1 * (n - 2 * popcount[x])) * rho[b, bp]
            same = full & ~x
            acc = 0j
            while same:
                low = same & -same
                acc += rho[b ^ low, bp ^ low]
                same ^= low
            val += p2 * acc
            out[b, bp] = val
            out[bp, b] = np.conj(val)


def drift_bound(channel_set: ChannelSet) -> float:
    """Allowed pre-normalization trace drift for one first-order step."""
    n = channel_set.spec.n_qubits
    sum_p = channel_set.total_jump_probability
    twist = channel_set.rates.chi * channel_set.dt * (n / 2) ** 2
    return sum_p**2 + 10 * twist**2 + 1e-13


def kraus_step_matrix(rho: np.ndarray, out: np.ndarray, channel_set: ChannelSet) -> float:
    """One step written into ``out``; returns the trace before normalization."""
    spec = channel_set.spec
    _kraus_kernel(rho, out, no_jump_diagonal(channel_set), spec.profile.m,
                  channel_set.p1, channel_set.p2, spec.n_qubits)
    return float(np.trace(out).real)


def kraus_squeeze_step(rho: DensityOperator, config: EngineConfig, channel_set: ChannelSet | None = None) -> DensityOperator:
    cs = config.channel_set if channel_set is None else channel_set
    out = np.empty_like(rho.matrix)
    tr = kraus_step_matrix(np.ascontiguousarray(rho.matrix), out, cs)
    _check_drift(tr, cs)
    out /= tr
    return DensityOperator(rho.spec, out)


def _check_drift(trace: float, cs: ChannelSet) -> None:
    drift = abs(trace - 1.0)
    if not drift <= drift_bound(cs):  # also catches nan
        raise StepSizeError(f"trace drift {drift:.3e} per step exceeds {drift_bound(cs):.3e}")


def kraus_squeeze(rho: DensityOperator, config: EngineConfig, callback: Callable | None = None) -> DensityOperator:
    """Evolve rho through all squeezing steps.

    ``callback(step_index, matrix)`` is invoked after every step if given.
    """
    if config.engine is not Engine.KRAUS:
        raise ValueError("config is not for the Kraus engine")
    cur = np.ascontiguousarray(rho.matrix, dtype=complex).copy()
    nxt = np.empty_like(cur)
    k = 0
    for count, cs in config.step_channels():
        h = no_jump_diagonal(cs)
        pc = cs.spec.profile.m
        for _ in range(count):
            _kraus_kernel(cur, nxt, h, pc, cs.p1, cs.p2, cs.spec.n_qubits)
            tr = float(np.trace(nxt).real)
            _check_drift(tr, cs)
            nxt /= tr
            cur, nxt = nxt, cur
            if callback is not None:
                callback(k, cur)
            k += 1
    return DensityOperator(rho.spec, cur)


# ---------------------------------------------------------------------------
# trajectory engine


def trajectory_rng(seed_base: int, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` regardless of scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed_base, spawn_key=(index,)))


def _select_jump(amps: np.ndarray, cs: ChannelSet, eps: float) -> tuple[ChannelKind, int]:
    dp = jump_probabilities(amps / np.linalg.norm(amps), cs)
    cum = np.cumsum(dp)
    j = int(np.searchsorted(cum, eps, side="left"))
    # rounding can put eps a hair past the last boundary, or onto a zero-width slot
    j = min(j, len(dp) - 1)
    if dp[j] <= 0:
        ok = np.flatnonzero(dp > 0)
        below = ok[ok <= j]
        j = int(below[-1]) if below.size else int(ok[0])
    kind, qubit, _ = cs.jump_list[j]
    return kind, qubit


def trajectory_squeeze_amplitudes(amps: np.ndarray, config: EngineConfig, rng: np.random.Generator):
    """Returns (final normalized amplitudes, number of jumps)."""
    spec = config.spec
    psi = amps.astype(complex, copy=True)
    n_jumps = 0
    for count, cs in config.step_channels():
        h = no_jump_diagonal(cs)
        total = cs.step_jump_probability
        eps = rng.random(count)
        jump_steps = np.flatnonzero(eps <= total)
        prev = 0
        for s in jump_steps:
            # s - prev no-jump steps, then the jump itself occupies step s
            if s > prev:
                psi *= h ** (s - prev)
                psi /= np.linalg.norm(psi)
            kind, qubit = _select_jump(psi, cs, eps[s])
            psi = apply_jump_unnormalized(psi, spec, kind, qubit)
            psi /= np.linalg.norm(psi)
            n_jumps += 1
            prev = s + 1
        if count > prev:
            psi *= h ** (count - prev)
            psi /= np.linalg.norm(psi)
    return psi, n_jumps


def trajectory_squeeze(state: PureState, config: EngineConfig, rng_seed) -> PureState:
    if config.engine is not Engine.TRAJECTORY:
        raise ValueError("config is not for the trajectory engine")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    psi, _ = trajectory_squeeze_amplitudes(state.amplitudes, config, rng)
    return PureState(state.spec, psi, state.weight)


def pure_squeeze(state: PureState, config: EngineConfig) -> PureState:
    return apply_one_axis_twist(state, config.total_chi_t)


# ---------------------------------------------------------------------------
# statistics


@dataclass
class TrajectoryStats:
    """Weighted running mean / SD / SE with a convergence flag.

    With weights w_i the SD is the reliability-weighted sample SD and the SE
    uses the effective sample size (sum w)^2 / sum w^2, which reduces to
    SD / sqrt(n) for equal weights.
    """

    expected_n: int | None = None
    count: int = 0
    w_sum: float = 0.0
    w2_sum: float = 0.0
    mean: float = 0.0
    m2: float = 0.0
    converged: bool = False
    sd_history: deque = field(default_factory=deque, repr=False)

    @property
    def window(self) -> int:
        n = self.expected_n if self.expected_n else self.count
        return max(50, n // 10)

    @property
    def sd(self) -> float:
        if self.count < 2 or self.w_sum <= 0:
            return 0.0
        denom = self.w_sum - self.w2_sum / self.w_sum
        return math.sqrt(max(self.m2, 0.0) / denom) if denom > 0 else 0.0

    @property
    def n_eff(self) -> float:
        return self.w_sum**2 / self.w2_sum if self.w2_sum > 0 else 0.0

    @property
    def se(self) -> float:
        return self.sd / math.sqrt(self.n_eff) if self.n_eff > 0 else 0.0

    def update(self, value: float, weight: float = 1.0) -> None:
        if weight < 0:
            raise ValueError("weights must be nonnegative")
        self.count += 1
        if weight == 0:
            self._record()
            return
        self.w_sum += weight
        self.w2_sum += weight * weight
        delta = value - self.mean
        self.mean += delta * weight / self.w_sum
        self.m2 += weight * delta * (value - self.mean)
        self._record()

    def _record(self) -> None:
        w = self.window
        hist = self.sd_history
        hist.append(self.sd)
        while len(hist) > w + 1:
            hist.popleft()
        self.converged = self._check()

    def _check(self) -> bool:
        hist = self.sd_history
        if self.count <= self.window or len(hist) <= self.window:
            return False
        old, new = hist[0], hist[-1]
        stable = abs(new - old) <= 0.02 * old if old > 0 else new == 0
        if self.mean != 0:
            precise = self.se / abs(self.mean) < 0.05
        else:
            precise = self.se == 0
        return stable and precise

    def merge(self, other: "TrajectoryStats") -> "TrajectoryStats":
        """Combine two disjoint sample sets (associative, Chan et al. update)."""
        out = TrajectoryStats(self.expected_n or other.expected_n)
        out.count = self.count + other.count
        out.w_sum = self.w_sum + other.w_sum
        out.w2_sum = self.w2_sum + other.w2_sum
        if out.w_sum > 0:
            delta = other.mean - self.mean
            out.mean = self.mean + delta * other.w_sum / out.w_sum
            out.m2 = self.m2 + other.m2 + delta**2 * self.w_sum * other.w_sum / out.w_sum
        out.sd_history = deque(self.sd_history)
        out._record()
        return out

    def summary(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "se": self.se, "n": self.count,
                "n_eff": self.n_eff, "converged": self.converged}


def convergence_monitor(stats: TrajectoryStats, new_sample: float, weight: float = 1.0) -> TrajectoryStats:
    out = replace(stats, sd_history=deque(stats.sd_history))
    out.update(new_sample, weight)
    return out


def weighted_stats(values: Sequence[float], weights: Sequence[float] | None = None,
                   expected_n: int | None = None) -> TrajectoryStats:
    """Fold samples in index order (the order fixes the floating-point result)."""
    st = TrajectoryStats(expected_n or len(values))
    if weights is None:
        weights = np.ones(len(values))
    for v, w in zip(values, weights):
        st.update(float(v), float(w))
    return st


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class TrajectoryEnsemble:
    spec: SystemSpec
    members: list[PureState]
    rng_seed_base: int
    probability: float | None = None  # P(c) once post-selected
    cond_probabilities: np.ndarray | None = None  # P(c|i)
    n_jumps: np.ndarray | None = None
    stats: dict[str, TrajectoryStats] = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return len(self.members)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.members])

    def amplitudes(self) -> np.ndarray:
        """Member amplitudes stacked as rows, shape (n_traj, 2^N)."""
        return np.array([m.amplitudes for m in self.members])

    def map(self, fn: Callable[[PureState], PureState]) -> "TrajectoryEnsemble":
        return replace(self, members=[fn(m) for m in self.members])


def _run_chunk(args):
    amps, config, seed_base, indices = args
    out = []
    for i in indices:
        psi, nj = trajectory_squeeze_amplitudes(amps, config, trajectory_rng(seed_base, i))
        out.append((psi, nj))
    return out


def run_trajectory_ensemble(state: PureState, config: EngineConfig, n_traj: int, seed: int = 0,
                            workers: int = 1) -> TrajectoryEnsemble:
    """Evolve ``n_traj`` independent trajectories from ``state``.

    Each trajectory owns its RNG stream, so output is identical for any
    ``workers``; results are gathered back in trajectory-index order.
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    if config.engine is not Engine.TRAJECTORY:
        raise ValueError("config is not for the trajectory engine")
    idx = np.arange(n_traj)
    if workers <= 1:
        results = _run_chunk((state.amplitudes, config, seed, idx))
    else:
        chunks = [c for c in np.array_split(idx, workers * 4) if len(c)]
        with ProcessPoolExecutor(workers) as pool:
            parts = pool.map(_run_chunk, [(state.amplitudes, config, seed, c) for c in chunks])
            results = [r for part in parts for r in part]
    members = [PureState(state.spec, psi, 1.0 / n_traj) for psi, _ in results]
    return TrajectoryEnsemble(state.spec, members, seed, n_jumps=np.array([nj for _, nj in results]))


def ensemble_post_select(ensemble: TrajectoryEnsemble, povm: PovmSpec) -> TrajectoryEnsemble:
    """Measure every member; weights become P(i|c) = P(c|i) P_i / P(c)."""
    prior = ensemble.weights
    measured, cond = [], np.empty(ensemble.n_traj)
    for i, m in enumerate(ensemble.members):
        post, p = apply_measurement(m, povm)
        measured.append(post)
        cond[i] = p
    p_c = float(np.dot(cond, prior))
    post_w = cond * prior / p_c
    for st, w in zip(measured, post_w):
        st.weight = float(min(w, 1.0))
    if abs(post_w.sum() - 1) > 1e-10:
        raise NumericalInvariantError(f"posterior weights sum to {post_w.sum():.15f}")
    return TrajectoryEnsemble(ensemble.spec, measured, ensemble.rng_seed_base, p_c, cond,
                              ensemble.n_jumps)


def ensemble_expectation(ensemble: TrajectoryEnsemble, evaluator: Callable[[PureState], float]) -> float:
    return float(sum(m.weight * evaluator(m) for m in ensemble.members))


def ensemble_statistics(ensemble: TrajectoryEnsemble, evaluator: Callable[[PureState], float],
                        name: str | None = None) -> TrajectoryStats:
    vals = [evaluator(m) for m in ensemble.members]
    st = weighted_stats(vals, ensemble.weights, ensemble.n_traj)
    if name:
        ensemble.stats[name] = st
    return st


def ensemble_density(ensemble: TrajectoryEnsemble) -> DensityOperator:
    a = ensemble.amplitudes()
    w = ensemble.weights
    return DensityOperator(ensemble.spec, (a.T * w) @ a.conj())
