"""End-to-end PS-state and MSS protocols over any engine.

PS protocol:
  1. all spins up
  2. rotate by +pi/2 about x (coherent spin state)
  3. one-axis twist for chi t, with decoherence from the chosen engine
  4. rotate by -pi/2 about x
  5. collective J_z measurement with outcome c, post-select
  6. rotate by pi/2 about y, then by 5.6 rad about x

MSS benchmark: steps 1-2, twist chi t = pi/2, rotate +pi/2 about x, then a
phase gate S = diag(1, i) on the last qubit.

Steps 1-4 are split from 5-6 (``prepare_ps`` / ``PreMeasurement``) because
every outcome c reuses the same pre-measurement state.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .channels import DEFAULT_DT, DEFAULT_J, make_channel_set
from .engines import (
    Engine,
    EngineConfig,
    TrajectoryEnsemble,
    TrajectoryStats,
    kraus_squeeze,
    pure_squeeze,
    run_trajectory_ensemble,
    weighted_stats,
)
from .errors import NumericalInvariantError
from .measurement import PovmSpec, excitation_populations, interval_probability
from .metrics import QfiResult, ensemble_qfi, qfi_mixed, qfi_pure, witness_expectation
from .spin import (
    CollectiveAxis,
    DensityOperator,
    PureState,
    SystemSpec,
    collective_rotation,
    ghz_state,
    make_all_up,
    rotate_density,
)

log = logging.getLogger(__name__)

# Gaussian widths of the collective measurement found optimal per N.  The
# variance is the square of these numbers (see README).
TABLE_WIDTH = {4: 1.1, 6: 1.3, 8: 1.5, 10: 1.6, 12: 1.8}

PS_CHI_T = 0.15
PS_C = -2.5
FINAL_JY_ANGLE = np.pi / 2
FINAL_JX_ANGLE = 5.6
MSS_CHI_T = np.pi / 2


def default_sigma2(n_qubits: int) -> float:
    if n_qubits in TABLE_WIDTH:
        return TABLE_WIDTH[n_qubits] ** 2
    ns = sorted(TABLE_WIDTH)
    width = float(np.interp(n_qubits, ns, [TABLE_WIDTH[n] for n in ns]))
    return width**2


def resolve_engine(engine, n_qubits: int, x: float) -> Engine:
    if engine in (None, "auto"):
        if x == 0:
            return Engine.PURE
        return Engine.KRAUS if n_qubits <= 10 else Engine.TRAJECTORY
    return Engine(engine)


@dataclass
class PsProtocolParams:
    n_qubits: int
    chi_t: float = PS_CHI_T
    c: float = PS_C
    sigma2: float | None = None
    final_jy_angle: float = FINAL_JY_ANGLE
    final_jx_angle: float = FINAL_JX_ANGLE
    x: float = 0.0
    J: float = DEFAULT_J
    dt: float = DEFAULT_DT
    engine: str | None = "auto"
    n_traj: int = 200
    seed: int = 0
    workers: int = 1
    optimize_final_angles: bool = False

    def __post_init__(self):
        if self.sigma2 is None:
            self.sigma2 = default_sigma2(self.n_qubits)
        if self.chi_t < 0:
            raise ValueError(f"chi_t must be nonnegative, got {self.chi_t}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.x < 0:
            raise ValueError(f"x must be nonnegative, got {self.x}")

    @property
    def spec(self) -> SystemSpec:
        return SystemSpec(self.n_qubits)

    @property
    def resolved_engine(self) -> Engine:
        return resolve_engine(self.engine, self.n_qubits, self.x)

    def engine_config(self, chi_t: float | None = None) -> EngineConfig:
        cs = make_channel_set(self.spec, self.x, self.J, self.dt)
        return EngineConfig(cs, self.chi_t if chi_t is None else chi_t, self.resolved_engine)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["engine"] = self.resolved_engine.value
        return d


@dataclass
class MssProtocolParams:
    n_qubits: int
    x: float = 0.0
    J: float = DEFAULT_J
    dt: float = DEFAULT_DT
    engine: str | None = "auto"
    n_traj: int = 200
    seed: int = 0
    workers: int = 1
    chi_t: float = field(default=MSS_CHI_T)

    def __post_init__(self):
        if self.n_qubits % 2:
            raise ValueError("the MSS is GHZ-equivalent only for even N")
        if self.x < 0:
            raise ValueError(f"x must be nonnegative, got {self.x}")

    @property
    def spec(self) -> SystemSpec:
        return SystemSpec(self.n_qubits)

    @property
    def resolved_engine(self) -> Engine:
        return resolve_engine(self.engine, self.n_qubits, self.x)

    def engine_config(self) -> EngineConfig:
        cs = make_channel_set(self.spec, self.x, self.J, self.dt)
        return EngineConfig(cs, self.chi_t, self.resolved_engine)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["engine"] = self.resolved_engine.value
        return d


@dataclass
class ProtocolResult:
    state: Any  # PureState, DensityOperator or TrajectoryEnsemble
    probability: float | None
    fidelity: float
    qfi: QfiResult
    witness: float
    stats: TrajectoryStats | None = None
    engine: Engine = Engine.PURE
    params: Any = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not -1e-9 <= self.fidelity <= 1 + 1e-9:
            raise NumericalInvariantError(f"fidelity {self.fidelity} outside [0, 1]")
        if self.probability is not None and not -1e-12 <= self.probability <= 1 + 1e-9:
            raise NumericalInvariantError(f"probability {self.probability} outside [0, 1]")

    def row(self) -> dict:
        r = {"fidelity": self.fidelity, "qfi": self.qfi.value, "witness": self.witness}
        if self.probability is not None:
            r["probability"] = self.probability
        if self.stats is not None:
            r.update(sd=self.stats.sd, se=self.stats.se, n_used=self.stats.count)
        r.update(self.extras)
        return r


# ---------------------------------------------------------------------------
# generic carrier helpers


def _rotate(carrier, axis, angle):
    if isinstance(carrier, PureState):
        return collective_rotation(carrier, axis, angle)
    if isinstance(carrier, DensityOperator):
        return rotate_density(carrier, axis, angle)
    return carrier.map(lambda s: collective_rotation(s, axis, angle))


def _squeeze(state: PureState, config: EngineConfig, n_traj: int, seed: int, workers: int):
    if config.engine is Engine.PURE:
        return pure_squeeze(state, config)
    if config.engine is Engine.KRAUS:
        return kraus_squeeze(DensityOperator.from_pure(state), config)
    return run_trajectory_ensemble(state, config, n_traj, seed, workers)


def _final_rotations(spec: SystemSpec, a1: float, a2: float) -> np.ndarray:
    """v = U6^+ |GHZ> with U6 = R_x(a2) R_y(a1), so F = |<v|psi>|^2."""
    g = ghz_state(spec)
    g = collective_rotation(g, CollectiveAxis.X, -a2)
    g = collective_rotation(g, CollectiveAxis.Y, -a1)
    return g.amplitudes


def _ghz_overlaps(carrier, v: np.ndarray):
    """Per-member fidelities with target vector v, or the scalar for rho/psi."""
    if isinstance(carrier, PureState):
        return abs(np.vdot(v, carrier.amplitudes)) ** 2
    if isinstance(carrier, DensityOperator):
        return float(np.vdot(v, carrier.matrix @ v).real)
    return np.abs(carrier.amplitudes() @ v.conj()) ** 2


@dataclass
class PreMeasurement:
    """State after steps 1-4 of the PS protocol."""

    params: PsProtocolParams
    carrier: Any

    @property
    def spec(self) -> SystemSpec:
        return self.params.spec

    def populations(self) -> np.ndarray:
        return excitation_populations(self.carrier)

    def fidelity_curve(self, cs: Sequence[float], sigma2: float | None = None,
                       angles: tuple[float, float] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(F(c), P(c)) for many outcomes without building post-measurement states."""
        p = self.params
        s2 = p.sigma2 if sigma2 is None else sigma2
        a1, a2 = angles or (p.final_jy_angle, p.final_jx_angle)
        v = _final_rotations(self.spec, a1, a2)
        m = self.spec.profile.m
        F, P = np.empty(len(cs)), np.empty(len(cs))
        car = self.carrier
        if isinstance(car, TrajectoryEnsemble):
            amps = car.amplitudes()
            prior = car.weights
            probs = np.abs(amps) ** 2
        for k, c in enumerate(cs):
            w = PovmSpec(self.spec, c, s2).weights[m]
            vw = v * w  # A_c is real diagonal
            if isinstance(car, PureState):
                P[k] = np.sum(car.probabilities() * w**2)
                F[k] = abs(np.vdot(vw, car.amplitudes)) ** 2 / P[k]
            elif isinstance(car, DensityOperator):
                P[k] = float(np.real(np.diagonal(car.matrix) @ w**2))
                F[k] = float(np.vdot(vw, car.matrix @ vw).real) / P[k]
            else:
                cond = probs @ w**2
                P[k] = float(prior @ cond)
                F[k] = float(prior @ (np.abs(amps @ vw.conj()) ** 2)) / P[k]
        return np.clip(F, 0.0, 1.0), P

    def measure(self, c: float | None = None, sigma2: float | None = None):
        """Step 5: returns (post-selected carrier, P(c))."""
        from .engines import ensemble_post_select
        from .measurement import apply_measurement, apply_measurement_density

        p = self.params
        povm = PovmSpec(self.spec, p.c if c is None else c, p.sigma2 if sigma2 is None else sigma2)
        car = self.carrier
        if isinstance(car, PureState):
            return apply_measurement(car, povm)
        if isinstance(car, DensityOperator):
            return apply_measurement_density(car, povm)
        post = ensemble_post_select(car, povm)
        return post, post.probability

    def finish(self, c: float | None = None, sigma2: float | None = None) -> ProtocolResult:
        p = self.params
        measured, prob = self.measure(c, sigma2)
        a1, a2 = p.final_jy_angle, p.final_jx_angle
        if p.optimize_final_angles:
            a1, a2 = optimize_final_angles(measured, a1, a2)
        final = _rotate(_rotate(measured, CollectiveAxis.Y, a1), CollectiveAxis.X, a2)
        return _result(final, prob, p, extras={"jy_angle": a1, "jx_angle": a2})


def _result(final, prob, params, extras=None) -> ProtocolResult:
    ghz = ghz_state(final.spec).amplitudes
    stats = None
    if isinstance(final, TrajectoryEnsemble):
        per = _ghz_overlaps(final, ghz)
        stats = weighted_stats(per, final.weights, final.n_traj)
        fid = float(final.weights @ per)
        q = ensemble_qfi(final)
    elif isinstance(final, DensityOperator):
        fid = _ghz_overlaps(final, ghz)
        q = qfi_mixed(final)
    else:
        fid = float(_ghz_overlaps(final, ghz))
        q = qfi_pure(final)
    fid = float(np.clip(fid, 0.0, 1.0)) if -1e-9 < fid < 1 + 1e-9 else fid
    return ProtocolResult(final, prob, fid, q, witness_expectation(fid), stats,
                          params.resolved_engine, params, extras or {})


def optimize_final_angles(measured, a1: float, a2: float, width: float = 0.5) -> tuple[float, float]:
    """Golden-section refinement of the step-6 angles, one angle at a time."""
    ghz = ghz_state(measured.spec).amplitudes

    def neg_f(b1, b2):
        st = _rotate(_rotate(measured, CollectiveAxis.Y, b1), CollectiveAxis.X, b2)
        val = _ghz_overlaps(st, ghz)
        if isinstance(st, TrajectoryEnsemble):
            val = st.weights @ val
        return -float(val)

    a1 = minimize_scalar(lambda t: neg_f(t, a2), bracket=(a1 - width, a1, a1 + width), method="golden").x
    a2 = minimize_scalar(lambda t: neg_f(a1, t), bracket=(a2 - width, a2, a2 + width), method="golden").x
    return float(a1), float(a2)


# ---------------------------------------------------------------------------
# protocols


def prepare_ps(params: PsProtocolParams) -> PreMeasurement:
    """Steps 1-4."""
    cfg = params.engine_config()
    cs = collective_rotation(make_all_up(params.spec), CollectiveAxis.X, np.pi / 2)
    squeezed = _squeeze(cs, cfg, params.n_traj, params.seed, params.workers)
    return PreMeasurement(params, _rotate(squeezed, CollectiveAxis.X, -np.pi / 2))


def run_ps_protocol(params: PsProtocolParams) -> ProtocolResult:
    return prepare_ps(params).finish()


def prepare_mss(params: MssProtocolParams):
    cfg = params.engine_config()
    cs = collective_rotation(make_all_up(params.spec), CollectiveAxis.X, np.pi / 2)
    return _squeeze(cs, cfg, params.n_traj, params.seed, params.workers)


def apply_phase_gate(carrier, qubit: int | None = None):
    """S = diag(1, i) on ``qubit`` (default: the last qubit)."""
    spec = carrier.spec
    q = spec.n_qubits - 1 if qubit is None else qubit
    phase = np.where(np.arange(spec.dim) & spec.qubit_mask(q), 1j, 1.0)
    if isinstance(carrier, PureState):
        return PureState(spec, carrier.amplitudes * phase, carrier.weight)
    if isinstance(carrier, DensityOperator):
        return DensityOperator(spec, carrier.matrix * np.outer(phase, phase.conj()))
    return carrier.map(lambda s: PureState(spec, s.amplitudes * phase, s.weight))


def run_mss_protocol(params: MssProtocolParams) -> ProtocolResult:
    squeezed = prepare_mss(params)
    final = apply_phase_gate(_rotate(squeezed, CollectiveAxis.X, np.pi / 2))
    return _result(final, None, params)


# ---------------------------------------------------------------------------
# sweeps and interval reports


@dataclass
class SweepPoint:
    value: Any
    result: ProtocolResult | None
    error: str | None = None


SWEEP_AXES = ("c", "sigma2", "chi_t", "x", "N")


def point_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(base_seed, spawn_key=(index,)).generate_state(1)[0])


def sweep(params, axis: str, values: Sequence, base_seed: int | None = None) -> list[SweepPoint]:
    """Independent runs, one per value; failures are recorded and the sweep continues."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    base = params.seed if base_seed is None else base_seed
    is_ps = isinstance(params, PsProtocolParams)
    out = []
    cache = None
    for k, val in enumerate(values):
        try:
            field_name = "n_qubits" if axis == "N" else axis
            changes = {field_name: val, "seed": point_seed(base, k)}
            if axis == "N" and is_ps and val != params.n_qubits:
                changes["sigma2"] = default_sigma2(val)
            if axis == "c" and is_ps:
                # the pre-measurement state does not depend on c
                if cache is None:
                    cache = prepare_ps(params)
                out.append(SweepPoint(val, cache.finish(c=val)))
                continue
            p = replace(params, **changes)
            res = run_ps_protocol(p) if is_ps else run_mss_protocol(p)
            out.append(SweepPoint(val, res))
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            log.warning("sweep point %s=%s failed: %s", axis, val, exc)
            out.append(SweepPoint(val, None, f"{type(exc).__name__}: {exc}"))
    return out


@dataclass
class IntervalReport:
    c_lo: float
    c_hi: float
    f_min: float
    f_max: float
    probability: float
    grid: np.ndarray
    fidelities: np.ndarray


def interval_grid(c_lo: float, c_hi: float, step: float) -> np.ndarray:
    if c_hi == c_lo:
        return np.array([c_lo])
    k = max(int(round((c_hi - c_lo) / step)), 1)
    return np.linspace(c_lo, c_hi, k + 1)


def interval_report_from(pre: PreMeasurement, c_lo: float, c_hi: float, grid_step: float = 0.05) -> IntervalReport:
    if c_hi < c_lo:
        raise ValueError("c_lo must not exceed c_hi")
    grid = interval_grid(c_lo, c_hi, grid_step)
    F, _ = pre.fidelity_curve(grid)
    prob = interval_probability(pre.carrier, pre.params.sigma2, c_lo, c_hi, min(grid_step, 0.005))
    return IntervalReport(c_lo, c_hi, float(F.min()), float(F.max()), prob, grid, F)


def interval_post_selection_report(params: PsProtocolParams, c_lo: float, c_hi: float,
                                   grid_step: float = 0.05) -> IntervalReport:
    """Min/max fidelity over a grid of outcomes in [c_lo, c_hi] and the interval probability."""
    return interval_report_from(prepare_ps(params), c_lo, c_hi, grid_step)
