"""Collective J_z measurement with Gaussian resolution and post-selection.

The measurement operator A_c is diagonal in the computational basis with
entry w_m = sqrt(Pr(N/2 - m | c)) on every index with m spins down, so it is
stored as N+1 weights and broadcast through the excitation profile.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .spin import (
    CollectiveAxis,
    DensityOperator,
    PureState,
    SystemSpec,
    dicke_coefficients,
    single_qubit_rotation,
)

COMPLETENESS_FLAG = 1e-3
PDF_GRID_STEP = 0.05


def gaussian_pr(M, c, sigma2: float):
    """Pr(M | c): normal density in c centred on the projection M."""
    M = np.asarray(M, dtype=float)
    return np.exp(-((c - M) ** 2) / (2 * sigma2)) / np.sqrt(2 * np.pi * sigma2)


@dataclass(frozen=True)
class PovmSpec:
    spec: SystemSpec
    c: float
    sigma2: float
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        n = self.spec.n_qubits
        w = np.sqrt(gaussian_pr(n / 2 - np.arange(n + 1), self.c, self.sigma2))
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def diagonal(self) -> np.ndarray:
        """Diagonal of A_c over the 2^N basis."""
        return self.weights[self.spec.profile.m]


def apply_measurement(state: PureState, povm: PovmSpec) -> tuple[PureState, float]:
    out = state.amplitudes * povm.diagonal()
    prob = float(np.vdot(out, out).real)
    return PureState(state.spec, out / np.sqrt(prob), state.weight), prob


def apply_measurement_density(rho: DensityOperator, povm: PovmSpec) -> tuple[DensityOperator, float]:
    w = povm.diagonal()
    out = rho.matrix * np.outer(w, w)
    prob = float(np.trace(out).real)
    return DensityOperator(rho.spec, out / prob), prob


def excitation_populations(obj) -> np.ndarray:
    """Population of each m-excitation subspace (length N+1).

    Accepts a PureState, DensityOperator or anything with ``members`` (a
    weighted trajectory ensemble).
    """
    if isinstance(obj, PureState):
        probs, spec = obj.probabilities(), obj.spec
    elif isinstance(obj, DensityOperator):
        probs, spec = obj.populations(), obj.spec
    elif hasattr(obj, "members"):
        spec = obj.spec
        probs = np.zeros(spec.dim)
        for s in obj.members:
            probs += s.weight * s.probabilities()
    else:
        raise TypeError(f"cannot take populations of {type(obj).__name__}")
    return np.bincount(spec.profile.m, weights=probs, minlength=spec.n_qubits + 1)


def default_pdf_grid(n_qubits: int, sigma2: float, step: float = PDF_GRID_STEP) -> np.ndarray:
    half = n_qubits / 2 + 8 * np.sqrt(sigma2)
    k = int(np.ceil(2 * half / step))
    return -half + step * np.arange(k + 1)


@dataclass
class PostSelectionPdf:
    spec: SystemSpec
    sigma2: float
    grid: np.ndarray
    density: np.ndarray

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def peak(self) -> float:
        return float(self.grid[np.argmax(self.density)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["c", "density"])
            for c, p in zip(self.grid, self.density):
                w.writerow([f"{c:.12g}", f"{p:.12g}"])


def pdf_from_populations(pops: np.ndarray, sigma2: float, grid) -> np.ndarray:
    n = len(pops) - 1
    grid = np.asarray(grid, dtype=float)
    Ms = n / 2 - np.arange(n + 1)
    return gaussian_pr(Ms[None, :], grid[:, None], sigma2) @ pops


def post_selection_pdf(obj, sigma2: float, grid=None) -> PostSelectionPdf:
    """P(c) = sum_m pop_m Pr(N/2 - m | c) over a grid of outcomes."""
    pops = excitation_populations(obj)
    spec = obj.spec
    grid = default_pdf_grid(spec.n_qubits, sigma2) if grid is None else np.asarray(grid, dtype=float)
    return PostSelectionPdf(spec, sigma2, grid, pdf_from_populations(pops, sigma2, grid))


def interval_probability(obj, sigma2: float, c_lo: float, c_hi: float, step: float = 0.005) -> float:
    """Integral of P(c) over [c_lo, c_hi] by the trapezoid rule."""
    if c_hi < c_lo:
        raise ValueError("c_hi must not be below c_lo")
    if c_hi == c_lo:
        return 0.0
    k = max(int(np.ceil((c_hi - c_lo) / step)), 1)
    grid = np.linspace(c_lo, c_hi, k + 1)
    return float(np.trapezoid(pdf_from_populations(excitation_populations(obj), sigma2, grid), grid))


@dataclass(frozen=True)
class CompletenessReport:
    deviation: float
    flagged: bool


def completeness_check(spec: SystemSpec, sigma2: float, grid=None) -> CompletenessReport:
    """max_m |integral Pr(N/2 - m | c) dc - 1| over the quadrature grid."""
    grid = default_pdf_grid(spec.n_qubits, sigma2, 0.01) if grid is None else np.asarray(grid, dtype=float)
    n = spec.n_qubits
    Ms = n / 2 - np.arange(n + 1)
    vals = gaussian_pr(Ms[None, :], grid[:, None], sigma2)
    dev = float(np.max(np.abs(np.trapezoid(vals, grid, axis=0) - 1)))
    return CompletenessReport(dev, dev > COMPLETENESS_FLAG)


def dicke_subspace_equivalence(state: PureState, povm: PovmSpec, tol: float = 1e-10) -> float:
    """Max amplitude deviation between the full-basis and Dicke-basis measurement."""
    coeffs, residual = dicke_coefficients(state)
    if residual > tol:
        raise ValueError(f"state is not symmetric (residual {residual:.3e})")
    spec = state.spec
    a = coeffs * povm.weights
    a /= np.linalg.norm(a)
    mult = spec.profile.multiplicities()
    m = spec.profile.m
    from_dicke = a[m] / np.sqrt(mult[m])
    full, _ = apply_measurement(state, povm)
    return float(np.max(np.abs(full.amplitudes - from_dicke)))


def rotating_frame_invariance(povm: PovmSpec, theta: float) -> float:
    """max |U^+ A_c U - A_c| for U the product of per-qubit R_z(theta)."""
    n = povm.spec.n_qubits
    rz = np.diag(single_qubit_rotation(CollectiveAxis.Z, theta))
    u = np.ones(1, dtype=complex)
    for _ in range(n):
        u = np.kron(u, rz)
    a = povm.diagonal()
    conj = (u.conj()[:, None] * np.diag(a)) * u[None, :]
    return float(np.max(np.abs(conj - np.diag(a))))
