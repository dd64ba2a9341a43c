"""Lumped-circuit model of one tunable admittance component.

Each reconfigurable component is an inductor L1 in parallel with a series
branch (inductor L2 + varactor C).  The circuit is lossless, so its
admittance is purely imaginary, Y = j*B.  Tuning C moves the susceptance B
at the center frequency; away from the center frequency B drifts in a way
that is captured well by an affine model B(B_c, omega) ~= F1(omega)*B_c +
F2(omega) over a moderate band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Relative guard for the series-branch resonance (1 - omega^2*L2*C -> 0).
RESONANCE_GUARD = 1e-9

# Default number of B_c samples in the fit-quality (NMSE) grid.
NMSE_GRID_SIZE = 64


class ResonanceError(ValueError):
    """Operating point sits on (or too near) the series resonance."""


class FitQualityError(ValueError):
    """Affine frequency model does not reproduce the exact susceptance."""


@dataclass(frozen=True)
class VaractorCircuit:
    """One tunable admittance: L1 parallel to (L2 in series with C).

    Parameters
    ----------
    l1, l2 : float
        Inductances in henries.
    c_min, c_max : float
        Varactor capacitance range in farads.
    """

    l1: float
    l2: float
    c_min: float
    c_max: float

    def __post_init__(self):
        if not (self.l1 > 0 and self.l2 > 0):
            raise ValueError("inductances must be positive")
        if not (0 < self.c_min < self.c_max):
            raise ValueError("capacitance range must satisfy 0 < c_min < c_max")


@dataclass(frozen=True)
class FrequencyBand:
    """Fit window: sample_count uniform frequency samples on [f_lo, f_hi] Hz."""

    f_lo: float
    f_hi: float
    sample_count: int = 61

    def __post_init__(self):
        if not self.f_lo < self.f_hi:
            raise ValueError("band requires f_lo < f_hi")
        if self.sample_count < 2:
            raise ValueError("band needs at least 2 samples")

    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * np.linspace(self.f_lo, self.f_hi, self.sample_count)


@dataclass(frozen=True)
class LinearSusceptanceModel:
    """Affine frequency model B = F1(omega)*B_c + F2(omega).

    F1(omega) = f1_slope*omega + f1_intercept (dimensionless value),
    F2(omega) = f2_slope*omega + f2_intercept (siemens).
    susceptance_min/susceptance_max bound the tunable B_c at omega_c.
    """

    f1_slope: float
    f1_intercept: float
    f2_slope: float
    f2_intercept: float
    omega_c: float
    susceptance_min: float
    susceptance_max: float

    def __post_init__(self):
        if not self.susceptance_min < self.susceptance_max:
            raise ValueError("susceptance range must satisfy min < max")
        f1_c = self.f1(self.omega_c)
        if abs(f1_c - 1.0) > 0.02:
            raise ValueError(
                f"F1(omega_c) = {f1_c:.6f} departs from 1 by more than 2%"
            )
        f2_c = self.f2(self.omega_c)
        scale = max(abs(self.susceptance_min), abs(self.susceptance_max))
        if abs(f2_c) > 0.02 * scale:
            raise ValueError(
                f"F2(omega_c) = {f2_c:.3e} S is not small against the susceptance range"
            )

    def f1(self, omega):
        return self.f1_slope * omega + self.f1_intercept

    def f2(self, omega):
        return self.f2_slope * omega + self.f2_intercept


def flat_model(model: LinearSusceptanceModel) -> LinearSusceptanceModel:
    """Frequency-independent counterpart: F1 = 1, F2 = 0, same susceptance box."""
    return LinearSusceptanceModel(
        f1_slope=0.0,
        f1_intercept=1.0,
        f2_slope=0.0,
        f2_intercept=0.0,
        omega_c=model.omega_c,
        susceptance_min=model.susceptance_min,
        susceptance_max=model.susceptance_max,
    )


def circuit_admittance(circuit: VaractorCircuit, c: float, omega: float) -> complex:
    """Admittance Y = 1/(j*omega*L1) + 1/(j*omega*L2 + 1/(j*omega*C)).

    Purely imaginary for this lossless circuit; returned with an exactly
    zero real part.  Raises ResonanceError within RESONANCE_GUARD of the
    series resonance omega^2*L2*C = 1, where the series branch impedance
    vanishes.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    if abs(1.0 - omega * omega * circuit.l2 * c) < RESONANCE_GUARD:
        raise ResonanceError(
            f"series branch resonant at omega={omega:.6e} rad/s, C={c:.6e} F"
        )
    # Both branches contribute -j/(reactance); keep the arithmetic real.
    series_reactance = omega * circuit.l2 - 1.0 / (omega * c)
    susceptance = -(1.0 / (omega * circuit.l1) + 1.0 / series_reactance)
    return complex(0.0, susceptance)


def capacitance_for_center_susceptance(
    circuit: VaractorCircuit, b_c: float, omega_c: float
) -> float:
    """Capacitance giving susceptance b_c at omega_c; inverse of the circuit law.

    C = 1 / (omega_c^2*L2 + omega_c/(b_c + 1/(omega_c*L1))).
    """
    parallel_term = b_c + 1.0 / (omega_c * circuit.l1)
    if parallel_term == 0.0:
        raise ValueError("b_c = -1/(omega_c*L1) is the pole of the inversion")
    denom = omega_c * omega_c * circuit.l2 + omega_c / parallel_term
    if denom <= 0.0 or not math.isfinite(denom):
        raise ValueError(f"susceptance {b_c:.6e} S maps to a non-physical capacitance")
    return 1.0 / denom


def exact_susceptance(circuit: VaractorCircuit, b_c, omega, omega_c: float):
    """Susceptance at omega of the component tuned to b_c at omega_c.

    Closed form obtained by eliminating C between the circuit law and its
    inversion; reduces to the identity B = b_c at omega = omega_c.
    Accepts scalar or array b_c/omega (broadcast together).
    """
    b_c = np.asarray(b_c, dtype=float)
    omega = np.asarray(omega, dtype=float)
    parallel_term = b_c + 1.0 / (omega_c * circuit.l1)
    shift = (omega * omega - omega_c * omega_c) * circuit.l2
    num = (shift + omega * omega * circuit.l1) * parallel_term - omega_c
    den_core = omega_c - shift * parallel_term
    if np.any(np.abs(den_core) < RESONANCE_GUARD * omega_c):
        raise ResonanceError("shifted resonance: susceptance denominator vanishes")
    out = num / (omega * circuit.l1 * den_core)
    return out if out.ndim else float(out)


def susceptance_range(circuit: VaractorCircuit, omega_c: float) -> tuple[float, float]:
    """Susceptance interval reachable at omega_c over [c_min, c_max].

    C -> B at fixed omega is monotone on either side of the series
    resonance, so the endpoints of the capacitance range map to the
    endpoints of the susceptance range.
    """
    b_lo = circuit_admittance(circuit, circuit.c_min, omega_c).imag
    b_hi = circuit_admittance(circuit, circuit.c_max, omega_c).imag
    return (min(b_lo, b_hi), max(b_lo, b_hi))


def linear_susceptance(model: LinearSusceptanceModel, b_c, omega):
    """Affine-model susceptance F1(omega)*b_c + F2(omega)."""
    return model.f1(omega) * b_c + model.f2(omega)


def fit_linear_model(
    circuit: VaractorCircuit,
    omega_c: float,
    band: FrequencyBand,
    nmse_ceiling: float = 0.01,
) -> LinearSusceptanceModel:
    """Fit the affine frequency model over the band.

    For each sampled omega the exact susceptance is a near-straight line in
    b_c; its slope/intercept are taken from the line through the two
    endpoints of the tunable range.  F1 and F2 are then least-squares
    straight lines through those per-omega values.  Fit quality is scored
    as normalized mean square error on a dense (b_c, omega) grid and must
    not exceed nmse_ceiling.
    """
    b_lo, b_hi = susceptance_range(circuit, omega_c)
    omegas = band.omegas()

    b_ends = np.array([b_lo, b_hi])
    ends = exact_susceptance(circuit, b_ends[None, :], omegas[:, None], omega_c)
    slopes = (ends[:, 1] - ends[:, 0]) / (b_hi - b_lo)
    intercepts = ends[:, 0] - slopes * b_lo

    design = np.vstack([omegas, np.ones_like(omegas)]).T
    (f1_slope, f1_intercept), *_ = np.linalg.lstsq(design, slopes, rcond=None)
    (f2_slope, f2_intercept), *_ = np.linalg.lstsq(design, intercepts, rcond=None)

    model = LinearSusceptanceModel(
        f1_slope=float(f1_slope),
        f1_intercept=float(f1_intercept),
        f2_slope=float(f2_slope),
        f2_intercept=float(f2_intercept),
        omega_c=omega_c,
        susceptance_min=b_lo,
        susceptance_max=b_hi,
    )

    b_grid = np.linspace(b_lo, b_hi, NMSE_GRID_SIZE)
    exact = exact_susceptance(circuit, b_grid[None, :], omegas[:, None], omega_c)
    fitted = linear_susceptance(model, b_grid[None, :], omegas[:, None])
    nmse = float(np.sum((fitted - exact) ** 2) / np.sum(exact**2))
    if nmse > nmse_ceiling:
        raise FitQualityError(
            f"fit NMSE {nmse:.3e} exceeds ceiling {nmse_ceiling:.3e}"
        )
    return model


def fit_nmse(
    circuit: VaractorCircuit, model: LinearSusceptanceModel, band: FrequencyBand
) -> float:
    """NMSE of the affine model against the exact susceptance on a dense grid."""
    b_grid = np.linspace(model.susceptance_min, model.susceptance_max, NMSE_GRID_SIZE)
    omegas = band.omegas()
    exact = exact_susceptance(circuit, b_grid[None, :], omegas[:, None], model.omega_c)
    fitted = linear_susceptance(model, b_grid[None, :], omegas[:, None])
    return float(np.sum((fitted - exact) ** 2) / np.sum(exact**2))
