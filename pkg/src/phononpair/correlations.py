"""Closed-form correlation functions, witness and spectra for the cooled pair.

Both sidebands of a cooled oscillator carry thermal photon statistics, but
red (phonon-creating) and blue (phonon-annihilating) detections are strongly
ordered: a red click heralds an extra phonon whose retrieval enhances the
blue rate by (n_m+1)/n_m.  With two oscillators behind a balanced beam
splitter the same physics produces detector-dependent fringes, and the
two-detector correlation pair (g2_aa, g2_ba) bounds an entanglement witness
from above.  Everything here is a closed form in the derived parameters;
these functions are the oracles against which the stochastic simulators and
estimators are tested.

All formulas assume the heralding order (trigger red, then blue) and
tau >= 0.  They are derived for delays well beyond the cavity and filter
response times; `tau_validity_floor` gives the scale below which values are
extrapolations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BlindSpotError, DegenerateWitnessError, ParameterError
from .params import DerivedParams, TwoCavityParams, chi_cavity

SQRT2 = math.sqrt(2.0)

# Occupancies above this never produce a witness violation at any delay:
# positive root of (n+1)^2 = 4n(2n+1).
N_MAX_VIOLATION = (2.0 * SQRT2 - 1.0) / 7.0


@dataclass(frozen=True)
class DetectorTag:
    """Which detector and which sideband color a click belongs to."""

    detector: str
    color: str

    def __post_init__(self) -> None:
        if self.detector not in ("A", "B", "single"):
            raise ParameterError(f"unknown detector {self.detector!r}")
        if self.color not in ("red", "blue"):
            raise ParameterError(f"unknown color {self.color!r}")


A_RED = DetectorTag("A", "red")
A_BLUE = DetectorTag("A", "blue")
B_RED = DetectorTag("B", "red")
B_BLUE = DetectorTag("B", "blue")
SINGLE_RED = DetectorTag("single", "red")
SINGLE_BLUE = DetectorTag("single", "blue")


def _check_tau(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ParameterError("tau must be >= 0 (heralding order is fixed)")
    return tau


def tau_validity_floor(d: DerivedParams, filter_bandwidth: float | None = None) -> float:
    """Delay below which the closed forms are extrapolated.

    The formulas hold for delays much longer than the cavity response 1/kappa
    and, when a sideband filter of bandwidth `filter_bandwidth` is in the
    path, 1/filter_bandwidth.
    """
    floor = 10.0 / d.kappa
    if filter_bandwidth is not None:
        floor = max(floor, 10.0 / filter_bandwidth)
    return floor


def g2_single_same(tau, d: DerivedParams):
    """Same-color autocorrelation 1 + e^{-gamma_eff tau}: filtered thermal light."""
    tau = _check_tau(tau)
    return 1.0 + np.exp(-d.gamma_eff * tau)


def g2_single_cross(tau, direction: str, d: DerivedParams):
    """Cross-color correlation of one cavity's sidebands.

    direction "blue_given_red": 1 + ((n_m+1)/n_m) e^{-gamma_eff tau}; the red
    click heralds one extra phonon, whose retrieval dominates the blue rate
    at small n_m.  direction "red_given_blue": 1 + (n_m/(n_m+1))
    e^{-gamma_eff tau}; a blue click heralds one phonon fewer.
    """
    tau = _check_tau(tau)
    decay = np.exp(-d.gamma_eff * tau)
    if direction == "blue_given_red":
        if d.n_m == 0:
            raise ParameterError(
                "blue_given_red undefined at n_m = 0: conditioning on a "
                "red click that never occurs"
            )
        return 1.0 + (d.n_m + 1.0) / d.n_m * decay
    if direction == "red_given_blue":
        return 1.0 + d.n_m / (d.n_m + 1.0) * decay
    raise ParameterError(f"unknown direction {direction!r}")


def g2_two_cavity(
    tau,
    trigger: DetectorTag,
    target: DetectorTag,
    p: TwoCavityParams,
    d: DerivedParams,
):
    """Two-detector cross-color correlation behind the beam splitter.

    For a red trigger at A, the following blue photon interferes with fringe
    angle delta*tau/2 + phi:

        g2_{A_b|A_r} = 1 + ((n_m+1)/n_m) e^{-gamma_eff tau} cos^2(delta tau/2 + phi)
        g2_{B_b|A_r} = same with sin^2.

    A red trigger at B gives the same pair with phi -> phi + pi/2.
    """
    tau = _check_tau(tau)
    if trigger.color != "red" or target.color != "blue":
        raise ParameterError("heralding order is red trigger -> blue target")
    if trigger.detector not in ("A", "B") or target.detector not in ("A", "B"):
        raise ParameterError("two-cavity correlations need detectors A/B")
    if d.n_m == 0:
        raise ParameterError("undefined at n_m = 0 (no red flux to trigger on)")
    angle = 0.5 * p.delta * tau + p.phi
    if trigger.detector == "B":
        angle = angle + math.pi / 2.0
    fringe = np.cos(angle) ** 2 if target.detector == "A" else np.sin(angle) ** 2
    excess = (d.n_m + 1.0) / d.n_m * np.exp(-d.gamma_eff * tau)
    return 1.0 + excess * fringe


def witness_from_g2(g2_aa, g2_ba, tol: float = 1e-9):
    """Upper bound R on the separability witness from a measured g2 pair.

    R = 4 (g2_aa + g2_ba - 1) / (g2_aa - g2_ba)^2; any separable state obeys
    R >= 1, so R < 1 certifies entanglement.  Raises when the two inputs are
    too close for the bound to be informative.
    """
    g2_aa = np.asarray(g2_aa, dtype=float)
    g2_ba = np.asarray(g2_ba, dtype=float)
    diff = g2_aa - g2_ba
    scale = np.maximum(1.0, np.maximum(np.abs(g2_aa), np.abs(g2_ba)))
    if np.any(np.abs(diff) <= tol * scale):
        raise DegenerateWitnessError(
            "witness degenerate: |g2_aa - g2_ba| below tolerance"
        )
    out = 4.0 * (g2_aa + g2_ba - 1.0) / diff**2
    return out if out.ndim else float(out)


def witness_Rm(
    tau,
    p: TwoCavityParams,
    d: DerivedParams,
    blind_spot_tol: float = 1e-6,
    on_blind_spot: str = "raise",
):
    """Closed-form witness bound for the symmetric two-cavity setup.

        R_m(tau) = 4 n_m [n_m + (n_m+1) e^{-gamma_eff tau}]
                   / [(n_m+1)^2 e^{-2 gamma_eff tau} cos^2(delta tau + 2 phi)]

    Where cos^2(delta tau + 2 phi) vanishes the two detectors see identical
    statistics and the bound blows up; such delays either raise
    BlindSpotError (default) or return +inf (`on_blind_spot="inf"`).
    """
    tau = _check_tau(tau)
    n = d.n_m
    decay = np.exp(-d.gamma_eff * tau)
    fringe = np.cos(p.delta * tau + 2.0 * p.phi) ** 2
    blind = fringe < blind_spot_tol
    if np.any(blind):
        if on_blind_spot == "raise":
            raise BlindSpotError(
                "witness blind spot: cos^2(delta tau + 2 phi) < "
                f"{blind_spot_tol:g} at some requested delays"
            )
        if on_blind_spot != "inf":
            raise ParameterError("on_blind_spot must be 'raise' or 'inf'")
    num = 4.0 * n * (n + (n + 1.0) * decay)
    den = (n + 1.0) ** 2 * decay**2 * fringe
    if np.any(blind):
        # only reachable with on_blind_spot="inf"
        out = np.full(np.broadcast(tau, den).shape, np.inf)
        np.divide(num, den, out=out, where=~blind)
    else:
        out = num / den
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class ViolationBoundary:
    """Region of (n_m, tau) where the witness bound can drop below 1.

    `n_max` is the largest occupancy with any violating delay; `tau_max` maps
    an occupancy to the upper edge of its violating window (at the optimal
    fringe phase); `tau_max_default` is that edge at the derived n_m, or None
    when no violation is possible there.
    """

    n_max: float
    tau_max: Callable[[float], float]
    tau_max_default: float | None


def violation_boundary(d: DerivedParams) -> ViolationBoundary:
    """Solve R_m = 1 at the optimal fringe phase.

    With cos^2 = 1 the condition R_m < 1 is a quadratic in e^{-gamma_eff tau}
    whose positive root gives

        tau_max(n) = gamma_eff^{-1} ln[(sqrt2 - 1)(n + 1)/(2n)],

    positive only for n below n_max = (2 sqrt2 - 1)/7 = 0.2612...
    """

    def tau_max(n_m: float) -> float:
        if n_m <= 0:
            raise ParameterError("tau_max needs n_m > 0")
        if n_m > N_MAX_VIOLATION * (1.0 + 1e-12):
            raise ParameterError(
                f"no violation possible: n_m = {n_m:.4g} >= {N_MAX_VIOLATION:.4f}"
            )
        return max(
            math.log((SQRT2 - 1.0) * (n_m + 1.0) / (2.0 * n_m)) / d.gamma_eff, 0.0
        )

    default = None
    if 0 < d.n_m <= N_MAX_VIOLATION:
        default = tau_max(d.n_m)
    return ViolationBoundary(
        n_max=N_MAX_VIOLATION, tau_max=tau_max, tau_max_default=default
    )


def classical_crossover_tau(d: DerivedParams) -> float:
    """Delay marking the edge of the nonclassical window, ln((n_m+1)/n_m)/gamma_eff.

    Below it the cross-color excess ((n_m+1)/n_m) e^{-gamma_eff tau} exceeds 1,
    which is exactly the condition for both classical tests to fail: the
    Cauchy-Schwarz inequality [g2_b|r(tau)]^2 <= g2_r|r(0) g2_b|b(0) and the
    2/3 bound on the best-case detector ratio g2_aa/(g2_aa + g2_ba).
    """
    if d.n_m == 0:
        return math.inf
    return math.log((d.n_m + 1.0) / d.n_m) / d.gamma_eff


def output_spectrum(
    omega,
    d: DerivedParams,
    laser_linewidth: float | None = None,
    r_suppress: float = 1.0,
):
    """Emitted spectrum: two sideband Lorentzians plus a suppressed carrier.

    Each term integrates (d omega / 2 pi) to its photon flux: weight f_r at
    +omega_m_eff, f_b at -omega_m_eff (rotating frame at the drive), and
    r_suppress * f_c at 0 with the laser linewidth.  The carrier term needs
    both the carrier flux and a laser linewidth; returns (values,
    carrier_included).
    """
    omega = np.asarray(omega, dtype=float)

    def lorentzian(center: float, width: float, weight: float):
        return weight * width / ((width / 2.0) ** 2 + (omega - center) ** 2)

    out = lorentzian(+d.omega_m_eff, d.gamma_eff, d.f_r)
    out = out + lorentzian(-d.omega_m_eff, d.gamma_eff, d.f_b)
    carrier_included = d.f_c is not None and laser_linewidth is not None
    if carrier_included:
        if not 0 < r_suppress <= 1:
            raise ParameterError("r_suppress must be in (0, 1]")
        out = out + lorentzian(0.0, laser_linewidth, r_suppress * d.f_c)
    return out, carrier_included


def sideband_cross_correlator(tau, d: DerivedParams, theta: float = 0.0):
    """Anomalous correlator <b_r^dag(t) b_b^dag(t+tau)> of the two sidebands.

    The pair amplitude behind the blue|red excess: its squared magnitude over
    f_r f_b reproduces the (n_m+1)/n_m e^{-gamma_eff tau} excess.  The decay
    rate is gamma_eff/2 (one single-quantum coherence), not gamma_eff.
    `theta` is an overall path/filter phase; it cancels in every observable
    and is kept only so the full complex value can be inspected.  The normal
    cross-correlator <b_r^dag b_b> vanishes in comparison and is not modeled.
    """
    tau = _check_tau(tau)
    chi_p = chi_cavity(d.kappa, d.detuning, +d.omega_m)
    chi_m = chi_cavity(d.kappa, d.detuning, -d.omega_m)
    prefactor = (
        -d.kappa_r
        * d.alpha_mag**2
        * np.exp(-1j * theta)
        * np.conj(chi_p)
        * np.conj(chi_m)
        * (d.n_m + 1.0)
    )
    return prefactor * np.exp(-(d.gamma_eff / 2.0 - 1j * d.omega_m_eff) * tau)


def concurrence(p00, p11, q):
    """Concurrence of a single-excitation-sector state from its elements.

    For the block with populations p00, p11 and one-excitation coherence
    q = <01|rho|10>: C = max(2(|q| - sqrt(p00 p11)), 0).  C > 0 is
    equivalent to the separability-ratio criterion p00 p11 / |q|^2 < 1.
    """
    p00 = np.asarray(p00, dtype=float)
    p11 = np.asarray(p11, dtype=float)
    if np.any(p00 < -1e-12) or np.any(p11 < -1e-12) or np.any(p00 > 1 + 1e-12) or np.any(p11 > 1 + 1e-12):
        raise ParameterError("p00, p11 must be probabilities")
    out = np.maximum(2.0 * (np.abs(q) - np.sqrt(np.maximum(p00, 0.0) * np.maximum(p11, 0.0))), 0.0)
    return out if out.ndim else float(out)


def heralded_concurrence(n_m: float) -> float:
    """Concurrence of the state heralded by one red click from the cold pair.

    A red click applies the symmetric raising combination to the two-mode
    thermal state; the single-excitation block then has p00 = 0 and maximal
    coherence, giving C(0+) = 1/(1+n_m)^3.
    """
    if n_m < 0:
        raise ParameterError("n_m must be >= 0")
    return (1.0 + n_m) ** -3
