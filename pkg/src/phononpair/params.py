"""System parameters and derived sideband-cooling quantities.

A driven cavity red-detuned from resonance cools a mechanical oscillator and
scatters drive photons into two motional sidebands.  Everything downstream
(closed-form correlations, jump simulations, heterodyne processing) consumes
the small set of derived rates computed here: the anti-Stokes and Stokes
scattering rates, the optical damping and its quantum backaction occupancy,
the effective linewidth and occupancy of the cooled oscillator, and the
emitted sideband photon fluxes.

All frequencies and rates are angular (rad/s).  Preset builders are provided
both for the physical operating point (`paper_system`) and for dimensionless
desk-scale simulation units with unit effective linewidth (`desk_system`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace, asdict

import numpy as np
from scipy.constants import hbar as HBAR, k as K_B

from .errors import (
    AsymmetryError,
    HeatingRegimeError,
    ParameterError,
    ValidityWarning,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemParams:
    """Inputs describing one driven optomechanical cavity.

    Parameters
    ----------
    omega_m : float
        Mechanical resonance frequency (rad/s).
    gamma : float
        Intrinsic mechanical damping rate (rad/s).
    kappa : float
        Total cavity linewidth (rad/s).
    kappa_r : float
        Output coupling into the detected port (rad/s), 0 < kappa_r <= kappa.
    alpha_mag : float
        Magnitude of the effective optomechanical drive amplitude
        |alpha| = g * x_zpf * |abar| (rad/s).  Zero switches the drive off.
    detuning : float
        Drive-cavity detuning Delta (rad/s); cooling requires Delta < 0 and
        the standard operating point is Delta = -omega_m.
    temperature : float, optional
        Bath temperature in kelvin.  Exactly one of `temperature` / `n_th`
        must be given.
    n_th : float, optional
        Bath phonon occupancy, used directly when given.  This is the natural
        choice for dimensionless desk-scale parameters.
    g_x_zpf : float, optional
        Bare vacuum optomechanical coupling g * x_zpf (rad/s).  When given,
        the intracavity amplitude |abar| = alpha_mag / g_x_zpf is known and
        the carrier photon flux can be derived.
    """

    omega_m: float
    gamma: float
    kappa: float
    kappa_r: float
    alpha_mag: float
    detuning: float
    temperature: float | None = None
    n_th: float | None = None
    g_x_zpf: float | None = None

    def __post_init__(self) -> None:
        if self.omega_m <= 0 or self.gamma < 0 or self.kappa <= 0:
            raise ParameterError("omega_m, kappa must be > 0 and gamma >= 0")
        if not 0 < self.kappa_r <= self.kappa * (1 + 1e-12):
            raise ParameterError("kappa_r must satisfy 0 < kappa_r <= kappa")
        if self.alpha_mag < 0:
            raise ParameterError("alpha_mag must be >= 0")
        given = (self.temperature is not None) + (self.n_th is not None)
        if given != 1:
            raise ParameterError(
                "invalid bath: give exactly one of temperature or n_th"
            )
        if self.temperature is not None and self.temperature < 0:
            raise ParameterError("invalid bath: temperature must be >= 0")
        if self.n_th is not None and self.n_th < 0:
            raise ParameterError("invalid bath: n_th must be >= 0")
        if self.g_x_zpf is not None and self.g_x_zpf <= 0:
            raise ParameterError("g_x_zpf must be > 0 when given")

    @property
    def bath_occupancy(self) -> float:
        """Bath phonon number n_th = k_B T / (hbar omega_m).

        The high-temperature form is used on purpose; at 20 mK and
        2 pi x 2 MHz it differs from the Bose-Einstein occupancy by less
        than 0.3%.
        """
        if self.n_th is not None:
            return self.n_th
        return K_B * self.temperature / (HBAR * self.omega_m)

    def to_dict(self) -> dict:
        return asdict(self)


def cavity_susceptibility(params: SystemParams, omega) -> np.ndarray | complex:
    """Cavity response chi_C[omega] = 1 / (kappa/2 - i (omega + Delta))."""
    return chi_cavity(params.kappa, params.detuning, omega)


def chi_cavity(kappa: float, detuning: float, omega) -> np.ndarray | complex:
    omega = np.asarray(omega, dtype=float)
    out = 1.0 / (kappa / 2.0 - 1j * (omega + detuning))
    return out if np.ndim(out) else complex(out)


def mechanical_susceptibility(
    gamma_eff: float, omega_m_eff: float, omega
) -> np.ndarray | complex:
    """Cooled-oscillator response chi_M[omega] with effective linewidth.

    chi_M[omega] = 1 / (gamma_eff/2 - i (omega - omega_m_eff)).
    """
    omega = np.asarray(omega, dtype=float)
    out = 1.0 / (gamma_eff / 2.0 - 1j * (omega - omega_m_eff))
    return out if np.ndim(out) else complex(out)


@dataclass(frozen=True)
class DerivedParams:
    """Cooling rates, occupancies and sideband fluxes derived from inputs.

    `f_c` is the carrier photon flux kappa_r |abar|^2, only available when
    the bare coupling was supplied; otherwise None.
    """

    omega_m: float
    omega_m_eff: float
    kappa: float
    kappa_r: float
    eta_esc: float
    gamma: float
    alpha_mag: float
    detuning: float
    n_th: float
    a_minus: float
    a_plus: float
    gamma_opt: float
    gamma_eff: float
    n_opt: float
    n_m: float
    f_r: float
    f_b: float
    f_c: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def derive(params: SystemParams, omega_m_eff: float | None = None) -> DerivedParams:
    """Compute scattering rates, effective occupancy and sideband fluxes.

    The anti-Stokes (cooling) and Stokes (heating) scattering rates follow
    from the cavity response at the two sideband frequencies,

        a_minus = kappa |alpha|^2 |chi_C[+omega_m]|^2
        a_plus  = kappa |alpha|^2 |chi_C[-omega_m]|^2

    giving the optical damping gamma_opt = a_minus - a_plus, the backaction
    occupancy n_opt = a_plus / gamma_opt (equal to (kappa/4 omega_m)^2 at
    detuning -omega_m), the effective linewidth gamma_eff = gamma +
    gamma_opt, and the weighted steady occupancy

        n_m = (gamma n_th + gamma_opt n_opt) / gamma_eff.

    Sideband photon fluxes at the detected port:

        f_b = kappa_r |alpha|^2 |chi_C[+omega_m]|^2 n_m
        f_r = kappa_r |alpha|^2 |chi_C[-omega_m]|^2 (n_m + 1)

    Parameters
    ----------
    params : SystemParams
    omega_m_eff : float, optional
        Override for the optical-spring-shifted mechanical frequency carried
        through to spectra and correlators.  Defaults to params.omega_m (the
        shift is negligible at the standard operating point).

    Raises
    ------
    HeatingRegimeError
        If the drive is on but a_minus <= a_plus (no net cooling).
    """
    w_m = params.omega_m
    n_th = params.bath_occupancy
    alpha2 = params.alpha_mag**2

    if params.alpha_mag > 0 and abs(params.alpha_mag) > 0.1 * params.kappa:
        warnings.warn(
            "weak-coupling assumption stretched: |alpha| is not << kappa",
            ValidityWarning,
            stacklevel=2,
        )

    chi_p = chi_cavity(params.kappa, params.detuning, +w_m)
    chi_m = chi_cavity(params.kappa, params.detuning, -w_m)
    a_minus = params.kappa * alpha2 * abs(chi_p) ** 2
    a_plus = params.kappa * alpha2 * abs(chi_m) ** 2
    gamma_opt = a_minus - a_plus

    if params.alpha_mag == 0:
        # drive off: pure thermal oscillator, no sideband flux
        n_opt = 0.0
    else:
        if gamma_opt <= 0:
            raise HeatingRegimeError(
                "heating regime: a_minus <= a_plus "
                f"({a_minus:.4g} <= {a_plus:.4g}); need red detuning"
            )
        n_opt = a_plus / gamma_opt

    gamma_eff = params.gamma + gamma_opt
    if gamma_eff <= 0:
        raise ParameterError("gamma_eff must be > 0 (undamped oscillator)")
    n_m = (params.gamma * n_th + gamma_opt * n_opt) / gamma_eff

    scale = params.kappa_r * alpha2
    f_b = scale * abs(chi_p) ** 2 * n_m
    f_r = scale * abs(chi_m) ** 2 * (n_m + 1.0)
    f_c = None
    if params.g_x_zpf is not None:
        f_c = params.kappa_r * (params.alpha_mag / params.g_x_zpf) ** 2

    return DerivedParams(
        omega_m=w_m,
        omega_m_eff=w_m if omega_m_eff is None else omega_m_eff,
        kappa=params.kappa,
        kappa_r=params.kappa_r,
        eta_esc=params.kappa_r / params.kappa,
        gamma=params.gamma,
        alpha_mag=params.alpha_mag,
        detuning=params.detuning,
        n_th=n_th,
        a_minus=a_minus,
        a_plus=a_plus,
        gamma_opt=gamma_opt,
        gamma_eff=gamma_eff,
        n_opt=n_opt,
        n_m=n_m,
        f_r=f_r,
        f_b=f_b,
        f_c=f_c,
    )


@dataclass(frozen=True)
class OccupancyBreakdown:
    """Decomposition of the steady occupancy into bath and backaction parts."""

    bath_part: float
    backaction_part: float
    n_m: float
    regime: str
    optical_dominated_approx: float | None
    intrinsic_dominated_approx: float | None


def occupancy_regime(params: SystemParams) -> OccupancyBreakdown:
    """Split n_m into bath and backaction contributions and label the regime.

    When optical damping dominates (gamma_opt >> gamma) the occupancy
    approaches (gamma/gamma_opt) n_th + n_opt; in the opposite limit it
    approaches n_th + (gamma_opt/gamma) n_opt.  Both limiting forms are
    returned alongside the exact weighted value.
    """
    d = derive(params)
    bath = params.gamma * d.n_th / d.gamma_eff
    backaction = d.gamma_opt * d.n_opt / d.gamma_eff
    optical_approx = None
    if d.gamma_opt > 0:
        optical_approx = params.gamma / d.gamma_opt * d.n_th + d.n_opt
    intrinsic_approx = None
    if params.gamma > 0:
        intrinsic_approx = d.n_th + d.gamma_opt / params.gamma * d.n_opt
    regime = (
        "optical-damping-dominated"
        if d.gamma_opt > params.gamma
        else "intrinsic-damping-dominated"
    )
    return OccupancyBreakdown(
        bath_part=bath,
        backaction_part=backaction,
        n_m=d.n_m,
        regime=regime,
        optical_dominated_approx=optical_approx,
        intrinsic_dominated_approx=intrinsic_approx,
    )


@dataclass(frozen=True)
class TwoCavityParams:
    """Two nominally identical cavities feeding a balanced beam splitter.

    `phi` is the interferometer phase as it appears in the two-detector
    correlation formulas: for equal mechanical frequencies and phi = 0 a red
    detection at output A steers the following blue photon to A.  `delta` is
    the mechanical frequency difference omega_m,2 - omega_m,1 and is derived
    from the two cavities.
    """

    cavity1: SystemParams
    cavity2: SystemParams
    phi: float = 0.0

    def __post_init__(self) -> None:
        d = self.delta
        if abs(d) > 0.1 * self.cavity1.kappa:
            warnings.warn(
                "frequency difference delta is not << kappa",
                ValidityWarning,
                stacklevel=2,
            )
        if abs(d) > 0.1 * self.cavity1.omega_m:
            warnings.warn(
                "frequency difference delta is not << omega_m",
                ValidityWarning,
                stacklevel=2,
            )

    @property
    def delta(self) -> float:
        return self.cavity2.omega_m - self.cavity1.omega_m

    def validate_symmetric(self, tol: float = 0.01) -> None:
        """Reject parameter pairs whose rates differ by more than `tol`.

        The closed forms drop cavity indices; they only hold when linewidths,
        drive strengths and bath occupancies agree to ~1%.
        """
        pairs = [
            ("kappa", self.cavity1.kappa, self.cavity2.kappa),
            ("kappa_r", self.cavity1.kappa_r, self.cavity2.kappa_r),
            ("alpha_mag", self.cavity1.alpha_mag, self.cavity2.alpha_mag),
            ("gamma", self.cavity1.gamma, self.cavity2.gamma),
            (
                "bath_occupancy",
                self.cavity1.bath_occupancy,
                self.cavity2.bath_occupancy,
            ),
        ]
        for name, x1, x2 in pairs:
            scale = max(abs(x1), abs(x2))
            if scale == 0:
                continue
            if abs(x1 - x2) / scale > tol:
                raise AsymmetryError(
                    f"cavities differ in {name} by more than {tol:.0%}: "
                    f"{x1:.6g} vs {x2:.6g}"
                )

    def to_dict(self) -> dict:
        return {
            "cavity1": self.cavity1.to_dict(),
            "cavity2": self.cavity2.to_dict(),
            "phi": self.phi,
            "delta": self.delta,
        }


def paper_system() -> SystemParams:
    """Physical operating point used throughout for order-of-magnitude checks.

    omega_m = 2 pi x 2 MHz, Q = 2e7, kappa = kappa_r = 2 pi x 1 MHz,
    |alpha| = 2 pi x 10 kHz, T = 20 mK, drive detuned to the red mechanical
    sideband.
    """
    omega_m = TWO_PI * 2.0e6
    return SystemParams(
        omega_m=omega_m,
        gamma=omega_m / 2.0e7,
        kappa=TWO_PI * 1.0e6,
        kappa_r=TWO_PI * 1.0e6,
        alpha_mag=TWO_PI * 1.0e4,
        detuning=-omega_m,
        temperature=0.020,
    )


def desk_system(
    n_m: float,
    gamma_eff: float = 1.0,
    bath_fraction: float = 0.0,
    omega_m: float = 50.0,
    n_opt: float | None = None,
) -> SystemParams:
    """Dimensionless parameters that derive to a requested operating point.

    Returns a SystemParams whose derived quantities hit exactly the requested
    effective occupancy `n_m` and linewidth `gamma_eff` (default 1, i.e. all
    times in units of 1/gamma_eff).  `bath_fraction` = gamma / gamma_eff
    splits the damping between the thermal bath and the optical channel;
    with the default 0 the cooling is purely optical and n_opt = n_m.

    The inversion uses the exact identity n_opt = (kappa / 4 omega_m)^2 at
    detuning -omega_m to choose kappa, then sets |alpha| from the anti-Stokes
    rate.
    """
    if n_m <= 0:
        raise ParameterError("desk preset needs n_m > 0")
    if not 0 <= bath_fraction < 1:
        raise ParameterError("bath_fraction must be in [0, 1)")
    gamma = bath_fraction * gamma_eff
    gamma_opt = gamma_eff - gamma
    if bath_fraction == 0:
        n_opt_val = n_m
        n_th = 0.0
    else:
        n_opt_val = n_m / 2 if n_opt is None else n_opt
        if not 0 < n_opt_val * gamma_opt <= n_m * gamma_eff:
            raise ParameterError(
                "n_opt out of range: need 0 < gamma_opt*n_opt <= gamma_eff*n_m"
            )
        n_th = (n_m * gamma_eff - gamma_opt * n_opt_val) / gamma
        if not np.isfinite(n_th):
            raise ParameterError(
                "bath_fraction too small to carry the requested occupancy"
            )
    kappa = 4.0 * omega_m * math.sqrt(n_opt_val)
    a_minus = gamma_opt * (1.0 + n_opt_val)
    alpha = math.sqrt(a_minus * kappa) / 2.0
    return SystemParams(
        omega_m=omega_m,
        gamma=gamma,
        kappa=kappa,
        kappa_r=kappa,
        alpha_mag=alpha,
        detuning=-omega_m,
        n_th=n_th,
    )


def desk_pair(
    n_m: float,
    delta: float = 0.0,
    phi: float = 0.0,
    **kwargs,
) -> TwoCavityParams:
    """Two desk-scale cavities with mechanical frequency difference `delta`."""
    c1 = desk_system(n_m, **kwargs)
    c2 = replace(c1, omega_m=c1.omega_m + delta)
    with warnings.catch_warnings():
        # desk scale squeezes omega_m; the delta << omega_m warning is noise here
        warnings.simplefilter("ignore", ValidityWarning)
        pair = TwoCavityParams(cavity1=c1, cavity2=c2, phi=phi)
    return pair
