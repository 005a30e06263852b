"""System rates, derived cavity QED quantities, and the closed-form g2.

Unit convention
---------------
All rates and detunings are angular frequencies in rad/us; times are in
us.  Configuration and command-line I/O use ordinary frequencies nu =
omega/2pi in MHz and are converted exactly at the boundary (1 MHz of nu
corresponds to 2pi rad/us).  kappa is the amplitude decay rate of the
cavity field and gamma/2 the amplitude decay rate of the atomic dipole,
so photon number decays at 2*kappa.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidParamsError,
    SingularParamsError,
    UnsupportedRegimeError,
    WeakDriveError,
)
from .trace import CorrelationTrace

TWO_PI = 2.0 * math.pi

#: Drive guard for every perturbative correlation-function path.
WEAK_DRIVE_MAX_EPS_OVER_KAPPA = 0.2


def mhz_to_angular(nu_mhz: float) -> float:
    """Ordinary frequency in MHz -> angular frequency in rad/us."""
    return TWO_PI * nu_mhz


def angular_to_mhz(omega: float) -> float:
    """Angular frequency in rad/us -> ordinary frequency in MHz."""
    return omega / TWO_PI


@dataclass(frozen=True)
class RateParams:
    """All system rates in angular-frequency units (rad/us).

    g_max    : dipole coupling of a maximally coupled atom
    kappa    : cavity field amplitude decay rate
    gamma    : atomic energy decay rate (dipole amplitude decays at gamma/2)
    eps      : coherent drive amplitude
    delta_c  : cavity - drive detuning
    delta_a  : atom - drive detuning
    """

    g_max: float
    kappa: float
    gamma: float
    eps: float
    delta_c: float = 0.0
    delta_a: float = 0.0

    def __post_init__(self):
        if not (self.g_max > 0 and self.kappa > 0 and self.gamma > 0):
            raise InvalidParamsError(
                "g_max, kappa, gamma must all be positive, got "
                f"({self.g_max}, {self.kappa}, {self.gamma})"
            )
        if self.eps < 0:
            raise InvalidParamsError(f"drive amplitude must be >= 0, got {self.eps}")
        for name in ("g_max", "kappa", "gamma", "eps", "delta_c", "delta_a"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParamsError(f"{name} is not finite")

    @classmethod
    def from_mhz(
        cls,
        g_mhz: float,
        kappa_mhz: float,
        gamma_mhz: float,
        eps_over_kappa: float = 0.05,
        delta_c_mhz: float = 0.0,
        delta_a_mhz: float = 0.0,
    ) -> "RateParams":
        """Build from nu = omega/2pi values in MHz; drive given relative to kappa."""
        kappa = mhz_to_angular(kappa_mhz)
        return cls(
            g_max=mhz_to_angular(g_mhz),
            kappa=kappa,
            gamma=mhz_to_angular(gamma_mhz),
            eps=eps_over_kappa * kappa,
            delta_c=mhz_to_angular(delta_c_mhz),
            delta_a=mhz_to_angular(delta_a_mhz),
        )

    @property
    def eps_over_kappa(self) -> float:
        return self.eps / self.kappa

    def require_weak_drive(self):
        if self.eps_over_kappa > WEAK_DRIVE_MAX_EPS_OVER_KAPPA:
            raise WeakDriveError(
                f"eps/kappa = {self.eps_over_kappa:.3g} exceeds the weak-drive "
                f"guard {WEAK_DRIVE_MAX_EPS_OVER_KAPPA}; correlation functions "
                "assume a perturbative drive"
            )

    def is_resonant(self, tol: float = 0.0) -> bool:
        return abs(self.delta_c) <= tol and abs(self.delta_a) <= tol


@dataclass(frozen=True)
class DerivedParams:
    """Dimensionless quantities derived from the rates at a given atom number.

    omega_vr is sqrt(((kappa - gamma/2)/2)^2 - g^2 N) stored as a complex
    number: purely real in the overdamped regime, purely imaginary in the
    oscillatory one.
    """

    c1: float
    c: float
    c1_prime: float
    n_sat: float
    delta_alpha_ratio: float
    omega_vr: complex
    n_atoms: float
    resonant: bool = field(default=True)


def derive(params: RateParams, n_atoms: float) -> DerivedParams:
    """Cooperativities, saturation photon number, dip ratio, and vacuum Rabi
    frequency for n_atoms maximally coupled atoms."""
    if n_atoms < 0:
        raise InvalidParamsError(f"n_atoms must be >= 0, got {n_atoms}")
    g, kappa, gamma = params.g_max, params.kappa, params.gamma
    c1 = g * g / (kappa * gamma)
    c = n_atoms * c1
    c1_prime = c1 / (1.0 + gamma / (2.0 * kappa))
    denom = 1.0 + 2.0 * c - 2.0 * c1_prime
    if abs(denom) < 1e-12:
        raise SingularParamsError(
            "1 + 2C - 2C1' vanishes for these parameters; the dip ratio is singular"
        )
    delta_alpha_ratio = -2.0 * c1_prime * (2.0 * c / denom)
    omega_vr = cmath.sqrt(complex(((kappa - gamma / 2.0) / 2.0) ** 2 - g * g * n_atoms))
    n_sat = gamma * gamma / (3.0 * g * g)
    return DerivedParams(
        c1=c1,
        c=c,
        c1_prime=c1_prime,
        n_sat=n_sat,
        delta_alpha_ratio=delta_alpha_ratio,
        omega_vr=omega_vr,
        n_atoms=n_atoms,
        resonant=params.is_resonant(),
    )


def purcell_rates(params: RateParams, n_atoms: float) -> tuple[float, float]:
    """Adiabatic-elimination enhanced decay rates (gamma*(1+2C), kappa*(1+2C))."""
    c = n_atoms * params.g_max**2 / (params.kappa * params.gamma)
    return params.gamma * (1.0 + 2.0 * c), params.kappa * (1.0 + 2.0 * c)


def oscillation_threshold(params: RateParams) -> float:
    """Atom number at which the vacuum Rabi frequency squared changes sign."""
    return ((params.kappa - params.gamma / 2.0) / 2.0) ** 2 / params.g_max**2


def sinhc(z: complex | np.ndarray) -> complex | np.ndarray:
    """sinh(z)/z, with a series near 0 to avoid cancellation.

    Series cutoff |z| < 1e-4 keeps the truncation error below 1e-25.
    """
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    out = np.empty_like(z)
    zs = z[small]
    out[small] = 1.0 + zs * zs / 6.0 + zs**4 / 120.0
    zb = z[~small]
    out[~small] = np.sinh(zb) / zb
    if out.ndim == 0:
        return complex(out)
    return out


def conditioned_relaxation(
    tau: np.ndarray, kappa: float, gamma: float, omega_vr: complex
) -> np.ndarray:
    """Normalized field relaxation after a photon detection, single
    resonant collective mode.

    h(tau) = exp(-(kappa+gamma/2) tau/2) [cosh(Omega tau)
             + (kappa+gamma/2)/2 * sinh(Omega tau)/Omega],
    evaluated through complex exponentials so it is analytic across the
    overdamped/oscillatory boundary.  h(0) = 1 and h -> 0.
    """
    tau = np.asarray(tau, dtype=float)
    beta = (kappa + gamma / 2.0) / 2.0
    z = omega_vr * tau
    bracket = np.cosh(z) + beta * tau * sinhc(z)
    vals = np.exp(-beta * tau) * bracket
    if np.max(np.abs(vals.imag), initial=0.0) > 1e-9:
        raise FloatingPointError("relaxation factor acquired an imaginary part")
    return vals.real


def decay_kernel_closed_form(
    t: np.ndarray, kappa: float, gamma: float, omega_vr: complex
) -> np.ndarray:
    """Cavity amplitude survival G(t) for one resonant collective mode.

    Initial condition: one photon, atoms in the ground state.  Then
    G(t) = exp(-(kappa+gamma/2) t/2) [cosh(Omega t)
           - (kappa-gamma/2)/2 * sinh(Omega t)/Omega].
    Note the bracket coefficient differs from `conditioned_relaxation`:
    a detection leaves the atomic polarization displaced, a bare photon
    does not.
    """
    t = np.asarray(t, dtype=float)
    beta = (kappa + gamma / 2.0) / 2.0
    d = (kappa - gamma / 2.0) / 2.0
    z = omega_vr * t
    vals = np.exp(-beta * t) * (np.cosh(z) - d * t * sinhc(z))
    return vals.real


def g2_closed_form(
    params: RateParams, n_atoms: float, tau_grid: np.ndarray
) -> CorrelationTrace:
    """Closed-form g2(tau) for n_atoms maximally coupled atoms on resonance.

    g2(tau) = {1 + (delta_alpha/alpha) h(tau)}^2 with h the conditioned
    relaxation factor; g2(0) = (1 + delta_alpha/alpha)^2.  Only valid on
    resonance; detuned parameters must go through the dynamics module.
    """
    if not params.is_resonant():
        raise UnsupportedRegimeError(
            "closed-form g2 holds only on resonance; use dynamics.g2_regression "
            "for detuned parameters"
        )
    tau = np.asarray(tau_grid, dtype=float)
    if tau.size and (not np.all(np.isfinite(tau)) or np.any(tau < 0)):
        raise InvalidParamsError("tau grid must be finite and >= 0")
    d = derive(params, n_atoms)
    h = conditioned_relaxation(tau, params.kappa, params.gamma, d.omega_vr)
    g2 = (1.0 + d.delta_alpha_ratio * h) ** 2
    return CorrelationTrace(
        tau_us=tau,
        g2=g2,
        stderr=np.zeros_like(g2),
        meta={
            "source": "closed_form",
            "n_atoms": n_atoms,
            "g2_zero": (1.0 + d.delta_alpha_ratio) ** 2,
            "omega_vr_mhz": abs(d.omega_vr) / TWO_PI,
        },
    )
