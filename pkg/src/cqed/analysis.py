"""Quantum-speed extraction from antibunching traces.

The refilling of the field after a detection is summarized by fitting
f(tau) = c - a0 / (1 + (tau/w)^2) and quoting the slope proxy a0/w.
Sweeping the effective atom number maps that speed against the vacuum
Rabi frequency; a weighted straight-line fit gives the trend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares

from .ensemble import BeamConfig, ModeGeometry, averaged_g2
from .errors import FitConvergenceError, InvalidParamsError
from .model import TWO_PI, RateParams
from .trace import CorrelationTrace


def inverted_lorentzian(tau, c, a0, w):
    return c - a0 / (1.0 + (tau / w) ** 2)


@dataclass
class LorentzFit:
    """Inverted-Lorentzian parameters with covariance and the speed a0/w."""

    c: float
    a0: float
    w: float
    cov: np.ndarray
    residual_norm: float
    n_points: int
    window: tuple[float, float]
    bunched: bool = False
    weighted: bool = True

    @property
    def speed(self) -> float:
        return self.a0 / self.w

    @property
    def speed_err(self) -> float:
        """1-sigma error propagated from the fit covariance.

        Inflated by sqrt(chi2_red) when the model under-fits, so model
        error and ensemble scatter both enter."""
        j = np.array([1.0 / self.w, -self.a0 / self.w**2])
        var = j @ self.cov[1:, 1:] @ j
        err = math.sqrt(max(var, 0.0))
        if self.weighted:
            # under-fitting inflates the quoted error (model + scatter)
            dof = max(self.n_points - 3, 1)
            err *= max(1.0, math.sqrt(self.residual_norm**2 / dof))
        return err


def default_fit_window(trace: CorrelationTrace) -> tuple[float, float]:
    """[0, 1.5 * tau_rise], tau_rise = first recovery to c - 0.1 a0."""
    tau, g2 = trace.tau_us, trace.g2
    n_tail = max(1, tau.size // 10)
    c_est = float(np.mean(g2[-n_tail:]))
    a0_est = c_est - float(np.min(g2))
    if a0_est <= 0:
        return (0.0, float(tau[-1]))
    level = c_est - 0.1 * a0_est
    above = np.nonzero(g2 >= level)[0]
    rise = tau[above[0]] if above.size else tau[-1]
    return (0.0, float(min(1.5 * rise if rise > 0 else tau[-1], tau[-1])))


def fit_inverted_lorentzian(
    trace: CorrelationTrace, fit_window: tuple[float, float] | None = None
) -> LorentzFit:
    """Weighted least-squares fit of the antibunching dip.

    Weights are 1/stderr^2 where errors are present (and positive);
    initialization follows the trace shape: c from the last decile,
    a0 = c - min, w from the half-recovery delay.
    """
    window = fit_window if fit_window is not None else default_fit_window(trace)
    sel = (trace.tau_us >= window[0]) & (trace.tau_us <= window[1])
    tau = trace.tau_us[sel]
    y = trace.g2[sel]
    if tau.size < 10:
        raise InvalidParamsError(
            f"need >= 10 points in the fit window, got {tau.size}"
        )
    sigma = None
    if trace.stderr is not None and np.all(trace.stderr[sel] > 0):
        sigma = trace.stderr[sel]

    n_tail = max(1, y.size // 10)
    c0 = float(np.mean(y[-n_tail:]))
    a00 = max(c0 - float(np.min(y)), 1e-6)
    half = c0 - 0.5 * a00
    above = np.nonzero(y >= half)[0]
    w0 = float(tau[above[0]]) if above.size and tau[above[0]] > 0 else float(tau[-1]) / 4
    p0 = np.array([c0, a00, w0])

    def resid(p):
        r = inverted_lorentzian(tau, *p) - y
        return r / sigma if sigma is not None else r

    res = least_squares(resid, p0, method="lm", xtol=1e-12, ftol=1e-12, max_nfev=20000)
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitConvergenceError(
            f"Lorentzian fit did not converge: {res.message}", last_params=res.x
        )
    c, a0, w = res.x
    if w < 0:  # width enters squared; normalize the sign convention
        w = -w
    jtj = res.jac.T @ res.jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)
    if sigma is None:
        dof = max(tau.size - 3, 1)
        cov = cov * (2.0 * res.cost / dof)
    return LorentzFit(
        c=float(c),
        a0=float(a0),
        w=float(w),
        cov=cov,
        residual_norm=float(np.sqrt(2.0 * res.cost)),
        n_points=int(tau.size),
        window=window,
        bunched=bool(a0 <= 0),
        weighted=sigma is not None,
    )


def linear_fit(x, y, yerr) -> tuple[float, float, float, float, float]:
    """Weighted straight-line fit y = a + b x.

    Returns (slope, slope_err, intercept, intercept_err, chi2_red).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = np.asarray(yerr, dtype=float)
    if x.size < 3:
        raise InvalidParamsError("need >= 3 points for the regression")
    if np.any(e <= 0):
        raise InvalidParamsError("point errors must be positive")
    w = 1.0 / e**2
    s, sx, sy = w.sum(), (w * x).sum(), (w * y).sum()
    sxx, sxy = (w * x * x).sum(), (w * x * y).sum()
    delta = s * sxx - sx * sx
    if abs(delta) < 1e-12 * max(s * sxx, 1e-300):
        raise InvalidParamsError("degenerate abscissae: regression undefined")
    slope = (s * sxy - sx * sy) / delta
    intercept = (sxx * sy - sx * sxy) / delta
    chi2 = float(np.sum(w * (y - intercept - slope * x) ** 2))
    chi2_red = chi2 / max(x.size - 2, 1)
    return (
        float(slope),
        math.sqrt(s / delta),
        float(intercept),
        math.sqrt(sxx / delta),
        float(chi2_red),
    )


def n_eff_for_omega(params: RateParams, omega_vr_mhz: float) -> float:
    """Atom number whose (oscillatory-branch) vacuum Rabi frequency matches."""
    omega = TWO_PI * omega_vr_mhz
    d = (params.kappa - params.gamma / 2.0) / 2.0
    return (d * d + omega * omega) / params.g_max**2


@dataclass
class SweepPoint:
    omega_vr_mhz: float
    n_eff: float
    speed: float
    speed_err: float
    fit: LorentzFit


@dataclass
class SweepResult:
    """Speed-versus-coupling sweep with its weighted linear trend."""

    points: list[SweepPoint]
    slope: float
    slope_err: float
    intercept: float
    intercept_err: float
    chi2_red: float

    @property
    def significance(self) -> float:
        return self.slope / self.slope_err


def speed_sweep(
    targets_mhz,
    geom: ModeGeometry,
    beamcfg: BeamConfig,
    params: RateParams,
    tau_grid=None,
    workers: int = 1,
) -> SweepResult:
    """Refined-model speed a0/w at each target vacuum Rabi frequency.

    Each target maps to a mean effective atom number, runs the beam
    ensemble, fits the averaged dip, and the collected speeds enter a
    weighted straight-line fit against the target frequency.
    """
    targets = list(targets_mhz)
    if len(targets) < 3:
        raise InvalidParamsError("sweep needs >= 3 target frequencies")
    if tau_grid is None:
        tau_grid = np.linspace(0.0, 1.0, 401)
    points = []
    for i, target in enumerate(targets):
        n_eff = n_eff_for_omega(params, target)
        cfg = replace(beamcfg, n_eff=n_eff, seed=beamcfg.seed + 977 * i)
        trace = averaged_g2(geom, cfg, params, tau_grid, workers=workers)
        fit = fit_inverted_lorentzian(trace)
        points.append(
            SweepPoint(
                omega_vr_mhz=float(target),
                n_eff=n_eff,
                speed=fit.speed,
                speed_err=fit.speed_err,
                fit=fit,
            )
        )
    slope, slope_err, intercept, intercept_err, chi2_red = linear_fit(
        [p.omega_vr_mhz for p in points],
        [p.speed for p in points],
        [p.speed_err for p in points],
    )
    return SweepResult(
        points=points,
        slope=slope,
        slope_err=slope_err,
        intercept=intercept,
        intercept_err=intercept_err,
        chi2_red=chi2_red,
    )
