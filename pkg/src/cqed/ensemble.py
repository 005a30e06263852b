"""Monte Carlo atomic-beam ensemble: the refined correlation model.

Each realization draws a Poissonian number of atoms uniformly in a box
around the cavity mode (radially Gaussian, longitudinal standing wave),
giving every atom a position-dependent coupling.  Realization-level
cavity-detuning jitter and a Zeeman replica class complete the model;
curves are plain means over realizations with standard errors attached.

Reproducibility: realization i draws from a counter-style Philox stream
keyed by (master seed, i), so averaged outputs are bit-identical for a
fixed seed no matter how many workers computed them.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    DetuningClass,
    ExpSum,
    g2_regression,
    reduce_to_classes,
    response_kernel_expsum,
)
from .errors import InvalidParamsError
from .model import TWO_PI, RateParams
from .trace import CorrelationTrace

COUPLING_CUTOFF = 0.01  # discard atoms below this fraction of g_max


@dataclass(frozen=True)
class ModeGeometry:
    """Gaussian standing-wave mode and the sampling box around it (um).

    A fully degenerate box (all extents zero) is allowed and places every
    atom at the mode maximum; useful for collapsing the ensemble onto the
    ideal maximally coupled model.
    """

    waist_um: float = 25.0
    wavelength_um: float = 0.78
    half_x_um: float = 50.0
    half_y_um: float = 50.0
    z_extent_um: float = 1.56

    def __post_init__(self):
        if self.waist_um <= 0 or self.wavelength_um <= 0:
            raise InvalidParamsError("waist and wavelength must be positive")
        degenerate = self.half_x_um == self.half_y_um == self.z_extent_um == 0.0
        adequate = (
            self.half_x_um >= 2.0 * self.waist_um
            and self.half_y_um >= 2.0 * self.waist_um
            and self.z_extent_um >= self.wavelength_um
        )
        if not (degenerate or adequate):
            raise InvalidParamsError(
                "sampling box must cover >= 2 waists transversally and one "
                "wavelength axially (or be fully degenerate)"
            )

    @property
    def is_point(self) -> bool:
        return self.half_x_um == self.half_y_um == self.z_extent_um == 0.0


@dataclass(frozen=True)
class BeamConfig:
    """Atomic-beam ensemble controls."""

    n_eff: float
    detuning_jitter_kappa: float = 2.5
    zeeman_offset: float = TWO_PI * 5.0  # rad/us
    zeeman_coupling: float = 1.0
    realizations: int = 200
    seed: int = 0
    contrast: float = 1.0
    fixed_atom_count: int | None = None

    def __post_init__(self):
        if not (self.n_eff == 0.0 or 0.05 <= self.n_eff <= 50.0):
            raise InvalidParamsError("target n_eff must be 0 or in [0.05, 50]")
        if self.realizations < 1:
            raise InvalidParamsError("need at least one realization")
        if not 0.0 <= self.zeeman_coupling <= 1.0:
            raise InvalidParamsError("zeeman coupling scale must be in [0, 1]")
        if not 0.0 < self.contrast <= 1.0:
            raise InvalidParamsError("contrast must be in (0, 1]")
        if self.detuning_jitter_kappa < 0:
            raise InvalidParamsError("detuning jitter must be >= 0")


@dataclass
class AtomRealization:
    """One sampled beam configuration."""

    positions: np.ndarray  # (n, 3) um
    couplings: np.ndarray  # (n,) rad/us
    detunings: np.ndarray  # (n,) rad/us, relative to the drive
    cavity_detuning: float = 0.0  # rad/us, realization-level jitter

    @property
    def n_eff(self) -> float:
        return float(np.sum((self.couplings / self.couplings.max()) ** 2)) if self.couplings.size else 0.0

    def n_eff_of(self, g_max: float) -> float:
        return float(np.sum((self.couplings / g_max) ** 2))


def mode_coupling(geom: ModeGeometry, g_max: float, xyz: np.ndarray) -> np.ndarray:
    """g(r, z) = g_max exp(-(x^2+y^2)/w0^2) |cos(2 pi z / lambda)|."""
    xyz = np.atleast_2d(xyz)
    radial = np.exp(-(xyz[:, 0] ** 2 + xyz[:, 1] ** 2) / geom.waist_um**2)
    axial = np.abs(np.cos(TWO_PI * xyz[:, 2] / geom.wavelength_um))
    return g_max * radial * axial


def _rng_for(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=[seed & (2**64 - 1), index & (2**64 - 1)])
    )


def _sample_positions(geom: ModeGeometry, n: int, rng) -> np.ndarray:
    if geom.is_point:
        return np.zeros((n, 3))
    lo = np.array([-geom.half_x_um, -geom.half_y_um, 0.0])
    hi = np.array([geom.half_x_um, geom.half_y_um, geom.z_extent_um])
    return rng.uniform(lo, hi, size=(n, 3))


def calibrate_density(
    geom: ModeGeometry,
    target_n_eff: float,
    n_pilot: int = 200_000,
    seed: int = 20_000_409,
) -> float:
    """Volumetric Poisson mean that yields the target effective atom number.

    Pilot-samples the coupling distribution to estimate the per-atom mean
    of (g/g_max)^2 (with the discard cutoff applied) and divides it out.
    """
    if target_n_eff < 0:
        raise InvalidParamsError("target n_eff must be >= 0")
    if n_pilot < 100_000:
        raise InvalidParamsError("pilot sample must use >= 1e5 points")
    if geom.is_point:
        return target_n_eff
    rng = _rng_for(seed, 0)
    xyz = _sample_positions(geom, n_pilot, rng)
    rel = mode_coupling(geom, 1.0, xyz)
    rel2 = np.where(rel >= COUPLING_CUTOFF, rel * rel, 0.0)
    estimate = float(np.mean(rel2))
    if estimate < 1e-6:
        raise InvalidParamsError(
            f"degenerate geometry: mean squared relative coupling {estimate:.2e}"
        )
    return target_n_eff / estimate


def sample_realization(
    geom: ModeGeometry,
    cfg: BeamConfig,
    params: RateParams,
    index: int,
    nbar_vol: float | None = None,
) -> AtomRealization:
    """Draw one beam realization (atom count, positions, couplings, jitter)."""
    rng = _rng_for(cfg.seed, index)
    if nbar_vol is None:
        nbar_vol = calibrate_density(geom, cfg.n_eff)
    n = cfg.fixed_atom_count if cfg.fixed_atom_count is not None else rng.poisson(nbar_vol)
    xyz = _sample_positions(geom, n, rng)
    g = mode_coupling(geom, params.g_max, xyz)
    keep = g >= COUPLING_CUTOFF * params.g_max
    xyz, g = xyz[keep], g[keep]
    jitter = cfg.detuning_jitter_kappa * params.kappa
    delta_c = rng.uniform(-jitter, jitter) if jitter > 0 else 0.0
    return AtomRealization(
        positions=xyz,
        couplings=g,
        detunings=np.full(g.shape, params.delta_a),
        cavity_detuning=delta_c,
    )


def realization_classes(
    realization: AtomRealization, cfg: BeamConfig
) -> list[DetuningClass]:
    """Detuning classes: the sampled atoms plus their Zeeman replica."""
    couplings = realization.couplings
    detunings = realization.detunings
    if cfg.zeeman_coupling > 0 and couplings.size:
        couplings = np.concatenate([couplings, cfg.zeeman_coupling * couplings])
        detunings = np.concatenate(
            [detunings, realization.detunings + cfg.zeeman_offset]
        )
    return reduce_to_classes(couplings, detunings)


def _realization_params(
    params: RateParams, realization: AtomRealization
) -> RateParams:
    if realization.cavity_detuning == 0.0:
        return params
    return replace(params, delta_c=params.delta_c + realization.cavity_detuning)


def _g2_curve(args) -> np.ndarray:
    geom, cfg, params, tau, index, nbar = args
    r = sample_realization(geom, cfg, params, index, nbar)
    trace = g2_regression(_realization_params(params, r), realization_classes(r, cfg), tau)
    return trace.g2


def _kernel_sum(args) -> ExpSum:
    geom, cfg, params, index, nbar = args
    r = sample_realization(geom, cfg, params, index, nbar)
    return response_kernel_expsum(
        _realization_params(params, r), realization_classes(r, cfg)
    )


def _map_ordered(func, jobs, workers: int):
    """Map preserving job order; parallel only when asked."""
    if workers <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def averaged_g2(
    geom: ModeGeometry,
    cfg: BeamConfig,
    params: RateParams,
    tau_grid,
    workers: int = 1,
) -> CorrelationTrace:
    """Ensemble mean of per-realization g2 with standard errors.

    The optional contrast beta rescales the result to 1 + beta*(g2 - 1).
    Deterministic for a fixed seed regardless of worker count: curves are
    accumulated in realization order.
    """
    params.require_weak_drive()
    tau = np.asarray(tau_grid, dtype=float)
    nbar = calibrate_density(geom, cfg.n_eff)
    jobs = [(geom, cfg, params, tau, i, nbar) for i in range(cfg.realizations)]
    curves = np.asarray(_map_ordered(_g2_curve, jobs, workers))
    mean = curves.mean(axis=0)
    if cfg.realizations > 1:
        sem = curves.std(axis=0, ddof=1) / math.sqrt(cfg.realizations)
    else:
        sem = np.zeros_like(mean)
    if cfg.contrast != 1.0:
        mean = 1.0 + cfg.contrast * (mean - 1.0)
        sem = cfg.contrast * sem
    return CorrelationTrace(
        tau_us=tau,
        g2=mean,
        stderr=sem,
        meta={
            "source": "ensemble",
            "n_eff": cfg.n_eff,
            "realizations": cfg.realizations,
            "seed": cfg.seed,
            "contrast": cfg.contrast,
        },
    )


def sample_kernels(
    geom: ModeGeometry,
    cfg: BeamConfig,
    params: RateParams,
    workers: int = 1,
) -> list[ExpSum]:
    """Undriven response kernels of every realization (exact exponential sums)."""
    nbar = calibrate_density(geom, cfg.n_eff)
    jobs = [(geom, cfg, params, i, nbar) for i in range(cfg.realizations)]
    return _map_ordered(_kernel_sum, jobs, workers)


def averaged_kernel(
    geom: ModeGeometry,
    cfg: BeamConfig,
    params: RateParams,
    t_grid,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """(E[G(t)], E[|G(t)|^2]) over the ensemble, on the same grid."""
    t = np.asarray(t_grid, dtype=float)
    kernels = sample_kernels(geom, cfg, params, workers)
    g_acc = np.zeros(t.shape, dtype=complex)
    p_acc = np.zeros(t.shape, dtype=float)
    for k in kernels:
        vals = k(t)
        g_acc += vals
        p_acc += np.abs(vals) ** 2
    n = len(kernels)
    return g_acc / n, p_acc / n
