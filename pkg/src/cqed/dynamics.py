"""Weak-drive amplitude dynamics with arbitrary detunings and many atoms.

A collection of atoms sharing one detuning couples to the cavity only
through its "bright" collective mode, so the one-excitation dynamics of
N atoms reduces exactly to one amplitude per detuning class with
collective coupling G_k = sqrt(sum g_i^2).  The two-excitation sector
additionally needs the pair statistics of each class, captured by

    q_k = 1 - (sum g_i^4) / (sum g_i^2)^2,

which is 0 for a single atom (no doubly excited state) and 1 - 1/n for n
identical atoms.  With this factor the collective second-order equations
reproduce the closed-form g2 for any effective atom number.

All linear systems here are small and dense; propagation uses either an
adaptive Runge-Kutta integrator or the eigendecomposition of the
(time-independent) coefficient matrix.  Both paths are cross-checked in
the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    IntegrationFailureError,
    InvalidParamsError,
    SingularParamsError,
    UndefinedCorrelationError,
)
from .model import RateParams
from .trace import CorrelationTrace


@dataclass(frozen=True)
class DetuningClass:
    """One collective atomic mode: coupling G, detuning, pair statistics q."""

    coupling: float
    detuning: float = 0.0
    pair_q: float = 0.0

    def __post_init__(self):
        if self.coupling < 0:
            raise InvalidParamsError("collective coupling must be >= 0")


@dataclass
class OneExcitationState:
    """Field amplitude and one polarization amplitude per detuning class."""

    a1: complex
    b: np.ndarray


@dataclass
class TwoExcitationState:
    """Second-order amplitudes: two photons, photon + excited class mode,
    and one amplitude per unordered class pair (the doubly excited modes)."""

    a20: complex
    a1b: np.ndarray
    b_pair: np.ndarray  # indexed by pair_index(k, l)


def pair_index(k: int, l: int, n_classes: int) -> int:
    """Index of the unordered pair (k, l) in the packed pair vector."""
    if k > l:
        k, l = l, k
    return k * n_classes - (k * (k - 1)) // 2 + (l - k)


def reduce_to_classes(couplings, detunings=None) -> list[DetuningClass]:
    """Group atoms by detuning into collective classes.

    Accepts either parallel arrays of per-atom couplings/detunings or an
    object exposing `.couplings` and `.detunings`.  An empty atom list
    yields a single empty class with G = 0.
    """
    if detunings is None and hasattr(couplings, "couplings"):
        detunings = couplings.detunings
        couplings = couplings.couplings
    g = np.asarray(couplings, dtype=float)
    if detunings is None:
        detunings = np.zeros_like(g)
    d = np.asarray(detunings, dtype=float)
    if g.shape != d.shape:
        raise InvalidParamsError("couplings and detunings differ in length")
    if np.any(g < 0):
        raise InvalidParamsError("atom couplings must be >= 0")
    if g.size == 0:
        return [DetuningClass(coupling=0.0, detuning=0.0, pair_q=0.0)]
    classes = []
    for delta in sorted(set(d.tolist())):
        gk = g[d == delta]
        g2 = float(np.sum(gk * gk))
        if g2 == 0.0:
            classes.append(DetuningClass(0.0, delta, 0.0))
            continue
        g4 = float(np.sum(gk**4))
        classes.append(
            DetuningClass(coupling=np.sqrt(g2), detuning=delta, pair_q=1.0 - g4 / g2**2)
        )
    return classes


def classes_for_atom_number(params: RateParams, n_atoms: float) -> list[DetuningClass]:
    """Single resonant class of n identical maximally coupled atoms.

    n may be fractional (effective atom number); pair_q = 1 - 1/n extends
    the identical-atom pair statistics analytically.
    """
    if n_atoms < 0:
        raise InvalidParamsError("n_atoms must be >= 0")
    if n_atoms == 0:
        return [DetuningClass(0.0, params.delta_a, 0.0)]
    return [
        DetuningClass(
            coupling=params.g_max * np.sqrt(n_atoms),
            detuning=params.delta_a,
            pair_q=1.0 - 1.0 / n_atoms,
        )
    ]


# ---------------------------------------------------------------------------
# one-excitation sector


def one_excitation_matrix(params: RateParams, classes) -> np.ndarray:
    """Coefficient matrix of d/dt [a1, b_1..b_K] for the homogeneous system."""
    K = len(classes)
    M = np.zeros((1 + K, 1 + K), dtype=complex)
    M[0, 0] = -(params.kappa + 1j * params.delta_c)
    for k, cl in enumerate(classes):
        M[0, 1 + k] = cl.coupling
        M[1 + k, 0] = -cl.coupling
        M[1 + k, 1 + k] = -(params.gamma / 2.0 + 1j * cl.detuning)
    return M


def drive_vector(params: RateParams, classes) -> np.ndarray:
    s = np.zeros(1 + len(classes), dtype=complex)
    s[0] = params.eps
    return s


def steady_one_excitation(params: RateParams, classes) -> OneExcitationState:
    """Driven steady state of the one-excitation amplitudes (linear solve)."""
    M = one_excitation_matrix(params, classes)
    s = drive_vector(params, classes)
    try:
        x = np.linalg.solve(M, -s)
    except np.linalg.LinAlgError as exc:
        raise SingularParamsError(f"one-excitation steady state singular: {exc}")
    return OneExcitationState(a1=complex(x[0]), b=x[1:].copy())


class ExpSum:
    """Sum of complex exponentials sum_j c_j exp(lambda_j t).

    The exact solution of any linear-time-invariant propagation here; it
    evaluates (and differentiates) analytically on arbitrary grids.
    """

    def __init__(self, coeffs, rates):
        self.coeffs = np.asarray(coeffs, dtype=complex)
        self.rates = np.asarray(rates, dtype=complex)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(np.multiply.outer(t, self.rates)) @ self.coeffs

    def derivative(self) -> "ExpSum":
        return ExpSum(self.coeffs * self.rates, self.rates)

    @property
    def slowest_rate(self) -> float:
        """Least-negative real part; sets the decay horizon."""
        return float(np.max(self.rates.real))


def _eig_propagator(M: np.ndarray):
    """Eigendecomposition M = V diag(lam) V^-1 with a conditioning check."""
    lam, V = np.linalg.eig(M)
    try:
        W = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise IntegrationFailureError(f"defective coefficient matrix: {exc}")
    resid = np.max(np.abs(V @ np.diag(lam) @ W - M))
    if not np.isfinite(resid) or resid > 1e-8 * max(1.0, np.max(np.abs(M))):
        raise IntegrationFailureError(
            "eigendecomposition ill-conditioned (nearly defective matrix); "
            "use the ODE path"
        )
    return lam, V, W


def amplitude_expsum(M: np.ndarray, x0: np.ndarray, component: int = 0) -> ExpSum:
    """Closed-form component of exp(M t) x0 as a sum of exponentials."""
    lam, V, W = _eig_propagator(M)
    return ExpSum(V[component, :] * (W @ x0), lam)


def response_kernel(params: RateParams, classes, t_grid) -> np.ndarray:
    """Cavity amplitude survival G(t): undriven evolution from one photon.

    Initial condition a1(0) = 1, b_k(0) = 0; G(0) = 1 and G decays to 0.
    Computed from the eigendecomposition of the one-excitation matrix
    (exact for this LTI system; cross-checked against the RK integrator).
    """
    return response_kernel_expsum(params, classes)(np.asarray(t_grid, dtype=float))


def response_kernel_expsum(params: RateParams, classes) -> ExpSum:
    M = one_excitation_matrix(params, classes)
    x0 = np.zeros(M.shape[0], dtype=complex)
    x0[0] = 1.0
    return amplitude_expsum(M, x0)


def integrate_driven(
    params: RateParams, classes, t_grid, rtol: float = 1e-10
) -> list[OneExcitationState]:
    """Integrate the driven one-excitation equations from vacuum.

    Adaptive Runge-Kutta (DOP853) on the complex linear system; t_grid
    must ascend from 0.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise InvalidParamsError("t_grid must ascend from 0")
    M = one_excitation_matrix(params, classes)
    s = drive_vector(params, classes)
    sol = solve_ivp(
        lambda _t, y: M @ y + s,
        (0.0, t[-1]),
        np.zeros(M.shape[0], dtype=complex),
        t_eval=t,
        method="DOP853",
        rtol=rtol,
        atol=rtol * max(1.0, params.eps / params.kappa),
    )
    if not sol.success:
        raise IntegrationFailureError(f"integration failed: {sol.message}", t=sol.t[-1] if sol.t.size else 0.0)
    if not np.all(np.isfinite(sol.y)):
        bad = np.where(~np.all(np.isfinite(sol.y), axis=0))[0]
        raise IntegrationFailureError(
            "non-finite amplitudes during integration", t=t[bad[0]]
        )
    return [OneExcitationState(a1=complex(sol.y[0, i]), b=sol.y[1:, i].copy()) for i in range(t.size)]


def propagate_driven_eigen(params: RateParams, classes, t_grid) -> np.ndarray:
    """Exact driven propagation from vacuum via eigendecomposition.

    Returns the (len(t), 1+K) amplitude array; alternative to
    `integrate_driven` for this LTI system.
    """
    t = np.asarray(t_grid, dtype=float)
    M = one_excitation_matrix(params, classes)
    s = drive_vector(params, classes)
    x_ss = np.linalg.solve(M, -s)
    lam, V, W = _eig_propagator(M)
    modes = W @ (-x_ss)
    return x_ss[None, :] + np.exp(np.multiply.outer(t, lam)) * modes[None, :] @ V.T


# ---------------------------------------------------------------------------
# two-excitation sector


def _two_excitation_system(params: RateParams, classes, one: OneExcitationState):
    """Steady second-order linear system A u = rhs.

    Unknowns u = [a2, x_0..x_{K-1}, z_pairs] where x_k is the coupling-
    weighted photon+polarization contraction (a1b_k = x_k / G_k) and
    z_{kl} the pair contraction for the doubly excited modes.
    """
    K = len(classes)
    P = K * (K + 1) // 2
    n = 1 + K + P
    lam_c = params.kappa + 1j * params.delta_c
    lam = np.array([params.gamma / 2.0 + 1j * cl.detuning for cl in classes])
    G = np.array([cl.coupling for cl in classes])
    q = np.array([cl.pair_q for cl in classes])

    A = np.zeros((n, n), dtype=complex)
    rhs = np.zeros(n, dtype=complex)
    iz = lambda k, l: 1 + K + pair_index(k, l, K)

    A[0, 0] = -2.0 * lam_c
    for k in range(K):
        A[0, 1 + k] = np.sqrt(2.0)
    rhs[0] = -np.sqrt(2.0) * params.eps * one.a1

    for k in range(K):
        r = 1 + k
        A[r, r] = -(lam_c + lam[k])
        A[r, 0] = -np.sqrt(2.0) * G[k] ** 2
        for l in range(K):
            A[r, iz(k, l)] += 1.0
        rhs[r] = -params.eps * G[k] * one.b[k]

    for k in range(K):
        for l in range(k, K):
            r = iz(k, l)
            A[r, r] = -(lam[k] + lam[l])
            if k == l:
                A[r, 1 + k] += -2.0 * G[k] ** 2 * q[k]
            else:
                A[r, 1 + l] += -(G[k] ** 2)
                A[r, 1 + k] += -(G[l] ** 2)
    return A, rhs


def steady_two_excitation(
    params: RateParams, classes
) -> tuple[OneExcitationState, TwoExcitationState]:
    """Steady-state amplitudes through second order in the drive."""
    params.require_weak_drive()
    one = steady_one_excitation(params, classes)
    A, rhs = _two_excitation_system(params, classes, one)
    try:
        u = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularParamsError(
            f"two-excitation steady state singular (degenerate classes?): {exc}"
        )
    resid = np.linalg.norm(A @ u - rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    if resid > 1e-12 * scale:
        raise SingularParamsError(
            f"two-excitation solve residual {resid:.2e} exceeds tolerance"
        )
    K = len(classes)
    G = np.array([cl.coupling for cl in classes])
    q = np.array([cl.pair_q for cl in classes])
    a1b = np.where(G > 0, u[1 : 1 + K] / np.where(G > 0, G, 1.0), 0.0)
    # normalized pair amplitudes where the doubly excited state exists
    b_pair = np.zeros(K * (K + 1) // 2, dtype=complex)
    for k in range(K):
        for l in range(k, K):
            z = u[1 + K + pair_index(k, l, K)]
            if k == l:
                norm = G[k] ** 2 * np.sqrt(2.0 * q[k]) if q[k] > 0 else 0.0
            else:
                norm = G[k] * G[l]
            b_pair[pair_index(k, l, K)] = z / norm if norm > 0 else 0.0
    return one, TwoExcitationState(a20=complex(u[0]), a1b=a1b, b_pair=b_pair)


def collapsed_initial_state(
    one: OneExcitationState, two: TwoExcitationState
) -> np.ndarray:
    """Amplitudes right after a photon detection from the steady state.

    The annihilation operator acts on the steady pure state and the
    result is renormalized by the one-photon amplitude: the field drops
    to sqrt(2) a20/a1, each class polarization to a1b_k/a1.
    """
    if abs(one.a1) < 1e-15:
        raise UndefinedCorrelationError("steady field amplitude vanishes")
    out = np.empty(1 + one.b.size, dtype=complex)
    out[0] = np.sqrt(2.0) * two.a20 / one.a1
    out[1:] = two.a1b / one.a1
    return out


def g2_regression(params: RateParams, classes, tau_grid) -> CorrelationTrace:
    """g2(tau) by quantum regression of the photon-collapsed state.

    The deviation of the collapsed amplitudes from the steady state
    relaxes under the homogeneous one-excitation dynamics;
    g2(tau) = |a1(tau)|^2 / |a1_ss|^2.
    """
    tau = np.asarray(tau_grid, dtype=float)
    one, two = steady_two_excitation(params, classes)
    x0 = collapsed_initial_state(one, two)
    x_ss = np.concatenate(([one.a1], one.b))
    M = one_excitation_matrix(params, classes)
    dev = amplitude_expsum(M, x0 - x_ss)
    a1_tau = one.a1 + dev(tau)
    g2 = np.abs(a1_tau) ** 2 / abs(one.a1) ** 2
    return CorrelationTrace(
        tau_us=tau,
        g2=g2,
        stderr=np.zeros_like(g2),
        meta={"source": "regression", "a1_ss": one.a1, "g2_zero": float(g2[0]) if g2.size else None},
    )


# ---------------------------------------------------------------------------
# transmission spectroscopy


@dataclass
class SpectrumResult:
    """Steady transmitted intensity versus drive detuning, with peaks."""

    detuning: np.ndarray
    intensity: np.ndarray
    peak_detunings: list[float] = field(default_factory=list)
    peak_heights: list[float] = field(default_factory=list)
    separation: float | None = None
    single_peak: bool = False


def transmission_spectrum(
    params: RateParams, classes, drive_detuning_grid
) -> SpectrumResult:
    """Scan the drive frequency across a mutually resonant atom-cavity system.

    Each grid point shifts the cavity and every atomic class by the same
    drive detuning.  Peaks are located on the grid and refined with a
    parabolic fit; with strong collective coupling the two peaks sit
    near +-G and their separation approaches 2 g sqrt(N).
    """
    grid = np.asarray(drive_detuning_grid, dtype=float)
    if grid.size < 5 or np.any(np.diff(grid) <= 0):
        raise InvalidParamsError("detuning grid must ascend and have >= 5 points")
    K = len(classes)
    G = np.array([cl.coupling for cl in classes])
    lam_cls = np.array([params.gamma / 2.0 + 1j * cl.detuning for cl in classes])
    intensity = np.empty_like(grid)
    for i, delta in enumerate(grid):
        denom = params.kappa + 1j * (params.delta_c + delta)
        denom = denom + np.sum(G**2 / (lam_cls + 1j * delta)) if K else denom
        intensity[i] = abs(params.eps / denom) ** 2

    peaks = []
    for i in range(1, grid.size - 1):
        if intensity[i] > intensity[i - 1] and intensity[i] >= intensity[i + 1]:
            # parabolic refinement through the three surrounding samples
            y0, y1, y2 = intensity[i - 1 : i + 2]
            denom2 = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / denom2 if denom2 != 0 else 0.0
            h = np.diff(grid[i - 1 : i + 2]).mean()
            peaks.append((grid[i] + shift * h, y1 - 0.25 * (y0 - y2) * shift))
    peaks.sort(key=lambda p: -p[1])
    result = SpectrumResult(detuning=grid, intensity=intensity)
    if len(peaks) >= 2:
        top = sorted(peaks[:2])
        result.peak_detunings = [p[0] for p in top]
        result.peak_heights = [p[1] for p in top]
        result.separation = abs(top[1][0] - top[0][0])
    else:
        result.single_peak = True
        if peaks:
            result.peak_detunings = [peaks[0][0]]
            result.peak_heights = [peaks[0][1]]
    return result
