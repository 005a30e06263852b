"""Exact small-system reference: truncated master-equation evolution.

Keeps every state with at most two total excitations for up to four
individually tracked atoms and evolves the full density matrix, so every
fast path in the package can be validated against it.  Favors dense,
auditable linear algebra over speed.

Basis convention: states |n; S> with n photons and S the set of excited
atoms, n + |S| <= 2, ordered by (total excitation, photon number
descending, subset lexicographic).  The index map is exposed on
`TruncatedBasis.states`.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import IntegrationFailureError, InvalidParamsError, ScopeError
from .model import RateParams
from .trace import CorrelationTrace

MAX_ORACLE_ATOMS = 4


@dataclass
class TruncatedBasis:
    """Enumeration of the <=2 excitation states for n_atoms atoms."""

    n_atoms: int

    def __post_init__(self):
        if self.n_atoms < 0:
            raise InvalidParamsError("atom count must be >= 0")
        states = [(0, ())]
        states += [(1, ())] + [(0, (j,)) for j in range(self.n_atoms)]
        states += [(2, ())] + [(1, (j,)) for j in range(self.n_atoms)]
        states += [(0, pair) for pair in combinations(range(self.n_atoms), 2)]
        self.states = states
        self.index = {s: i for i, s in enumerate(states)}

    @property
    def dimension(self) -> int:
        return len(self.states)

    def annihilation(self) -> np.ndarray:
        """Photon annihilation operator a in the truncated basis."""
        d = self.dimension
        a = np.zeros((d, d))
        for i, (n, exc) in enumerate(self.states):
            if n > 0:
                a[self.index[(n - 1, exc)], i] = np.sqrt(n)
        return a

    def lowering(self, j: int) -> np.ndarray:
        """Lowering operator sigma_j for atom j."""
        d = self.dimension
        s = np.zeros((d, d))
        for i, (n, exc) in enumerate(self.states):
            if j in exc:
                rest = tuple(k for k in exc if k != j)
                s[self.index[(n, rest)], i] = 1.0
        return s


def _check_scope(params: RateParams, atoms):
    if len(atoms) > MAX_ORACLE_ATOMS:
        raise ScopeError(
            f"exact reference handles at most {MAX_ORACLE_ATOMS} atoms, got {len(atoms)}"
        )
    if params.eps / params.kappa > 0.2:
        raise ScopeError(
            "exact reference restricted to the weak-drive regime (eps/kappa <= 0.2)"
        )


def build_operators(params: RateParams, atoms):
    """Hamiltonian and collapse operators for a list of (g, delta) atoms."""
    _check_scope(params, atoms)
    basis = TruncatedBasis(len(atoms))
    a = basis.annihilation()
    sigmas = [basis.lowering(j) for j in range(len(atoms))]
    n_op = a.T @ a
    H = params.delta_c * n_op.astype(complex)
    H += 1j * params.eps * (a.T - a)
    for (g, delta), s in zip(atoms, sigmas):
        H += delta * (s.T @ s)
        H += 1j * g * (a.T @ s - a @ s.T)
    return basis, a, n_op, sigmas, H


def liouvillian_apply(params: RateParams, atoms, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the master equation for one density matrix."""
    basis, a, n_op, sigmas, H = build_operators(params, atoms)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (basis.dimension, basis.dimension):
        raise InvalidParamsError(
            f"rho must be {basis.dimension}x{basis.dimension} for {len(atoms)} atoms"
        )
    out = -1j * (H @ rho - rho @ H)
    out += params.kappa * (2.0 * a @ rho @ a.T - n_op @ rho - rho @ n_op)
    for s in sigmas:
        ss = s.T @ s
        out += (params.gamma / 2.0) * (2.0 * s @ rho @ s.T - ss @ rho - rho @ ss)
    return out


def liouvillian_matrix(params: RateParams, atoms) -> np.ndarray:
    """Dense superoperator acting on row-major vec(rho)."""
    basis, a, n_op, sigmas, H = build_operators(params, atoms)
    d = basis.dimension
    eye = np.eye(d)

    def left(op):
        return np.kron(op, eye)

    def right(op):
        return np.kron(eye, op.T)

    L = -1j * (left(H) - right(H))
    L += params.kappa * (2.0 * np.kron(a, a.conj()) - left(n_op) - right(n_op))
    for s in sigmas:
        ss = s.T @ s
        L += (params.gamma / 2.0) * (2.0 * np.kron(s, s.conj()) - left(ss) - right(ss))
    return L


def validate_density(rho: np.ndarray, where: str = ""):
    """Density-operator invariants: Hermitian, unit trace, positive."""
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > 1e-12:
        raise IntegrationFailureError(f"rho not Hermitian ({herm:.2e}) {where}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > 1e-10:
        raise IntegrationFailureError(f"trace(rho) = {tr} drifted {where}")
    eigs = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
    if eigs.min() < -1e-9:
        raise IntegrationFailureError(f"rho not positive ({eigs.min():.2e}) {where}")


def steady_state(params: RateParams, atoms) -> np.ndarray:
    """Steady density matrix from the Liouvillian null space."""
    L = liouvillian_matrix(params, atoms)
    d = int(np.sqrt(L.shape[0]))
    # replace one equation by the trace normalization
    A = L.copy()
    trace_row = np.zeros(d * d, dtype=complex)
    trace_row[:: d + 1] = 1.0
    A[0, :] = trace_row
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    try:
        x = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise IntegrationFailureError(f"steady-state solve failed: {exc}")
    resid = np.max(np.abs(L @ x))
    if resid > 1e-12:
        raise IntegrationFailureError(
            f"steady state residual |d rho/dt|_max = {resid:.2e} > 1e-12"
        )
    rho = x.reshape(d, d)
    rho = (rho + rho.conj().T) / 2.0
    validate_density(rho, "(steady state)")
    return rho


def _project_psd(rho: np.ndarray) -> np.ndarray:
    """Clip numerically negative eigenvalues (solver dust, <= 1e-9).

    The conditioned state divides by the steady photon number ~ eps^2,
    which would amplify that dust far beyond the positivity tolerance.
    """
    vals, vecs = np.linalg.eigh((rho + rho.conj().T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    rho = (vecs * vals) @ vecs.conj().T
    return rho / np.trace(rho).real


def g2_exact(params: RateParams, atoms, tau_grid) -> CorrelationTrace:
    """g2(tau) by quantum regression on the exact truncated evolution."""
    tau = np.asarray(tau_grid, dtype=float)
    basis, a, n_op, _, _ = build_operators(params, atoms)
    rho_ss = _project_psd(steady_state(params, atoms))
    n_ss = np.trace(n_op @ rho_ss).real
    if n_ss <= 1e-15:
        raise IntegrationFailureError("steady photon number vanishes; g2 undefined")
    rho_c = a @ rho_ss @ a.T
    rho_c /= np.trace(rho_c).real

    L = liouvillian_matrix(params, atoms)
    lam, V = np.linalg.eig(L)
    W = np.linalg.inv(V)
    modes = W @ rho_c.reshape(-1)
    measure = n_op.reshape(-1).conj()  # Tr[n rho] on row-major vec
    weights = (V.T @ measure) * modes
    g2 = (np.exp(np.multiply.outer(tau, lam)) @ weights).real / n_ss

    for i in (0, tau.size - 1) if tau.size else ():
        rho_t = (V @ (np.exp(lam * tau[i]) * modes)).reshape(basis.dimension, -1)
        validate_density((rho_t + rho_t.conj().T) / 2.0, f"(regression, tau={tau[i]})")
    return CorrelationTrace(
        tau_us=tau,
        g2=g2,
        stderr=np.zeros_like(g2),
        meta={"source": "oracle", "n_ss": n_ss, "n_atoms": len(atoms)},
    )


def nonmarkov_exact_kernel(params: RateParams, atoms, t_grid) -> np.ndarray:
    """Cavity amplitude survival from the one-excitation sector at eps = 0.

    Evolves |1; no excited atoms> under the non-Hermitian block of the
    master equation; used to validate the class-reduced response kernel.
    """
    _check_scope(params, atoms)
    t = np.asarray(t_grid, dtype=float)
    n = len(atoms)
    M = np.zeros((1 + n, 1 + n), dtype=complex)
    M[0, 0] = -(params.kappa + 1j * params.delta_c)
    for j, (g, delta) in enumerate(atoms):
        M[0, 1 + j] = g
        M[1 + j, 0] = -g
        M[1 + j, 1 + j] = -(params.gamma / 2.0 + 1j * delta)
    lam, V = np.linalg.eig(M)
    W = np.linalg.inv(V)
    x0 = np.zeros(1 + n, dtype=complex)
    x0[0] = 1.0
    coeffs = V[0, :] * (W @ x0)
    return np.exp(np.multiply.outer(t, lam)) @ coeffs
