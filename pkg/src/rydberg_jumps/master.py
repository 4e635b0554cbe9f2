"""Lindblad master equation: exact reference for small chains.

Density matrices are dense ``(dim, dim)`` complex arrays. Superoperators act
on row-major flattened matrices, ``vec(A @ rho @ B) = kron(A, B.T) @ vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, DegenerateSteadyStateError, NumericalError, ResourceLimitError
from .model import (
    E,
    R,
    BasisIndex,
    LatticeSpec,
    SystemParams,
    build_effective_hamiltonian,
    build_hamiltonian,
    build_jump_operators,
)
from .rates import SurvivalCurve

MAX_EVOLVE_ATOMS = 5
MAX_STEADY_ATOMS = 4
_DENSE_PROPAGATOR_DIM = 27


def _dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op, dtype=np.complex128)


def _ops(jumps) -> list[np.ndarray]:
    return [_dense(j[0] if isinstance(j, tuple) else j) for j in jumps]


def lindblad_rhs(rho, h, jumps) -> np.ndarray:
    """``-i[H, rho] + sum_m (c rho c^dag - {c^dag c, rho}/2)``.

    ``jumps`` may hold bare operators or ``(operator, label)`` pairs.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    h = _dense(h)
    if rho.shape != h.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs H {h.shape}")
    out = -1j * (h @ rho - rho @ h)
    for c in _ops(jumps):
        if c.shape != h.shape:
            raise ValueError(f"dimension mismatch: jump operator {c.shape} vs H {h.shape}")
        cdc = c.conj().T @ c
        out += c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc)
    return out


def liouvillian(params: SystemParams, lattice: LatticeSpec) -> sp.csr_matrix:
    """Sparse Liouvillian acting on row-major ``vec(rho)``."""
    h = build_hamiltonian(params, lattice)
    dim = h.shape[0]
    eye = sp.identity(dim, dtype=np.complex128, format="csr")
    L = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for c, _ in build_jump_operators(params, lattice):
        cdc = (c.conj().T @ c).tocsr()
        L = L + sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)
    L = L.tocsr()
    L.sort_indices()
    return L


@dataclass
class MasterSeries:
    """Sampled master-equation solution.

    ``rydberg[k, i]`` and ``excited[k, i]`` are the populations of ``r`` and
    ``e`` on atom ``i``; ``trace``, ``min_eig`` and ``herm_err`` monitor the
    density-matrix invariants. ``states`` is kept only for small systems.
    """

    times: np.ndarray
    rydberg: np.ndarray
    excited: np.ndarray
    trace: np.ndarray
    min_eig: np.ndarray
    herm_err: np.ndarray
    states: np.ndarray | None

    @property
    def trace_drift(self) -> float:
        return float(np.max(np.abs(self.trace - 1.0)))


def density_matrix(state) -> np.ndarray:
    psi = np.asarray(state, dtype=np.complex128)
    return np.outer(psi, psi.conj())


def validate_density_matrix(rho, tol: float = 1e-10) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigError("density matrix must be square")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ConfigError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ConfigError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise ConfigError("density matrix has negative eigenvalues")


def evolve_master(
    rho0,
    params: SystemParams,
    lattice: LatticeSpec,
    duration: float,
    sample_interval: float = 1.0,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    store_states: bool | None = None,
) -> MasterSeries:
    """Integrate the master equation and sample on ``0, dt_s, ..., duration``.

    Up to dimension 27 the Liouvillian is exponentiated once per sample
    interval; larger systems use an adaptive DOP853 integration.
    """
    if lattice.n_atoms > MAX_EVOLVE_ATOMS:
        raise ResourceLimitError(f"master equation limited to N <= {MAX_EVOLVE_ATOMS}")
    if not (duration > 0 and sample_interval > 0):
        raise ConfigError("duration and sample_interval must be positive")
    n_steps = duration / sample_interval
    if abs(n_steps - round(n_steps)) > 1e-9 * n_steps:
        raise ConfigError("duration must be an integer multiple of sample_interval")
    n_steps = int(round(n_steps))
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.ndim == 1:
        rho0 = density_matrix(rho0)
    dim = lattice.dim
    if rho0.shape != (dim, dim):
        raise ConfigError(f"rho0 must be {dim}x{dim}")
    validate_density_matrix(rho0)
    times = np.arange(n_steps + 1) * float(sample_interval)
    if store_states is None:
        store_states = dim <= _DENSE_PROPAGATOR_DIM

    if dim <= _DENSE_PROPAGATOR_DIM:
        prop = scipy.linalg.expm(liouvillian(params, lattice).toarray() * sample_interval)
        vecs = np.empty((n_steps + 1, dim * dim), dtype=np.complex128)
        vecs[0] = rho0.ravel()
        for k in range(n_steps):
            vecs[k + 1] = prop @ vecs[k]
        rhos = vecs.reshape(-1, dim, dim)
    else:
        h = build_hamiltonian(params, lattice).toarray()
        cs = _ops(build_jump_operators(params, lattice))
        heff = h - 0.5j * sum(c.conj().T @ c for c in cs)
        heff_dag = heff.conj().T

        def rhs(_t, y):
            rho = y.reshape(dim, dim)
            out = -1j * (heff @ rho - rho @ heff_dag)
            for c in cs:
                out += c @ rho @ c.conj().T
            return out.ravel()

        sol = scipy.integrate.solve_ivp(
            rhs, (0.0, times[-1]), rho0.ravel(), method="DOP853", t_eval=times, rtol=rtol, atol=atol
        )
        if not sol.success:
            raise NumericalError(f"master equation integration failed: {sol.message}")
        rhos = sol.y.T.reshape(-1, dim, dim)

    basis = BasisIndex(lattice.n_atoms)
    diag = np.real(np.einsum("kii->ki", rhos))
    rydberg = diag @ basis.projector_diag(R)
    excited = diag @ basis.projector_diag(E)
    trace = diag.sum(axis=1)
    herm = np.max(np.abs(rhos - np.conj(np.transpose(rhos, (0, 2, 1)))), axis=(1, 2))
    min_eig = np.array([np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min() for r in rhos])
    return MasterSeries(
        times=times,
        rydberg=rydberg,
        excited=excited,
        trace=trace,
        min_eig=min_eig,
        herm_err=herm,
        states=rhos.copy() if store_states else None,
    )


def _null_dimension(L: sp.csr_matrix, tol: float) -> int:
    n = L.shape[0]
    if n <= 729:
        s = np.linalg.svd(L.toarray(), compute_uv=False)
        return int(np.sum(s <= tol * max(1.0, s[0])))
    vals = spla.eigs(L.tocsc(), k=3, sigma=0, which="LM", return_eigenvectors=False)
    return int(np.sum(np.abs(vals) <= tol))


def steady_state(params: SystemParams, lattice: LatticeSpec, tol: float = 1e-9) -> np.ndarray:
    """Unique stationary density matrix; raises if the null space is degenerate."""
    if lattice.n_atoms > MAX_STEADY_ATOMS:
        raise ResourceLimitError(f"steady state limited to N <= {MAX_STEADY_ATOMS}")
    L = liouvillian(params, lattice)
    dim = lattice.dim
    null_dim = _null_dimension(L, tol)
    if null_dim != 1:
        raise DegenerateSteadyStateError(null_dim)
    # replace one equation with the trace condition
    trace_row = sp.csr_matrix(
        (np.ones(dim), (np.zeros(dim, dtype=int), np.arange(dim) * (dim + 1))), shape=(1, dim * dim)
    )
    A = sp.vstack([trace_row, L[1:]]).tocsc()
    b = np.zeros(dim * dim, dtype=np.complex128)
    b[0] = 1.0
    x = spla.spsolve(A, b)
    rho = x.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = np.linalg.norm(L @ rho.ravel())
    if residual > 1e-10:
        raise NumericalError(f"steady-state residual {residual:.3e} exceeds 1e-10")
    return rho


def survival_probability(params: SystemParams, lattice: LatticeSpec, initial, t_grid) -> SurvivalCurve:
    """No-emission probability ``||exp(-i H_eff t) psi0||^2`` on ``t_grid``.

    Evaluated through the eigendecomposition of ``H_eff``; an ill-conditioned
    eigenbasis falls back to stepping with matrix exponentials.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size == 0 or not np.all(np.isfinite(t)) or np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ConfigError("t_grid must be a non-empty, non-decreasing array of non-negative times")
    psi0 = np.asarray(initial, dtype=np.complex128)
    if abs(np.vdot(psi0, psi0).real - 1.0) > 1e-12:
        raise ConfigError("initial state must be normalised")
    heff = build_effective_hamiltonian(params, lattice).toarray()
    lam, vecs = np.linalg.eig(heff)
    if np.linalg.cond(vecs) < 1e8:
        coeff = np.linalg.solve(vecs, psi0)
        amps = (coeff[None, :] * np.exp(-1j * np.outer(t, lam))) @ vecs.T
        values = np.sum(np.abs(amps) ** 2, axis=1)
    else:
        values = np.empty(t.size)
        psi, last = psi0, 0.0
        for k, tk in enumerate(t):
            if tk > last:
                psi = scipy.linalg.expm(-1j * (tk - last) * heff) @ psi
                last = tk
            values[k] = np.vdot(psi, psi).real
    values[t == 0] = 1.0
    return SurvivalCurve(t=t, values=values)


def stationary_projection(params: SystemParams, lattice: LatticeSpec, rho0, tol: float = 1e-9) -> np.ndarray:
    """Long-time limit of the state reached from ``rho0``.

    Projects ``rho0`` onto the null space of the Liouvillian with the
    biorthogonal left/right null vectors, so it also works when the
    stationary state is not unique.
    """
    if lattice.n_atoms > 3:
        raise ResourceLimitError("stationary projection limited to N <= 3")
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.ndim == 1:
        rho0 = density_matrix(rho0)
    validate_density_matrix(rho0)
    L = liouvillian(params, lattice).toarray()
    u, s, vh = np.linalg.svd(L)
    null = s <= tol * max(1.0, s[0])
    right = vh[null].conj().T
    left = u[:, null]
    overlap = left.conj().T @ right
    coeff = np.linalg.solve(overlap, left.conj().T @ rho0.ravel())
    rho = (right @ coeff).reshape(rho0.shape)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real
