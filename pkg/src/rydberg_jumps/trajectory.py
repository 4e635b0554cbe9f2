"""Quantum-trajectory (Monte Carlo wave function) simulation.

Time is kept as an integer number of ticks of length ``dt / 2**K`` where
``K`` is the smallest integer with ``dt / 2**K <= dt_min``. Regular steps have
length ``dt``; after a jump, steps of length ``2**j`` ticks realign the clock
to the ``dt`` grid. Because the step lengths are powers of two, one set of
precomputed propagators ``exp(-i H_eff dt / 2**k)`` serves both stepping and
the bisection that locates the jump time. The final sub-tick jump time is
found by root-finding on a short Taylor propagation, so the squared norm at
the jump equals the drawn threshold to round-off.

The squared norm under ``H_eff`` is non-increasing, so a threshold crossing
inside a step is detected exactly whatever ``dt`` is; ``dt`` only controls how
much work each step costs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp

from .errors import ConfigError, EnsembleError, NumericalError, RydbergJumpsError
from .krylov import expm_krylov, krylov_projection
from .model import (
    R,
    BasisIndex,
    LatticeSpec,
    SystemParams,
    basis_state,
    build_effective_hamiltonian,
    decay_diagonal,
    jump_index_maps,
)

DENSE_MAX_DIM = 1024
DEFAULT_DT = 0.05
DEFAULT_DT_MIN = 1e-4
KRYLOV_TOL = 1e-10
NORM_FLOOR = 1e-200


@dataclass(frozen=True)
class RngSeedPlan:
    """Counter-based random streams.

    Trajectory ``k`` of master seed ``s`` draws from a Philox generator keyed
    by ``SeedSequence(s, spawn_key=(k,))``, so every trajectory has its own
    reproducible stream regardless of execution order.
    """

    master_seed: int

    def generator(self, trajectory_index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(trajectory_index),))
        return np.random.Generator(np.random.Philox(ss))


@dataclass
class TrajectoryRecord:
    """One stochastic run.

    ``populations[k, i]`` is the Rydberg population of atom ``i`` in the
    normalised state at ``sample_times[k]``; ``sample_norms`` holds the squared
    norm of the unnormalised no-jump state at the same instants.
    """

    params: SystemParams
    lattice: LatticeSpec
    seed: int
    trajectory_index: int
    duration: float
    initial: str
    settings: dict
    emission_times: np.ndarray
    emission_atoms: np.ndarray
    emission_kinds: np.ndarray
    emission_norms: np.ndarray
    emission_thresholds: np.ndarray
    sample_times: np.ndarray
    populations: np.ndarray
    sample_norms: np.ndarray = field(repr=False)

    @property
    def n_emissions(self) -> int:
        return int(self.emission_times.size)

    def identical_to(self, other: TrajectoryRecord) -> bool:
        arrays = (
            "emission_times emission_atoms emission_kinds emission_norms "
            "emission_thresholds sample_times populations sample_norms"
        ).split()
        same_meta = (
            self.params == other.params
            and self.lattice == other.lattice
            and (self.seed, self.trajectory_index, self.duration, self.initial, self.settings)
            == (other.seed, other.trajectory_index, other.duration, other.initial, other.settings)
        )
        return same_meta and all(
            np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays
        )


# ---------------------------------------------------------------------------
# single no-jump step


def evolve_no_jump(state, h_eff, dt: float, tol: float = KRYLOV_TOL) -> np.ndarray:
    """Advance an (unnormalised) state by ``dt`` under ``i d/dt psi = H_eff psi``.

    Dense matrix exponential for ``dim <= 1024``, Krylov otherwise.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    psi = np.asarray(state, dtype=np.complex128)
    if not np.any(psi):
        raise ValueError("state is zero")
    if psi.shape[0] <= DENSE_MAX_DIM:
        h = h_eff.toarray() if sp.issparse(h_eff) else np.asarray(h_eff)
        out = scipy.linalg.expm(-1j * dt * h) @ psi
    else:
        out = expm_krylov(h_eff, psi, dt, tol=tol)
    if np.vdot(out, out).real < NORM_FLOOR:
        raise NumericalError("norm underflow: state fully decayed")
    return out


# ---------------------------------------------------------------------------
# propagators


def _taylor(h, psi: np.ndarray, tau: float) -> np.ndarray:
    """``exp(-i tau h) psi`` by Taylor series; for sub-tick steps only."""
    out = psi.copy()
    term = psi
    scale = np.linalg.norm(psi)
    for k in range(1, 40):
        term = (-1j * tau / k) * (h @ term)
        out = out + term
        if np.linalg.norm(term) <= 1e-18 * scale:
            return out
    raise NumericalError("Taylor series did not converge; dt_min too large for ||H_eff||")


@nb.njit(cache=True)
def _advance_dense(us, psi, st, end_tick, dt_ticks, sample_ticks, n_levels, r, rmask, pops, norms):
    """Step until the squared norm would drop to ``r`` or the run ends.

    ``st`` holds ``[tick, next_sample_tick, n_samples_written]`` and is updated in
    place. Returns ``-1`` when the run is complete, otherwise the level of the
    step across which the norm falls to ``r`` (``psi`` is left before that step).
    """
    dim = psi.shape[0]
    n_atoms = rmask.shape[1]
    new = np.empty(dim, dtype=np.complex128)
    while True:
        tick = st[0]
        if tick == st[1]:
            k = st[2]
            nrm = 0.0
            for a in range(n_atoms):
                pops[k, a] = 0.0
            for i in range(dim):
                p = psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
                nrm += p
                for a in range(n_atoms):
                    pops[k, a] += p * rmask[i, a]
            for a in range(n_atoms):
                pops[k, a] /= nrm
            norms[k] = nrm
            st[1] += sample_ticks
            st[2] = k + 1
        if tick >= end_tick:
            return -1
        rem = tick % dt_ticks
        if rem == 0:
            level = 0
            step = dt_ticks
        else:
            step = rem & (-rem)
            level = n_levels - 1 - int(np.log2(step) + 0.5)
        u = us[level]
        if dim > 64:
            new = np.dot(u, psi)
        else:
            for i in range(dim):
                acc = 0j
                for j in range(dim):
                    acc += u[i, j] * psi[j]
                new[i] = acc
        nrm = 0.0
        for i in range(dim):
            nrm += new[i].real * new[i].real + new[i].imag * new[i].imag
        if nrm <= r:
            return level
        for i in range(dim):
            psi[i] = new[i]
        st[0] = tick + step


def _bisect_steps(stepper, psi, level, r):
    """Largest dyadic sub-step count (in ticks) after which the squared norm stays above ``r``."""
    n_levels = stepper.n_levels
    lo, offset = psi, 0
    for k in range(level + 1, n_levels):
        cand = stepper.step(lo, k)
        if np.vdot(cand, cand).real > r:
            lo = cand
            offset += 2 ** (n_levels - 1 - k)
    return lo, offset


class _DenseStepper:
    def __init__(self, h_eff: sp.csr_matrix, dt: float, n_levels: int):
        self.h = h_eff.toarray()
        self.n_levels = n_levels
        self.us = np.stack(
            [scipy.linalg.expm(-1j * (dt / 2**k) * self.h) for k in range(n_levels)]
        )

    def step(self, psi, level):
        return self.us[level] @ psi

    def advance(self, psi, st, end_tick, dt_ticks, sample_ticks, r, rmask, pops, norms):
        return _advance_dense(
            self.us, psi, st, end_tick, dt_ticks, sample_ticks, self.us.shape[0], r, rmask, pops, norms
        )

    def bisect(self, psi, level, r):
        return _bisect_steps(self, psi, level, r)


class _KrylovStepper:
    """Sparse Krylov propagation; steps need not be dyadic, so after a jump it
    steps straight back onto the ``dt`` grid."""

    def __init__(self, h_eff: sp.csr_matrix, dt: float, n_levels: int, tol: float = KRYLOV_TOL):
        self.h = h_eff
        self.dt = dt
        self.n_levels = n_levels
        self.tick = dt / 2 ** (n_levels - 1)
        self.tol = tol

    def step(self, psi, level):
        return expm_krylov(self.h, psi, self.dt / 2**level, tol=self.tol)

    def advance(self, psi, st, end_tick, dt_ticks, sample_ticks, r, rmask, pops, norms):
        """Like the dense kernel, but returns the length in ticks of the crossing step."""
        while True:
            tick = st[0]
            if tick == st[1]:
                p = psi.real**2 + psi.imag**2
                nrm = p.sum()
                pops[st[2]] = (p @ rmask) / nrm
                norms[st[2]] = nrm
                st[1] += sample_ticks
                st[2] += 1
            if tick >= end_tick:
                return -1
            n_ticks = int(dt_ticks - tick % dt_ticks)
            new = expm_krylov(self.h, psi, n_ticks * self.tick, tol=self.tol)
            if np.vdot(new, new).real <= r:
                return n_ticks
            psi[:] = new
            st[0] = tick + n_ticks

    def bisect(self, psi, n_ticks, r):
        # one Arnoldi basis serves every sub-step of the crossing step
        proj = krylov_projection(self.h, psi, n_ticks * self.tick, self.tol)
        if proj is None:
            lo, hi = 0, n_ticks
            while hi - lo > 1:
                mid = (lo + hi) // 2
                cand = expm_krylov(self.h, psi, mid * self.tick, tol=self.tol)
                lo, hi = (mid, hi) if np.vdot(cand, cand).real > r else (lo, mid)
            return (expm_krylov(self.h, psi, lo * self.tick, tol=self.tol) if lo else psi.copy()), lo
        lo, hi = 0, n_ticks
        while hi - lo > 1:
            mid = (lo + hi) // 2
            lo, hi = (mid, hi) if proj.norm2(mid * self.tick) > r else (lo, mid)
        return (proj(lo * self.tick) if lo else psi.copy()), lo


def _make_stepper(h_eff, dt, n_levels, method):
    dim = h_eff.shape[0]
    if method == "auto":
        method = "dense" if dim <= DENSE_MAX_DIM else "krylov"
    if method == "dense":
        return _DenseStepper(h_eff, dt, n_levels), method
    if method == "krylov":
        return _KrylovStepper(h_eff, dt, n_levels), method
    raise ConfigError(f"unknown integration method {method!r}")


# ---------------------------------------------------------------------------
# trajectories


def _grid(duration, dt, dt_min, sample_interval):
    if not (duration > 0 and dt > 0 and dt_min > 0 and sample_interval > 0):
        raise ConfigError("duration, dt, dt_min and sample_interval must be positive")
    if dt_min > dt:
        raise ConfigError("dt_min must not exceed dt")
    n_levels = max(0, math.ceil(math.log2(dt / dt_min) - 1e-12)) + 1
    dt_ticks = 2 ** (n_levels - 1)
    per_sample = sample_interval / dt
    n_samples = duration / sample_interval
    if abs(per_sample - round(per_sample)) > 1e-9 * per_sample or round(per_sample) < 1:
        raise ConfigError("sample_interval must be an integer multiple of dt")
    if abs(n_samples - round(n_samples)) > 1e-9 * n_samples or round(n_samples) < 1:
        raise ConfigError("duration must be an integer multiple of sample_interval")
    sample_ticks = dt_ticks * round(per_sample)
    end_tick = sample_ticks * round(n_samples)
    return n_levels, dt_ticks, sample_ticks, end_tick, dt / dt_ticks


def _draw_threshold(rng: np.random.Generator) -> float:
    r = rng.random()
    while r == 0.0:
        r = rng.random()
    return r


def run_trajectory(
    params: SystemParams,
    lattice: LatticeSpec,
    duration: float,
    initial=None,
    seeds: RngSeedPlan | int = 0,
    trajectory_index: int = 0,
    sample_interval: float = 1.0,
    dt: float = DEFAULT_DT,
    dt_min: float = DEFAULT_DT_MIN,
    method: str = "auto",
) -> TrajectoryRecord:
    """Simulate one quantum trajectory.

    Parameters
    ----------
    params, lattice
        System definition.
    duration : float
        Run length in ``1/gamma_e``; an integer multiple of ``sample_interval``.
    initial : None, str or ndarray
        ``None`` for all atoms in ``g``, a level label such as ``"gr"``, or a
        normalised amplitude vector.
    seeds : RngSeedPlan or int
        Master seed plan; an int is wrapped in :class:`RngSeedPlan`.
    trajectory_index : int
        Selects the random stream.
    sample_interval : float
        Spacing of population samples; an integer multiple of ``dt``.
    dt, dt_min : float
        Regular step and jump-time bisection resolution.
    method : {"auto", "dense", "krylov"}
        Propagation scheme; ``auto`` uses dense propagators up to dimension 1024.
    """
    if not isinstance(seeds, RngSeedPlan):
        seeds = RngSeedPlan(int(seeds))
    n_levels, dt_ticks, sample_ticks, end_tick, tick = _grid(duration, dt, dt_min, sample_interval)

    dim = lattice.dim
    if initial is None or isinstance(initial, str):
        label = "g" * lattice.n_atoms if initial is None else initial
        if len(label) != lattice.n_atoms:
            raise ConfigError(f"initial label {label!r} does not match n_atoms={lattice.n_atoms}")
        psi = basis_state(lattice.n_atoms, label)
    else:
        psi = np.array(initial, dtype=np.complex128)
        if psi.shape != (dim,):
            raise ConfigError(f"initial state must have length {dim}")
        if abs(np.vdot(psi, psi).real - 1.0) > 1e-10:
            raise ConfigError("initial state must be normalised")
        label = "vector"

    h_eff = build_effective_hamiltonian(params, lattice)
    stepper, method = _make_stepper(h_eff, dt, n_levels, method)
    taylor_h = h_eff
    channels = jump_index_maps(params, lattice)
    rmask = BasisIndex(lattice.n_atoms).projector_diag(R)
    decay = decay_diagonal(params, lattice)
    rng = seeds.generator(trajectory_index)

    n_samples = end_tick // sample_ticks + 1
    pops = np.zeros((n_samples, lattice.n_atoms))
    norms = np.zeros(n_samples)
    st = np.array([0, 0, 0], dtype=np.int64)
    ev_t, ev_atom, ev_kind, ev_norm, ev_r = [], [], [], [], []

    def norm2(v):
        return float(np.vdot(v, v).real)

    def jump(v):
        weights = np.array([rate * norm2(v[src]) for src, _, rate, _ in channels])
        total = weights.sum()
        if not total > 0:
            raise NumericalError("threshold crossed with zero emission rate")
        u = rng.random() * total
        m = min(int(np.searchsorted(np.cumsum(weights), u, side="right")), len(channels) - 1)
        src, dst, _, chan = channels[m]
        out = np.zeros_like(v)
        out[dst] = v[src]
        return out / np.sqrt(norm2(out)), chan

    def settle(v, t0, span, r):
        """Propagate ``v`` over ``span`` (< one tick) starting at ``t0``, jumping as needed."""
        while True:
            end = _taylor(taylor_h, v, span)
            if norm2(end) > r:
                return end, r
            f = lambda s: norm2(_taylor(taylor_h, v, s)) - r
            s = scipy.optimize.brentq(f, 0.0, span, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            pre = _taylor(taylor_h, v, s)
            v, chan = jump(pre)
            ev_t.append(t0 + s)
            ev_atom.append(chan.atom)
            ev_kind.append(chan.kind)
            ev_norm.append(norm2(pre))
            ev_r.append(r)
            r = _draw_threshold(rng)
            t0, span = t0 + s, span - s
            if span <= 0:
                return v, r

    r = _draw_threshold(rng)
    while True:
        level = stepper.advance(psi, st, end_tick, dt_ticks, sample_ticks, r, rmask, pops, norms)
        if level < 0:
            break
        # bisection over dyadic sub-steps: norm(lo) > r >= norm(lo + tick)
        lo, offset = stepper.bisect(psi, level, r)
        lo_tick = int(st[0]) + offset
        psi, r = settle(lo, lo_tick * tick, tick, r)
        nrm = norm2(psi)
        if nrm < NORM_FLOOR:
            raise NumericalError("norm underflow during propagation")
        st[0] = lo_tick + 1
        psi = np.ascontiguousarray(psi)

    settings = {
        "dt": float(dt),
        "dt_min": float(dt_min),
        "tick": float(tick),
        "sample_interval": float(sample_interval),
        "method": method,
    }
    return TrajectoryRecord(
        params=params,
        lattice=lattice,
        seed=int(seeds.master_seed),
        trajectory_index=int(trajectory_index),
        duration=float(duration),
        initial=label,
        settings=settings,
        emission_times=np.array(ev_t, dtype=np.float64),
        emission_atoms=np.array(ev_atom, dtype=np.int64),
        emission_kinds=np.array(ev_kind, dtype="<U1"),
        emission_norms=np.array(ev_norm, dtype=np.float64),
        emission_thresholds=np.array(ev_r, dtype=np.float64),
        sample_times=np.arange(n_samples) * float(sample_interval),
        populations=pops,
        sample_norms=norms,
    )


def _run_one(args):
    kwargs, index = args
    try:
        return index, run_trajectory(trajectory_index=index, **kwargs), None
    except (RydbergJumpsError, MemoryError, FloatingPointError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def run_ensemble(
    params: SystemParams,
    lattice: LatticeSpec,
    duration: float,
    n_traj: int,
    seeds: RngSeedPlan | int = 0,
    sample_interval: float = 1.0,
    n_jobs: int = 1,
    **kwargs,
) -> list[TrajectoryRecord]:
    """Run trajectories ``0 .. n_traj-1``; results do not depend on ``n_jobs``.

    Raises :class:`EnsembleError` carrying the completed records if any
    trajectory fails.
    """
    if n_traj < 1:
        raise ConfigError("n_traj must be at least 1")
    if not isinstance(seeds, RngSeedPlan):
        seeds = RngSeedPlan(int(seeds))
    common = dict(
        params=params, lattice=lattice, duration=duration, seeds=seeds,
        sample_interval=sample_interval, **kwargs,
    )
    jobs = [(common, k) for k in range(n_traj)]
    if n_jobs == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=max(1, n_traj // (4 * n_jobs))))
    failures = {k: msg for k, rec, msg in results if msg is not None}
    records = {k: rec for k, rec, msg in results if msg is None}
    if failures:
        raise EnsembleError(failures, records)
    return [records[k] for k in range(n_traj)]
