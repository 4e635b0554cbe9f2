"""Closed-form jump rates, perturbative slow modes, and their numerical check.

Conventions
-----------
Rates are in units of ``gamma_e``. ``gamma_d_to_b`` / ``gamma_b_to_d`` are the
single-atom rates out of a dark / bright period. Two-atom tables store one
rate per exit channel, e.g. ``"DD->BD"`` and ``"DD->DB"`` separately; the total
rate out of ``DD`` is their sum, ``2 * (-Im lambda9)``. For one atom the total
rate out of the dark period is ``-2 Im lambda3``.

The perturbative eigenvalue formulas and the closed-form rate formulas are
written out independently so that agreement between them is a real check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ConfigError, NumericalError
from .model import BasisIndex, SystemParams


@dataclass(frozen=True)
class RateTable:
    """Labelled transition rates at one parameter point."""

    rates: dict[str, float]
    point: dict[str, float]

    def __getitem__(self, key: str) -> float:
        return self.rates[key]

    def total_out(self, source: str) -> float:
        """Sum of all tabulated rates leaving ``source``."""
        return sum(v for k, v in self.rates.items() if k.split("->")[0] == source)


@dataclass(frozen=True)
class SlowMode:
    """Least-damped eigenpair of ``H_eff`` and the initial-state overlap.

    ``u`` maps basis labels to eigenvector components, normalised so the
    dominant component equals 1. ``p = |c|^2`` is the probability that an
    interval enters the slow mode; when ``p_is_bound`` it is an upper bound.
    """

    lam: complex
    u: dict[str, complex]
    c: complex | None
    p: float
    p_is_bound: bool = False

    @property
    def decay_rate(self) -> float:
        """Decay rate of the squared norm, ``-2 Im lam``."""
        return -2.0 * self.lam.imag

    def dominant(self) -> tuple[str, float]:
        """Label and normalised weight ``|u_k|^2 / sum |u|^2`` of the largest component."""
        labels = list(self.u)
        w = np.abs(np.array([self.u[k] for k in labels])) ** 2
        i = int(np.argmax(w))
        return labels[i], float(w[i] / w.sum())


@dataclass
class SurvivalCurve:
    """No-emission probability ``P0(t)`` on a time grid, with an optional tail fit."""

    t: np.ndarray
    values: np.ndarray
    tail: tuple[float, float] | None = None

    def __call__(self, times) -> np.ndarray:
        return np.interp(times, self.t, self.values)


# ---------------------------------------------------------------------------
# single atom


def _check_omega_e(params: SystemParams):
    if params.omega_e <= 0:
        raise ConfigError("rate formulas need omega_e > 0")


def gamma_d_to_b(delta_r: float, params: SystemParams) -> float:
    """Rate of leaving a dark period at weak-transition detuning ``delta_r``."""
    _check_omega_e(params)
    g, oe, orr, d = params.gamma_e, params.omega_e, params.omega_r, delta_r
    return g * oe**2 * orr**2 / (16 * d**4 + 4 * d**2 * (g**2 - 2 * oe**2) + oe**4)


def gamma_b_to_d(delta_r: float, params: SystemParams) -> float:
    """Rate of leaving a bright period at weak-transition detuning ``delta_r``."""
    g, oe = params.gamma_e, params.omega_e
    return (g**2 + 4 * delta_r**2) / (g**2 + 2 * oe**2) * gamma_d_to_b(delta_r, params)


def gamma_short(params: SystemParams) -> float:
    """Photon emission rate during a bright period (driven two-level atom)."""
    g, oe = params.gamma_e, params.omega_e
    return g * oe**2 / (g**2 + 2 * oe**2)


def effective_detuning(delta_r: float, v_nn: float, n_dark_neighbors: int) -> float:
    """Weak-transition detuning seen by an atom with ``n_dark_neighbors`` dark neighbours."""
    if n_dark_neighbors not in (0, 1, 2):
        raise ConfigError("n_dark_neighbors must be 0, 1 or 2")
    return delta_r - v_nn * n_dark_neighbors


def multi_atom_local_rates(
    delta_r: float, v_nn: float, params: SystemParams, n_dark_neighbors: int
) -> tuple[float, float]:
    """``(bright->dark, dark->bright)`` rates of one atom in a chain."""
    d = effective_detuning(delta_r, v_nn, n_dark_neighbors)
    return gamma_b_to_d(d, params), gamma_d_to_b(d, params)


def pattern_rate_predictions(delta_r: float, v_nn: float, params: SystemParams) -> dict[str, float]:
    """Local rates for expansion, contraction and merging of dark regions."""
    return {
        "DBB->DDB": multi_atom_local_rates(delta_r, v_nn, params, 1)[0],
        "DDB->DBB": multi_atom_local_rates(delta_r, v_nn, params, 1)[1],
        "DBD->DDD": multi_atom_local_rates(delta_r, v_nn, params, 2)[0],
    }


# ---------------------------------------------------------------------------
# two atoms


def two_atom_rate_table(delta_r: float, v_nn: float, params: SystemParams) -> RateTable:
    """All eight bright/dark transition rates of two weakly driven atoms."""
    bd, db = gamma_b_to_d(delta_r, params), gamma_d_to_b(delta_r, params)
    shifted = delta_r - v_nn
    bd_v, db_v = gamma_b_to_d(shifted, params), gamma_d_to_b(shifted, params)
    rates = {
        "BB->BD": bd,
        "BB->DB": bd,
        "BD->BB": db,
        "DB->BB": db,
        "BD->DD": bd_v,
        "DB->DD": bd_v,
        "DD->BD": db_v,
        "DD->DB": db_v,
    }
    return RateTable(rates, {**params.as_dict(), "delta_r": delta_r, "v_nn": v_nn})


def gamma_dd_to_bb(omega: float, v_nn: float, gamma_e: float = 1.0) -> float:
    """Collective ``DD -> BB`` rate for ``omega_r = omega_e = omega`` and ``delta_r = 0``."""
    if v_nn == 0:
        raise ConfigError("collective rate needs v_nn != 0")
    return gamma_e * omega**4 / (2 * v_nn**2 * (gamma_e**2 + 4 * v_nn**2))


def gamma_bb_to_dd_bound(omega: float, v_nn: float, gamma_e: float = 1.0) -> float:
    """Upper bound on the collective ``BB -> DD`` rate.

    Only a bound: the state of the second atom after an emission by the first
    is not known, so the entry probability is bounded rather than computed.
    """
    if v_nn == 0:
        raise ConfigError("collective rate needs v_nn != 0")
    return omega**4 / (2 * gamma_e * v_nn**2)


# ---------------------------------------------------------------------------
# perturbative slow modes


def _jump_ratio(params: SystemParams) -> float:
    return params.omega_r * params.gamma_e / params.omega_e**2


def perturbative_slow_mode_1atom(params: SystemParams) -> SlowMode:
    """Single-atom slow eigenvalue (second order in ``omega_r``) and eigenvector (first order)."""
    _check_omega_e(params)
    if _jump_ratio(params) > 0.5:
        warnings.warn("omega_r is not small compared with omega_e**2/gamma_e; expansion unreliable")
    g, oe, orr, d = params.gamma_e, params.omega_e, params.omega_r, params.delta_r
    den = 4 * d**2 - oe**2 - 2j * g * d
    lam = -d + orr**2 * (-2 * d + 1j * g) / (8 * d**2 - 2 * oe**2 - 4j * g * d)
    c3 = orr * (-2 * d + 1j * g) / den
    u = {"g": c3, "e": oe * orr / den, "r": 1.0 + 0j}
    return SlowMode(lam=complex(lam), u=u, c=complex(c3), p=float(abs(c3) ** 2))


def perturbative_slow_mode_2atom(params: SystemParams, v_nn: float | None = None) -> SlowMode:
    """Two-atom ``DD`` slow mode for weak driving, with ``delta' = delta_r - V``.

    The initial condition is one atom just after emission and the other in
    its single-atom dark state; ``c`` is its overlap with the slow mode.
    """
    _check_omega_e(params)
    if _jump_ratio(params) > 0.5:
        warnings.warn("omega_r is not small compared with omega_e**2/gamma_e; expansion unreliable")
    v = params.v_nn if v_nn is None else v_nn
    g, oe, orr, dr = params.gamma_e, params.omega_e, params.omega_r, params.delta_r
    dp = dr - v
    den = 4 * dp**2 - oe**2 - 2j * g * dp
    lam = -2 * dr + v + orr**2 * (-2 * dp + 1j * g) / den
    a_g = orr * (-2 * dp + 1j * g) / den
    a_e = oe * orr / den
    u = {"gr": a_g, "er": a_e, "rg": a_g, "re": a_e, "rr": 1.0 + 0j}
    return SlowMode(lam=complex(lam), u=u, c=complex(a_g), p=float(abs(a_g) ** 2))


def two_atom_rates_from_slow_mode(params: SystemParams, v_nn: float | None = None) -> dict[str, float]:
    """``DD`` exit and entry rates derived from the perturbative slow mode."""
    mode = perturbative_slow_mode_2atom(params, v_nn)
    out = -mode.lam.imag
    return {"DD->BD": out, "DD->DB": out, "BD->DD": mode.p * gamma_short(params)}


def perturbative_lambda9_degenerate(omega: float, v_nn: float, gamma_e: float = 1.0) -> SlowMode:
    """Two-atom slow mode for ``omega_r = omega_e = omega``, ``delta_r = 0`` (fourth order).

    ``c`` assumes the largest possible ``|gr>`` amplitude of the unknown
    post-emission state, so ``p`` is the upper bound ``omega**2 / (4 V**2)``.
    """
    if v_nn == 0:
        raise ConfigError("degenerate slow mode needs v_nn != 0")
    v, w, g = v_nn, omega, gamma_e
    lam = v + w**2 / (2 * v) + w**4 * (2 * v - 1j * g) / (4 * v**2 * (g**2 + 4 * v**2))
    x = w / (2 * v)
    u = {"gr": x + 0j, "rg": x + 0j, "rr": 1.0 + 0j}
    return SlowMode(lam=complex(lam), u=u, c=complex(x), p=float(x**2), p_is_bound=True)


# ---------------------------------------------------------------------------
# numerical slow mode


def numeric_slow_mode(h_eff, initial, cond_limit: float = 1e8) -> SlowMode:
    """Exact least-damped eigenpair of ``h_eff`` and the overlap of ``initial``.

    The overlap uses the left eigenvector, ``c = <w|psi0> / <w|u>``, which is
    the expansion coefficient in the non-orthogonal right eigenbasis. Ties in
    the imaginary part are broken towards the larger real part.
    """
    h = h_eff.toarray() if sp.issparse(h_eff) else np.asarray(h_eff, dtype=np.complex128)
    dim = h.shape[0]
    if dim > 729:
        raise ConfigError("numeric_slow_mode is limited to dim <= 729")
    psi0 = np.asarray(initial, dtype=np.complex128)
    lam, left, right = scipy.linalg.eig(h, left=True, right=True)
    imag = np.round(lam.imag, 12)
    order = np.lexsort((-lam.real, -imag))
    k = int(order[0])
    ur, wl = right[:, k], left[:, k]
    overlap = np.vdot(wl, ur)
    kappa = np.linalg.norm(wl) * np.linalg.norm(ur) / abs(overlap)
    if not np.isfinite(kappa) or kappa > cond_limit:
        raise NumericalError(f"slow eigenvector is near-defective (condition {kappa:.3e})")
    scale = ur[np.argmax(np.abs(ur))]
    ur = ur / scale
    c = np.vdot(wl, psi0) / np.vdot(wl, ur)
    basis = BasisIndex(round(np.log(dim) / np.log(3)))
    if basis.dim != dim:
        labels = [str(i) for i in range(dim)]
    else:
        labels = [basis.label(i) for i in range(dim)]
    return SlowMode(lam=complex(lam[k]), u=dict(zip(labels, ur)), c=complex(c), p=float(abs(c) ** 2))


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class RegimeReport:
    """Dimensionless ratios that decide whether jumps are well defined."""

    jump_ratio: float
    collective_ratio: float | None
    single_atom_jumps: bool
    collective_jumps: bool
    rate_ratios: dict[str, float] = field(default_factory=dict)


def regime_diagnostics(params: SystemParams, v_nn: float | None = None, small: float = 0.2) -> RegimeReport:
    """Flag the weak-drive and collective jump regimes.

    Single-atom jumps need ``omega_r * gamma_e / omega_e**2 <= small`` and both
    switching rates far below the bright-period emission rate. Collective jumps
    need ``omega_r = omega_e``, ``delta_r = 0`` and ``omega / (2V) <= small``.
    """
    v = params.v_nn if v_nn is None else v_nn
    ratio = _jump_ratio(params) if params.omega_e > 0 else np.inf
    rate_ratios = {}
    single = False
    if params.omega_e > 0:
        gs = gamma_short(params)
        rate_ratios = {
            "B->D/short": gamma_b_to_d(params.delta_r, params) / gs,
            "D->B/short": gamma_d_to_b(params.delta_r, params) / gs,
        }
        single = ratio <= small and max(rate_ratios.values()) <= 0.05
    collective_ratio = None
    collective = False
    if v != 0:
        collective_ratio = params.omega_e / (2 * abs(v))
        collective = (
            np.isclose(params.omega_r, params.omega_e)
            and params.delta_r == 0
            and collective_ratio <= small
        )
    return RegimeReport(ratio, collective_ratio, bool(single), bool(collective), rate_ratios)
