"""Parameters, lattice geometry, product basis and operator construction.

Units: the strong-transition linewidth ``gamma_e`` sets the scale. All rates,
drive strengths, detunings and interactions are in units of ``gamma_e`` and
times in units of ``1/gamma_e``.

Basis convention: each atom carries a level ``g=0``, ``e=1`` or ``r=2``. A
basis state of ``N`` atoms is packed base-3 with atom 0 as the least
significant digit, so index ``sum(level[i] * 3**i)``. Text labels list atom 0
first, e.g. ``"gr"`` means atom 0 in ``g`` and atom 1 in ``r``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal, NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ResourceLimitError

G, E, R = 0, 1, 2
LEVEL_NAMES = "ger"
MAX_ATOMS = 12


@dataclass(frozen=True)
class SystemParams:
    """Drive, decay and interaction parameters (``gamma_e`` units).

    Defaults are the strong/weak drive values used for the blockade runs:
    ``omega_e=0.2``, ``omega_r=0.005``, ``delta_r=0``, ``v_nn=0.1``.
    """

    omega_e: float = 0.2
    omega_r: float = 0.005
    delta_e: float = 0.0
    delta_r: float = 0.0
    gamma_e: float = 1.0
    gamma_r: float = 0.0
    v_nn: float = 0.1

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not np.isfinite(value):
                raise ConfigError(f"{name} must be finite, got {value!r}")
        if self.omega_e < 0 or self.omega_r < 0:
            raise ConfigError("drive strengths must be non-negative")
        if self.gamma_e <= 0:
            raise ConfigError("gamma_e must be positive")
        if self.gamma_r < 0:
            raise ConfigError("gamma_r must be non-negative")

    def replace(self, **changes) -> SystemParams:
        return SystemParams(**{**asdict(self), **changes})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class LatticeSpec:
    """1D chain geometry.

    ``interaction_cutoff=None`` picks ``min(3, floor(N/2))`` on a ring and
    ``min(3, N-1)`` on an open chain.
    """

    n_atoms: int
    boundary: Literal["periodic", "open"] = "periodic"
    interaction_exponent: int = 6
    interaction_cutoff: int | None = None
    max_atoms: int = field(default=MAX_ATOMS, compare=False)

    def __post_init__(self):
        if int(self.n_atoms) != self.n_atoms or self.n_atoms < 1:
            raise ConfigError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        if self.n_atoms > self.max_atoms:
            raise ResourceLimitError(
                f"n_atoms={self.n_atoms} exceeds the cap of {self.max_atoms} (dim 3^N)"
            )
        if self.boundary not in ("periodic", "open"):
            raise ConfigError(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")
        if int(self.interaction_exponent) != self.interaction_exponent or self.interaction_exponent < 1:
            raise ConfigError("interaction_exponent must be a positive integer")
        if self.interaction_cutoff is not None:
            if int(self.interaction_cutoff) != self.interaction_cutoff or self.interaction_cutoff < 0:
                raise ConfigError("interaction_cutoff must be a non-negative integer")
            if self.boundary == "periodic" and self.interaction_cutoff > self.n_atoms // 2:
                raise ConfigError(
                    f"cutoff {self.interaction_cutoff} exceeds floor(N/2)={self.n_atoms // 2} "
                    "on a periodic chain"
                )

    @property
    def cutoff(self) -> int:
        if self.interaction_cutoff is not None:
            return self.interaction_cutoff
        if self.boundary == "periodic":
            return min(3, self.n_atoms // 2)
        return min(3, self.n_atoms - 1)

    @property
    def dim(self) -> int:
        return 3**self.n_atoms

    def distance(self, i: int, j: int) -> int:
        d = abs(i - j)
        if self.boundary == "periodic":
            d = min(d, self.n_atoms - d)
        return d

    def pairs(self) -> list[tuple[int, int, int]]:
        """Interacting pairs ``(i, j, d)`` with ``i < j`` and ``1 <= d <= cutoff``."""
        out = []
        for i in range(self.n_atoms):
            for j in range(i + 1, self.n_atoms):
                d = self.distance(i, j)
                if 1 <= d <= self.cutoff:
                    out.append((i, j, d))
        return out

    def neighbors(self, i: int) -> list[int]:
        """Nearest neighbours of site ``i`` (one or two sites)."""
        n = self.n_atoms
        if self.boundary == "periodic":
            if n == 1:
                return []
            if n == 2:
                return [1 - i]
            return [(i - 1) % n, (i + 1) % n]
        return [j for j in (i - 1, i + 1) if 0 <= j < n]

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("max_atoms")
        d["interaction_cutoff"] = self.cutoff
        return d


class BasisIndex:
    """Bijection between level tuples and integer indices of the 3^N basis."""

    def __init__(self, n_atoms: int):
        self.n_atoms = int(n_atoms)
        self.dim = 3**self.n_atoms
        self.powers = 3 ** np.arange(self.n_atoms, dtype=np.int64)
        idx = np.arange(self.dim, dtype=np.int64)
        # (dim, N) table of levels
        self.levels = (idx[:, None] // self.powers[None, :]) % 3

    def encode(self, levels) -> int:
        levels = np.asarray(levels, dtype=np.int64)
        if levels.shape != (self.n_atoms,) or np.any((levels < 0) | (levels > 2)):
            raise ValueError(f"expected {self.n_atoms} levels in {{0,1,2}}, got {levels!r}")
        return int(levels @ self.powers)

    def decode(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dim:
            raise IndexError(index)
        return tuple(int(v) for v in self.levels[index])

    def label(self, index: int) -> str:
        return "".join(LEVEL_NAMES[v] for v in self.levels[index])

    def index_of(self, label: str) -> int:
        try:
            return self.encode([LEVEL_NAMES.index(c) for c in label])
        except ValueError:
            raise ValueError(f"bad basis label {label!r}") from None

    def projector_diag(self, level: int) -> np.ndarray:
        """(dim, N) 0/1 matrix: entry [k, i] is 1 if atom i is in ``level`` in state k."""
        return (self.levels == level).astype(np.float64)


def basis_state(n_atoms: int, label: str | None = None) -> np.ndarray:
    """Normalised product state; ``None`` means all atoms in ``g``."""
    basis = BasisIndex(n_atoms)
    psi = np.zeros(basis.dim, dtype=np.complex128)
    psi[0 if label is None else basis.index_of(label)] = 1.0
    return psi


def _canonical(rows, cols, vals, dim) -> sp.csr_matrix:
    m = sp.coo_matrix(
        (np.asarray(vals, dtype=np.complex128), (np.asarray(rows), np.asarray(cols))),
        shape=(dim, dim),
    ).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def _hamiltonian_parts(params: SystemParams, lattice: LatticeSpec):
    basis = BasisIndex(lattice.n_atoms)
    lv = basis.levels
    diag = -params.delta_e * (lv == E).sum(axis=1) - params.delta_r * (lv == R).sum(axis=1)
    diag = diag.astype(np.float64)
    is_r = lv == R
    for i, j, d in lattice.pairs():
        diag += (params.v_nn / d**lattice.interaction_exponent) * (is_r[:, i] & is_r[:, j])

    idx = np.arange(basis.dim)
    rows, cols, vals = [idx], [idx], [diag.astype(np.complex128)]
    for i in range(lattice.n_atoms):
        ground = idx[lv[:, i] == G]
        for level, omega in ((E, params.omega_e), (R, params.omega_r)):
            if omega == 0:
                continue
            excited = ground + level * basis.powers[i]
            half = np.full(ground.size, omega / 2, dtype=np.complex128)
            rows += [ground, excited]
            cols += [excited, ground]
            vals += [half, half]
    return basis, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def build_hamiltonian(params: SystemParams, lattice: LatticeSpec) -> sp.csr_matrix:
    """Hermitian many-body Hamiltonian as a canonically ordered CSR matrix.

    Each atom is driven on ``g<->e`` with ``omega_e/2`` and ``g<->r`` with
    ``omega_r/2``, detuned by ``-delta_e`` on ``e`` and ``-delta_r`` on ``r``;
    pairs of Rydberg atoms at chain distance ``d <= cutoff`` gain
    ``v_nn / d**exponent``.
    """
    basis, rows, cols, vals = _hamiltonian_parts(params, lattice)
    return _canonical(rows, cols, vals, basis.dim)


def decay_diagonal(params: SystemParams, lattice: LatticeSpec) -> np.ndarray:
    """Diagonal of ``sum_m c_m^dag c_m``: total decay rate of each basis state."""
    lv = BasisIndex(lattice.n_atoms).levels
    return params.gamma_e * (lv == E).sum(axis=1) + params.gamma_r * (lv == R).sum(axis=1)


def build_effective_hamiltonian(params: SystemParams, lattice: LatticeSpec) -> sp.csr_matrix:
    """No-jump generator ``H - (i/2) sum_m c_m^dag c_m``."""
    basis, rows, cols, vals = _hamiltonian_parts(params, lattice)
    idx = np.arange(basis.dim)
    loss = -0.5j * decay_diagonal(params, lattice)
    return _canonical(
        np.concatenate([rows, idx]), np.concatenate([cols, idx]), np.concatenate([vals, loss]), basis.dim
    )


class JumpChannel(NamedTuple):
    atom: int
    kind: Literal["e", "r"]

    def __str__(self):
        return f"{self.kind}{self.atom}"


def build_jump_operators(
    params: SystemParams, lattice: LatticeSpec
) -> list[tuple[sp.csr_matrix, JumpChannel]]:
    """Collapse operators ``sqrt(gamma_e)|g><e|_i`` and, if ``gamma_r > 0``, ``sqrt(gamma_r)|g><r|_i``.

    Ordering is all ``e`` channels by atom, then all ``r`` channels by atom.
    """
    basis = BasisIndex(lattice.n_atoms)
    idx = np.arange(basis.dim)
    kinds = [(E, "e", params.gamma_e)]
    if params.gamma_r > 0:
        kinds.append((R, "r", params.gamma_r))
    ops = []
    for level, name, rate in kinds:
        for i in range(lattice.n_atoms):
            src = idx[basis.levels[:, i] == level]
            dst = src - level * basis.powers[i]
            op = _canonical(dst, src, np.full(src.size, np.sqrt(rate)), basis.dim)
            ops.append((op, JumpChannel(i, name)))
    return ops


def jump_index_maps(params: SystemParams, lattice: LatticeSpec):
    """Per-channel ``(source, target, rate)`` index arrays for fast jump application."""
    basis = BasisIndex(lattice.n_atoms)
    idx = np.arange(basis.dim)
    out = []
    for level, name, rate in [(E, "e", params.gamma_e), (R, "r", params.gamma_r)]:
        if rate == 0:
            continue
        for i in range(lattice.n_atoms):
            src = idx[basis.levels[:, i] == level]
            out.append((src, src - level * basis.powers[i], float(rate), JumpChannel(i, name)))
    return out
