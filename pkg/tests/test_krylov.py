import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from rydberg_jumps.krylov import expm_krylov, krylov_projection
from rydberg_jumps.model import LatticeSpec, build_effective_hamiltonian
from rydberg_jumps.presets import get_preset


@pytest.fixture
def heff():
    return build_effective_hamiltonian(get_preset("fig2b"), LatticeSpec(5))


def random_state(dim, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


@pytest.mark.parametrize("tau", [1e-4, 0.3, 1.0, 7.5])
def test_matches_dense_expm(heff, tau):
    v = random_state(heff.shape[0])
    ref = scipy.linalg.expm(-1j * tau * heff.toarray()) @ v
    np.testing.assert_allclose(expm_krylov(heff, v, tau), ref, atol=1e-9)


def test_forced_splitting(heff):
    v = random_state(heff.shape[0], 1)
    ref = scipy.linalg.expm(-1j * 20.0 * heff.toarray()) @ v
    np.testing.assert_allclose(expm_krylov(heff, v, 20.0, m_max=6), ref, atol=1e-8)


def test_projection_interior_times(heff):
    v = random_state(heff.shape[0], 2)
    proj = krylov_projection(heff, v, 1.0)
    for s in (0.0, 0.25, 0.9):
        ref = scipy.linalg.expm(-1j * s * heff.toarray()) @ v
        np.testing.assert_allclose(proj(s), ref, atol=1e-9)
        assert proj.norm2(s) == pytest.approx(np.vdot(ref, ref).real, abs=1e-9)


def test_edge_cases():
    a = sp.identity(4, dtype=complex, format="csr")
    v = np.ones(4, dtype=complex)
    np.testing.assert_array_equal(expm_krylov(a, v, 0.0), v)
    np.testing.assert_array_equal(expm_krylov(a, np.zeros(4, complex), 1.0), np.zeros(4))
    # invariant subspace: happy breakdown
    np.testing.assert_allclose(expm_krylov(a, v, 2.0), np.exp(-2j) * v, atol=1e-14)
    with pytest.raises(ValueError):
        expm_krylov(a, v, -1.0)
