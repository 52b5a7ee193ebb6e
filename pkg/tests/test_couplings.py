import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from superradiance.couplings import (CouplingError, CouplingMatrix, Reservoir, couplings_dicke,
                                     couplings_free_space, couplings_independent,
                                     couplings_waveguide, greens_free_space)
from superradiance.geometry import K0, build_lattice, custom_array, polarization


def test_greens_far_field_decay():
    g1 = np.abs(greens_free_space(np.array([0, 0, 50.0])))
    g2 = np.abs(greens_free_space(np.array([0, 0, 100.0])))
    ratio = g1[0, 0] / g2[0, 0]
    assert ratio == pytest.approx(2.0, rel=0.01)


def test_greens_axial_symmetry():
    G = greens_free_space(np.array([0, 0, 0.37]))
    assert G[0, 0] == pytest.approx(G[1, 1])
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-15


def test_greens_reciprocity():
    r = np.array([0.1, -0.2, 0.3])
    np.testing.assert_allclose(greens_free_space(r), greens_free_space(-r).T)


def _two_atom_symbolic(dist, longitudinal):
    """Independent sympy contraction of the dyadic Green's function for d parallel or
    perpendicular to the separation, in units of the single-atom rate."""
    x = sp.symbols("x", positive=True)
    pref = sp.exp(sp.I * x) / (4 * sp.pi * x**3)     # k0 = 1 units; rescaled below
    A = x**2 + sp.I * x - 1
    B = -x**2 - 3 * sp.I * x + 3
    proj = 1 if longitudinal else 0
    Gdd = pref * (A + B * proj)
    c = -3 * sp.pi * Gdd                               # J - i Gamma/2 in units of Gamma
    val = complex(sp.N(c.subs(x, K0 * dist)))
    return val.real, -2 * val.imag


@pytest.mark.parametrize("longitudinal", [True, False])
def test_two_atom_matches_symbolic(longitudinal):
    dist = 0.5
    pos = [[0, 0, 0], [0, 0, dist]]
    pol = polarization("linear_z" if longitudinal else "linear_x")
    cm = couplings_free_space(custom_array(pos), pol)
    J, G = _two_atom_symbolic(dist, longitudinal)
    assert cm.J[0, 1] == pytest.approx(J, abs=1e-12)
    assert cm.Gamma[0, 1] == pytest.approx(G, abs=1e-12)
    # classical closed forms for the dissipative part
    x = K0 * dist
    if longitudinal:
        ref = 3 * (np.sin(x) / x**3 - np.cos(x) / x**2)
    else:
        ref = 1.5 * (np.sin(x) / x + np.cos(x) / x**2 - np.sin(x) / x**3)
    assert cm.Gamma[0, 1] == pytest.approx(ref, abs=1e-12)


def test_close_pair_reaches_dicke_limit():
    for name in ("linear_z", "circular_plus"):
        cm = couplings_free_space(custom_array([[0, 0, 0], [1e-4, 0, 0]]), polarization(name))
        assert cm.Gamma[0, 1] == pytest.approx(1.0, abs=1e-6)


def test_far_pair_nearly_independent():
    cm = couplings_free_space(custom_array([[0, 0, 0], [10, 0, 0]]), polarization("circular_plus"))
    assert abs(cm.Gamma[0, 1]) < 0.05 and abs(cm.J[0, 1]) < 0.05


def test_chain_psd():
    cm = couplings_free_space(build_lattice("chain", 3, 0.1), polarization("circular_plus"))
    assert np.linalg.eigvalsh(cm.Gamma).min() >= -1e-10


@pytest.mark.parametrize("kind,n", [("chain", 12), ("square", 4), ("cubic", 3)])
@pytest.mark.parametrize("a", [0.05, 0.15, 0.3, 0.8])
@pytest.mark.parametrize("pol", ["linear_z", "circular_plus"])
def test_free_space_invariants(kind, n, a, pol):
    cm = couplings_free_space(build_lattice(kind, n, a), polarization(pol))
    assert np.array_equal(cm.Gamma, cm.Gamma.T)
    np.testing.assert_array_equal(np.diag(cm.Gamma), 1.0)
    np.testing.assert_array_equal(np.diag(cm.J), 0.0)
    assert np.max(np.abs(cm.Gamma)) <= 1 + 1e-12
    assert cm.check_psd() >= -1e-9


def test_waveguide_examples():
    cm = couplings_waveguide(3, np.pi / 2)
    assert cm.Gamma[0, 1] == pytest.approx(0, abs=1e-15) and cm.J[0, 1] == pytest.approx(0.5)
    assert cm.Gamma[0, 2] == pytest.approx(-1) and cm.J[0, 2] == pytest.approx(0, abs=1e-15)
    cm0 = couplings_waveguide(3, 0.0)
    np.testing.assert_allclose(cm0.Gamma, 1.0)
    np.testing.assert_allclose(cm0.J, 0.0)


@given(st.integers(2, 20), st.floats(0.01, 3.1))
def test_waveguide_unit_modulus(N, theta):
    cm = couplings_waveguide(N, theta)
    off = ~np.eye(N, dtype=bool)
    np.testing.assert_allclose(cm.Gamma[off] ** 2 + (2 * cm.J[off]) ** 2, 1.0, atol=1e-12)


def test_dicke_spectrum():
    np.testing.assert_allclose(np.linalg.eigvalsh(couplings_dicke(2).Gamma), [0, 2], atol=1e-12)
    ev = np.linalg.eigvalsh(couplings_dicke(4).Gamma)
    assert ev[-1] == pytest.approx(4) and np.allclose(ev[:-1], 0, atol=1e-12)
    assert couplings_dicke(1).Gamma.tolist() == [[1.0]]
    assert couplings_independent(3).reservoir is Reservoir.INDEPENDENT


@given(st.permutations(list(range(5))))
def test_free_space_permutation_covariance(perm):
    arr = custom_array(np.random.default_rng(0).uniform(0, 0.6, (5, 3)))
    cm = couplings_free_space(arr, polarization("circular_plus"))
    moved = couplings_free_space(custom_array(arr.positions[list(perm)]), polarization("circular_plus"))
    np.testing.assert_allclose(moved.Gamma, cm.permuted(perm).Gamma, atol=1e-13)
    np.testing.assert_allclose(moved.J, cm.permuted(perm).J, atol=1e-13)


def test_asymmetric_rejected():
    with pytest.raises(CouplingError):
        CouplingMatrix(np.zeros((2, 2)), np.array([[1, 0.5], [0.4, 1]]), Reservoir.FREE_SPACE)


def test_csv_dump(tmp_path):
    cm = couplings_waveguide(3, 0.4)
    cm.to_csv(tmp_path / "c.csv")
    text = (tmp_path / "c.csv").read_text()
    assert "waveguide" in text and text.count("\n") >= 6
