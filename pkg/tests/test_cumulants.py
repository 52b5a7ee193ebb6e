import warnings

import numpy as np
import pytest

from conftest import random_psd_gamma
from superradiance.couplings import (CouplingMatrix, Reservoir, couplings_dicke, couplings_free_space,
                                     couplings_independent, couplings_waveguide)
from superradiance.cumulants import (CumulantState, CumulantSystem, MomentLayout, TruncationWarning,
                                     init_fully_excited, state_moment_vector)
from superradiance.exact import ExactLindblad
from superradiance.geometry import build_lattice, polarization
from superradiance.integrator import IntegratorConfig, integrate
from superradiance.observables import emission_rate
from superradiance.spin_algebra import PauliString, derive_plan


def random_couplings(rng, N):
    J = rng.standard_normal((N, N)) * 0.5
    J = (J + J.T) / 2
    np.fill_diagonal(J, 0)
    return CouplingMatrix(J, random_psd_gamma(rng, N), Reservoir.FREE_SPACE)


def random_vector(rng, layout, scale=0.3):
    v = scale * rng.standard_normal(layout.size)
    if layout.dtype.kind == "c":
        v = v + 1j * scale * rng.standard_normal(layout.size)
        for fam in ("z", "Z", "Y"):
            if fam in layout.slices:
                v[layout.slices[fam]] = v[layout.slices[fam]].real
    return v.astype(layout.dtype)


def test_init_examples():
    s = init_fully_excited(2, 2)
    z, C, Z, *_ = s.arrays()
    np.testing.assert_array_equal(z, [1, 1])
    assert C[0, 1] == 0 and Z[0, 1] == 1
    s3 = init_fully_excited(3, 3)
    assert s3.moment(PauliString.parse("z0 z1 z2")) == 1
    assert s3.moment(PauliString.parse("z0 +1 -2")) == 0
    for N in (1, 4, 7):
        cm = couplings_free_space(build_lattice("chain", N, 0.1), polarization("circular_plus"))
        assert emission_rate(init_fully_excited(N, 3), cm) == pytest.approx(N)


@pytest.mark.parametrize("order", [2, 3])
def test_independent_reservoir_rhs(order, rng):
    sys_ = CumulantSystem(couplings_independent(4), order)
    v = random_vector(rng, sys_.layout)
    dz, dC, *_ = sys_.layout.unpack(sys_.rhs(0, v))
    z, C, *_ = sys_.layout.unpack(v)
    np.testing.assert_allclose(dz, -(1 + z), atol=1e-14)
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_allclose(dC[off], -C[off], atol=1e-14)


@pytest.mark.parametrize("N", [3, 4, 5])
@pytest.mark.parametrize("order", [2, 3])
@pytest.mark.parametrize("ham", [False, True])
def test_kernel_matches_symbolic_plan(N, order, ham, rng):
    cm = random_couplings(rng, N)
    sys_ = CumulantSystem(cm, order, ham)
    plan = derive_plan(cm, order, ham)
    v = random_vector(rng, sys_.layout)
    state = CumulantState(sys_.layout, v)
    dstate = CumulantState(sys_.layout, sys_.rhs(0, v))
    want = plan.derivative(state_moment_vector(state, plan.keys))
    got = state_moment_vector(dstate, plan.keys)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_plan_kernel_trajectory_agree():
    cm = couplings_free_space(build_lattice("chain", 4, 0.15), polarization("linear_z"))
    sys_ = CumulantSystem(cm, 3)
    plan = derive_plan(cm, 3)
    s0 = sys_.initial_state()
    m0 = state_moment_vector(s0, plan.keys)
    cfg = IntegratorConfig(t_end=1.0, rel_tol=1e-10, abs_tol=1e-12)
    a = integrate(sys_.rhs, s0.vector, cfg).y_final
    b = integrate(lambda t, y: plan.derivative(y), m0, cfg).y_final
    np.testing.assert_allclose(state_moment_vector(CumulantState(sys_.layout, a), plan.keys), b, atol=1e-9)


def test_hermiticity_of_full_derivatives(rng):
    N = 5
    sys_ = CumulantSystem(random_couplings(rng, N), 3, True)
    z, C, Z, T, Y = sys_.layout.unpack(random_vector(rng, sys_.layout))
    dz, dC, dZ, dT, dY = sys_.derivatives(z, C, Z, T, Y)
    idx = np.arange(N)
    off = idx[:, None] != idx[None, :]
    assert np.max(np.abs((dC - dC.conj().T)[off])) < 1e-12
    assert np.max(np.abs((dZ - dZ.T)[off])) < 1e-12
    assert np.max(np.abs(np.imag(dZ[off]))) < 1e-12
    distinct = off[:, :, None] & off[:, None, :] & off[None, :, :]
    assert np.max(np.abs((dT - np.conj(dT.transpose(0, 2, 1)))[distinct])) < 1e-12
    for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0)]:
        assert np.max(np.abs((dY - dY.transpose(perm))[distinct])) < 1e-12


@pytest.mark.parametrize("order", [2, 3])
def test_permutation_equivariance(order, rng):
    N = 5
    cm = random_couplings(rng, N)
    perm = rng.permutation(N)
    a = CumulantSystem(cm, order, True)
    b = CumulantSystem(cm.permuted(perm), order, True)
    arrays = a.layout.unpack(random_vector(rng, a.layout))
    d_a = a.derivatives(*arrays) if order == 3 else a.layout.unpack(a.rhs(0, a.layout.pack(*arrays)))
    ix = np.ix_
    moved = [arrays[0][perm], arrays[1][ix(perm, perm)], arrays[2][ix(perm, perm)]]
    if order == 3:
        moved += [arrays[3][ix(perm, perm, perm)], arrays[4][ix(perm, perm, perm)]]
        d_b = b.derivatives(*moved)
    else:
        d_b = b.layout.unpack(b.rhs(0, b.layout.pack(*moved)))
    np.testing.assert_allclose(d_b[0], d_a[0][perm], atol=1e-12)
    off = ~np.eye(N, dtype=bool)
    np.testing.assert_allclose(d_b[1][off], d_a[1][ix(perm, perm)][off], atol=1e-12)


def test_independent_analytic_solution():
    sys_ = CumulantSystem(couplings_independent(3), 3)
    cfg = IntegratorConfig(t_end=5, rel_tol=1e-10, abs_tol=1e-12)
    tr = integrate(sys_.rhs, sys_.initial_vector(), cfg, t_eval=np.linspace(0, 5, 11))
    for t, y in zip(tr.t_eval, tr.y_eval):
        z = sys_.layout.unpack(y)[0]
        np.testing.assert_allclose(z, 2 * np.exp(-t) - 1, atol=1e-9)


def _rate_traces(cm, order, ham, ts):
    cfg = IntegratorConfig(t_end=float(ts[-1]), rel_tol=1e-10, abs_tol=1e-12)
    ex = ExactLindblad(cm, ham)
    cu = CumulantSystem(cm, order, ham)
    r_ex = integrate(ex.rhs, ex.initial_vector(), cfg, observe=ex.observe)(ts)[:, 0]
    r_cu = integrate(cu.rhs, cu.initial_vector(), cfg, observe=cu.observe)(ts)[:, 0]
    return r_ex, r_cu


@pytest.mark.parametrize("cm,ham", [(couplings_dicke(2), False),
                                    (couplings_dicke(3), False),
                                    (couplings_free_space(build_lattice("chain", 3, 0.1),
                                                          polarization("circular_plus")), True),
                                    (couplings_waveguide(3, 0.3 * np.pi), True)])
def test_order3_exact_without_closure(cm, ham):
    ts = np.linspace(0, 5, 51)
    r_ex, r_cu = _rate_traces(cm, 3, ham, ts)
    np.testing.assert_allclose(r_cu, r_ex, atol=1e-8)


@pytest.fixture(scope="module")
def chain4_traces():
    cm = couplings_free_space(build_lattice("chain", 4, 0.1), polarization("circular_plus"))
    ts = np.linspace(0, 3, 61)
    return ts, *_rate_traces(cm, 3, False, ts)


def test_chain4_order3_within_two_percent_pointwise(chain4_traces):
    # strict reading: |dR(t)| <= 2% of R(t) at every t <= 3
    ts, r_ex, r_cu = chain4_traces
    rel = np.abs(r_cu - r_ex) / r_ex
    assert np.max(rel) < 0.02, f"pointwise error {rel.max():.3f} at t={ts[np.argmax(rel)]:.2f}"


def test_chain4_order3_within_two_percent_of_scale(chain4_traces):
    ts, r_ex, r_cu = chain4_traces
    assert np.max(np.abs(r_cu - r_ex)) < 0.02 * np.max(r_ex)


def test_soft_violation_flags():
    sys_ = CumulantSystem(couplings_dicke(3), 2)
    v = sys_.initial_vector().copy()
    v[sys_.layout.slices["z"]][0] = 1.2
    assert sys_.soft_violation(v)[0] == "|z|"
    with pytest.warns(TruncationWarning):
        sys_.check(0.5, v)
    assert sys_.soft_violation(sys_.initial_vector()) is None


def test_layout_pack_roundtrip(rng):
    lay = MomentLayout(6, 3, complex)
    v = random_vector(rng, lay)
    np.testing.assert_array_equal(lay.pack(*lay.unpack(v)), v)
