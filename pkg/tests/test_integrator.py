import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from superradiance.integrator import IntegrationError, IntegratorConfig, StiffnessWarning, integrate


def test_exponential():
    cfg = IntegratorConfig(t_end=5, rel_tol=1e-9, abs_tol=1e-14)
    tr = integrate(lambda t, y: -y, np.array([1.0]), cfg)
    assert abs(tr.y_final[0] - math.exp(-5)) < 1e-8


def test_tolerance_convergence():
    errs = []
    for rtol in (1e-4, 1e-5, 1e-6, 1e-7):
        cfg = IntegratorConfig(t_end=5, rel_tol=rtol, abs_tol=rtol * 1e-3)
        errs.append(abs(integrate(lambda t, y: -y, np.array([1.0]), cfg).y_final[0] - math.exp(-5)))
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_harmonic_period():
    cfg = IntegratorConfig(t_end=2 * math.pi, rel_tol=1e-10, abs_tol=1e-12)
    tr = integrate(lambda t, y: np.array([y[1], -y[0]]), np.array([1.0, 0.0]), cfg)
    np.testing.assert_allclose(tr.y_final, [1.0, 0.0], atol=1e-7)


def test_against_scipy_on_nonlinear_system():
    def rhs(t, y):
        return np.array([y[1], (1 - y[0] ** 2) * y[1] - y[0]])
    ts = np.linspace(0, 8, 33)
    ours = integrate(rhs, np.array([2.0, 0.0]), IntegratorConfig(t_end=8, rel_tol=1e-10, abs_tol=1e-12),
                     t_eval=ts)
    ref = solve_ivp(rhs, (0, 8), [2.0, 0.0], t_eval=ts, rtol=1e-12, atol=1e-13, method="DOP853")
    np.testing.assert_allclose(ours.y_eval, ref.y.T, atol=1e-8)


def test_dense_output_consistent_at_steps():
    cfg = IntegratorConfig(t_end=3, rel_tol=1e-6)
    tr = integrate(lambda t, y: np.array([-2 * y[0] + np.sin(t)]), np.array([1.0]), cfg)
    np.testing.assert_array_equal(tr(tr.t), tr.values)
    mid = (tr.t[:-1] + tr.t[1:]) / 2
    exact = lambda t: (6 / 5) * np.exp(-2 * t) + (2 * np.sin(t) - np.cos(t)) / 5  # noqa: E731
    np.testing.assert_allclose(tr(mid)[:, 0], exact(mid), atol=1e-5)


def test_deterministic():
    cfg = IntegratorConfig(t_end=4)
    f = lambda t, y: np.array([y[1], -np.sin(y[0])])  # noqa: E731
    a = integrate(f, np.array([1.0, 0.0]), cfg)
    b = integrate(f, np.array([1.0, 0.0]), cfg)
    assert np.array_equal(a.t, b.t) and np.array_equal(a.y_final, b.y_final)


def test_nan_detection():
    with pytest.raises(IntegrationError, match="non-finite"):
        integrate(lambda t, y: np.array([np.nan]), np.array([1.0]), IntegratorConfig(t_end=1))


def test_blowup_reports_failure():
    cfg = IntegratorConfig(t_end=2)
    with pytest.raises(IntegrationError):
        integrate(lambda t, y: y**2, np.array([1.0]), cfg)   # blows up at t = 1
    tr = integrate(lambda t, y: y**2, np.array([1.0]), cfg, on_failure="return")
    assert tr.stopped_early and tr.info["failure"]
    assert 0.9 < tr.t_stop < 1.0 + 1e-6   # singularity at t = 1


def test_on_step_stops():
    tr = integrate(lambda t, y: -y, np.array([1.0]), IntegratorConfig(t_end=10),
                   on_step=lambda t, y: y[0] < 0.5)
    assert tr.stopped_early and tr.y_final[0] < 0.5 and tr.t_stop < 10


def test_stiffness_warning():
    cfg = IntegratorConfig(t_end=1.0, rel_tol=1e-3, stiff_rejects=3, first_step=1.0, max_steps=3000)
    with pytest.warns(StiffnessWarning):
        tr = integrate(lambda t, y: -1e6 * (y - np.cos(t)), np.array([0.0]), cfg, on_failure="return")
    assert "max_steps" in tr.info["failure"]


def test_config_validation():
    for bad in ({"rel_tol": 0}, {"abs_tol": -1}, {"t_end": 0}, {"dense_samples": 1}):
        with pytest.raises(ValueError):
            IntegratorConfig(**bad)


@given(st.floats(0.1, 3.0), st.floats(0.2, 4.0))
def test_linear_decay_property(k, T):
    cfg = IntegratorConfig(t_end=T, rel_tol=1e-9, abs_tol=1e-13)
    tr = integrate(lambda t, y: -k * y, np.array([2.0]), cfg)
    assert tr.y_final[0] == pytest.approx(2 * math.exp(-k * T), rel=1e-7)
