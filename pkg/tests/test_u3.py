import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esqpt import core, u3
from esqpt.u3 import U3Params

SQ2 = np.sqrt(2.0)
coords = st.lists(st.floats(-2, 2), min_size=6, max_size=6).map(np.array)


def point(**kw):
    names = ["Q0", "Q1", "Q2", "P0", "P1", "P2"]
    return np.array([kw.get(n, 0.0) for n in names])


def explicit_h(p, X):
    Q0, Q1, Q2, P0, P1, P2 = X
    return ((1 - p.xi) / 2 * (Q1**2 + P1**2 + Q2**2 + P2**2)
            - p.xi * ((P1 * Q0 - P0 * Q1) ** 2 + (P1 * Q2 - P2 * Q1) ** 2 + (P2 * Q0 - P0 * Q2) ** 2)
            - p.eps * (P2 * Q0 - P0 * Q2))


def test_params_validation():
    with pytest.raises(ValueError):
        U3Params(1.2)
    with pytest.raises(ValueError):
        U3Params(-0.1, 0.3)
    assert U3Params(0.0).eps == 0.0


@pytest.mark.parametrize("xi, eps", [(0.3, 0.0), (0.56, 0.3), (1.0, -0.5)])
def test_classical_h_examples(xi, eps):
    p = U3Params(xi, eps)
    assert u3.classical_h(p, np.zeros(6)) == 0.0
    assert u3.classical_h(p, point(Q1=SQ2)) == pytest.approx(1 - xi)
    assert u3.classical_h(p, point(Q0=1, P2=1)) == pytest.approx((1 - xi) / 2 - xi - eps)


@settings(max_examples=60, deadline=None)
@given(coords, st.floats(0, 1), st.floats(-1, 1))
def test_classical_h_matches_explicit_polynomial(X, xi, eps):
    p = U3Params(xi, eps)
    assert u3.classical_h(p, X) == pytest.approx(explicit_h(p, X), abs=1e-10)


def test_phi_n_examples():
    assert u3.phi_n(np.zeros(6)) == -1.0
    assert u3.phi_n(point(Q0=SQ2)) == pytest.approx(0.0, abs=1e-15)
    assert u3.phi_n(np.full(6, np.sqrt(1 / 3))) == pytest.approx(0.0, abs=1e-15)


def test_phi_l_examples():
    assert u3.phi_l(point(P1=1, Q2=1), 1.0, 1) == 0.0
    assert u3.phi_l(np.zeros(6), 0.0) == 0.0
    assert u3.phi_l(point(Q1=SQ2), 0.5, 1) == -0.5
    assert u3.phi_l(point(P1=1, Q2=1), 1.0, -1) == 2.0
    with pytest.raises(ValueError):
        u3.l_constraint(0.5, branch=2)


def test_simple_derivatives():
    X = np.random.default_rng(0).standard_normal(6)
    np.testing.assert_array_equal(u3.phi_n_gradient(X), X)
    np.testing.assert_array_equal(u3.phi_n_hessian(X), np.eye(6))
    np.testing.assert_array_equal(u3.classical_h_gradient(U3Params(0.5, 0.3), np.zeros(6)), 0.0)


@pytest.mark.parametrize("xi, eps", [(0.0, 0.0), (0.56, 0.3), (1.0, 1.0)])
def test_derivatives_match_finite_differences(xi, eps):
    p = U3Params(xi, eps)
    rng = np.random.default_rng(4)
    fields = [u3.hamiltonian_field(p), u3.PHI_N, u3.l_constraint(0.4)]
    for _ in range(100):
        X = rng.standard_normal(6)
        for f in fields:
            g = f.gradient(X)
            assert np.linalg.norm(g - core.finite_difference_gradient(f.value, X)) <= 1e-6 * max(1, np.linalg.norm(g))
            h = f.hessian(X)
            assert np.linalg.norm(h - core.finite_difference_hessian(f.gradient, X)) <= 1e-6 * max(1, np.linalg.norm(h))


@settings(max_examples=40, deadline=None)
@given(coords, st.floats(0, 2 * np.pi))
def test_phase_rotation_invariance(X, theta):
    p = U3Params(0.56, 0.3)
    Y = u3.phase_rotate(X, theta)
    assert u3.classical_h(p, Y) == pytest.approx(u3.classical_h(p, X), abs=1e-12)
    assert u3.phi_n(Y) == pytest.approx(u3.phi_n(X), abs=1e-12)
    assert u3.phi_l(Y, 0.3) == pytest.approx(u3.phi_l(X, 0.3), abs=1e-12)
    np.testing.assert_allclose(u3.invariants(Y), u3.invariants(X), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(coords, st.floats(0, 2 * np.pi))
def test_o2_invariance_at_zero_field(X, alpha):
    p = U3Params(0.6, 0.0)
    Y = u3.o2_rotate(X, alpha)
    assert u3.classical_h(p, Y) == pytest.approx(u3.classical_h(p, X), abs=1e-11)
    np.testing.assert_allclose(u3.o2_invariants(Y), u3.o2_invariants(X), atol=1e-11)
    np.testing.assert_allclose(u3.o2_invariants(u3.phase_rotate(X, alpha)), u3.o2_invariants(X), atol=1e-11)


def test_field_breaks_o2_but_not_mirror():
    X = np.random.default_rng(9).standard_normal(6)
    p = U3Params(0.5, 0.3)
    assert abs(u3.classical_h(p, u3.o2_rotate(X, 0.7)) - u3.classical_h(p, X)) > 1e-6
    mirror = X * np.array([1, -1, 1, 1, -1, 1])
    assert u3.classical_h(p, mirror) == pytest.approx(u3.classical_h(p, X), abs=1e-12)
    assert u3.angular_momentum(mirror) == pytest.approx(-u3.angular_momentum(X))


def test_orbit_signature_examples():
    sig = u3.orbit_signature(point(Q0=SQ2), 0.0)
    np.testing.assert_allclose(sig, [0, 1, 0, 0, 0], atol=1e-15)
    X = point(Q1=SQ2)
    sig = u3.orbit_signature(X, u3.classical_h(U3Params(0.5), X))
    np.testing.assert_allclose(sig, [0.5, 0, 1, 0, 0], atol=1e-15)


def test_system_shapes_and_flags():
    s1 = u3.u3_system(U3Params(0.5, 0.3))
    assert (s1.n_constraints, s1.f, s1.euler_characteristic) == (1, 2, 3)
    s2 = u3.u3_system(U3Params(0.5, 0.0), ell=0.4)
    assert (s2.n_constraints, s2.f, s2.euler_characteristic) == (2, 1, 2)
    assert u3.u3_system(U3Params(0.5), ell=0.0).euler_characteristic is None
    with pytest.raises(ValueError):
        u3.u3_system(U3Params(0.5), ell=1.5)


def test_sphere_samples_lie_on_sphere():
    X = u3.sample_sphere(np.random.default_rng(0), 1000)
    np.testing.assert_allclose(u3.phi_n(X), 0.0, atol=1e-14)
