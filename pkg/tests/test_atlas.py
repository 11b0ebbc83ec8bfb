import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esqpt import u3
from esqpt.atlas import (
    BoundarySingularity,
    ChartPoint,
    atlas_stationary,
    chart_stationary,
    eta_coords,
    hp_forward,
    hp_inverse,
    hp_transition,
    reduced_h,
    reduced_h_gradient,
    reduced_h_hessian,
)
from esqpt.core import finite_difference_gradient, finite_difference_hessian
from esqpt.solver import SolverConfig
from esqpt.u3 import U3Params

SQ2, H = np.sqrt(2.0), np.sqrt(0.5)
PATH_START = np.array([1.0, H, H, 0.0, 0.0, 0.0])
CFG = SolverConfig(n_starts=400)


def sphere(n, seed=0):
    return u3.sample_sphere(np.random.default_rng(seed), n)


def test_forward_origin_of_chart0():
    x = hp_forward(0, [SQ2, 0, 0, 0, 0, 0])
    assert x.chart == 0
    np.testing.assert_allclose(x.coords, 0.0, atol=1e-15)


def test_forward_boundary_singularity():
    with pytest.raises(BoundarySingularity):
        hp_forward(0, [0, SQ2, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        hp_forward(0, [1, 0, 0, 0, 0, 0])  # off the sphere
    with pytest.raises(ValueError):
        hp_forward(3, PATH_START)


def test_forward_path_start():
    np.testing.assert_allclose(hp_forward(0, PATH_START).coords, [H, H, 0, 0], atol=1e-15)


def test_transition_path_start_to_chart1():
    x1 = hp_transition(0, 1, hp_forward(0, PATH_START))
    np.testing.assert_allclose(x1.coords, [1.0, H, 0, 0], atol=1e-15)
    np.testing.assert_allclose(x1.coords, hp_forward(1, PATH_START).coords, atol=1e-15)


def test_transition_identity_and_errors():
    x = hp_forward(0, PATH_START)
    np.testing.assert_array_equal(hp_transition(0, 0, x).coords, x.coords)
    with pytest.raises(ValueError):
        hp_transition(1, 2, x)
    with pytest.raises(BoundarySingularity):
        hp_transition(0, 1, ChartPoint(0, np.array([0.0, 0.5, 0.0, 0.2])))


def test_inverse_rejects_outside_ball():
    with pytest.raises(ValueError):
        hp_inverse(0, [1.5, 0, 0, 0])
    with pytest.raises(ValueError):
        reduced_h(1, U3Params(0.5), [1.5, 0, 0, 0])


@pytest.mark.parametrize("j", [0, 1, 2])
def test_round_trip_up_to_phase(j):
    X = sphere(500)
    x = hp_forward(j, X)
    Y = hp_inverse(j, x)
    np.testing.assert_allclose(u3.invariants(Y), u3.invariants(X), atol=1e-12)
    np.testing.assert_allclose(hp_forward(j, Y).coords, x.coords, atol=1e-12)
    # restoring the eliminated boson's phase recovers the point exactly
    Z = np.stack([X[:, :3], X[:, 3:]], -1)
    phase = np.arctan2(Z[:, j, 1], Z[:, j, 0])
    np.testing.assert_allclose(np.stack([hp_inverse(j, x.coords[i], phase[i]) for i in range(50)]), X[:50],
                               atol=1e-12)


@pytest.mark.parametrize("j, jp", [(0, 1), (0, 2), (1, 2), (2, 0), (1, 0), (2, 1)])
def test_transition_matches_composite(j, jp):
    X = sphere(300, seed=j + 3 * jp)
    x = hp_forward(j, X)
    direct = hp_transition(j, jp, x)
    composite = hp_forward(jp, hp_inverse(j, x))
    np.testing.assert_allclose(direct.coords, composite.coords, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.floats(0, 2 * np.pi), st.integers(0, 2**31))
def test_phase_orbit_maps_to_one_chart_point(j, theta, seed):
    X = sphere(1, seed=seed)[0]
    a = hp_forward(j, X).coords
    b = hp_forward(j, u3.phase_rotate(X, theta)).coords
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_eta_examples():
    np.testing.assert_allclose(eta_coords([SQ2, 0, 0, 0, 0, 0]), [SQ2, 0, 0])
    np.testing.assert_allclose(eta_coords([-1, 0, 0, 1, 0, 0]), [-SQ2, 0, 0])


def test_eta_chart_vs_full():
    X = sphere(200, seed=5)
    x = hp_forward(0, X)
    # magnitudes always agree; signs agree once boson 0 sits on the positive Q axis
    np.testing.assert_allclose(np.abs(eta_coords(x)), np.abs(eta_coords(X)), atol=1e-12)
    Y = hp_inverse(0, x)
    np.testing.assert_allclose(eta_coords(x), eta_coords(Y), atol=1e-12)


def test_reduced_h_chart_origins():
    p = U3Params(0.37, 0.3)
    assert reduced_h(0, p, np.zeros(4)) == pytest.approx(0.0)
    assert reduced_h(1, p, np.zeros(4)) == pytest.approx(1 - p.xi)
    assert reduced_h(2, p, np.zeros(4)) == pytest.approx(1 - p.xi)
    with pytest.raises(ValueError):
        reduced_h(3, p, np.zeros(4))


@pytest.mark.parametrize("j", [0, 1, 2])
@pytest.mark.parametrize("xi, eps", [(0.2, 0.0), (0.56, 0.3), (0.9, -0.7)])
def test_reduced_h_is_pullback(j, xi, eps):
    p = U3Params(xi, eps)
    x = hp_forward(j, sphere(1000, seed=11)).coords
    np.testing.assert_allclose(reduced_h(j, p, x), u3.classical_h(p, hp_inverse(j, x)), atol=1e-12)


@pytest.mark.parametrize("j", [0, 1, 2])
def test_reduced_derivatives_match_finite_differences(j):
    p = U3Params(0.56, 0.3)
    for x in hp_forward(j, sphere(20, seed=2)).coords * 0.9:
        g = reduced_h_gradient(j, p, x)
        np.testing.assert_allclose(g, finite_difference_gradient(lambda y: reduced_h(j, p, y), x), atol=1e-6)
        h = reduced_h_hessian(j, p, x)
        fd = finite_difference_hessian(lambda y: reduced_h_gradient(j, p, y), x)
        np.testing.assert_allclose(h, fd, atol=1e-6 * max(1, np.abs(h).max()))


def test_chart1_central_point_is_index3():
    pts = chart_stationary(1, U3Params(0.5, 0.3), CFG)
    centre = [p for p in pts if np.linalg.norm(p.chart_coords) < 1e-8]
    assert len(centre) == 1 and centre[0].index == 3
    assert centre[0].energy == pytest.approx(0.5)


def test_chart1_centre_index2_at_small_xi():
    pts = chart_stationary(1, U3Params(0.01, 0.3), CFG)
    centre = [p for p in pts if np.linalg.norm(p.chart_coords) < 1e-8]
    assert len(centre) == 1 and centre[0].index == 2


def test_chart0_u2_limit_minimum():
    pts = chart_stationary(0, U3Params(0.0, 0.0), CFG)
    assert np.linalg.norm(pts[0].chart_coords) < 1e-8
    assert pts[0].energy == pytest.approx(0.0, abs=1e-12) and pts[0].index == 0


def test_atlas_union_has_unique_orbits():
    pts = atlas_stationary(U3Params(0.56, 0.3), CFG)
    assert sum((-1) ** p.index for p in pts) == 3
    sig = np.array([p.signature for p in pts])
    d = np.abs(sig[:, None] - sig[None]).max(-1) + np.eye(len(pts))
    assert d.min() > 1e-7
