import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import gamma

from cavityflow.ball_basis import (
    BALL_VOLUME,
    SPHERE_AREA,
    BasisFunction,
    DomainSpec,
    Family,
    _eval_harmonic,
    build_basis,
    evaluate_function,
    fluid_inertia,
    make_grid,
)
from cavityflow.errors import AssemblyError, ParameterError

from conftest import ball_points


def monomial_ball_integral(a, b, c):
    if a % 2 or b % 2 or c % 2:
        return 0.0
    al, be, ga = (a + 1) / 2, (b + 1) / 2, (c + 1) / 2
    return 2 * gamma(al) * gamma(be) * gamma(ga) / gamma(al + be + ga) / (a + b + c + 3)


def test_domain_is_unit_ball():
    DomainSpec()
    with pytest.raises(ParameterError):
        DomainSpec(radius=2.0)
    with pytest.raises(ParameterError):
        DomainSpec(fluid_density=0.5)


def test_count_small_example():
    assert len(build_basis(2, 2)) == 32


@settings(max_examples=8, deadline=None)
@given(l_max=st.integers(1, 3), n_rad=st.integers(1, 3),
       fams=st.sampled_from([("toroidal",), ("poloidal",), ("toroidal", "poloidal")]))
def test_count_formula(l_max, n_rad, fams):
    b = build_basis(l_max, n_rad, families=fams)
    assert len(b) == sum(2 * l + 1 for l in range(1, l_max + 1)) * n_rad * len(fams)


@pytest.mark.parametrize("bad", [(0, 2), (2, 0), (1.5, 2)])
def test_build_rejects_bad_sizes(bad):
    with pytest.raises(ParameterError):
        build_basis(*bad)


def test_coarse_grid_rejected():
    with pytest.raises(AssemblyError):
        build_basis(3, 4, grid=make_grid(3, 4))


def test_toroidal_vanishes_at_origin(basis34):
    origin = np.zeros((1, 3))
    for k, fn in enumerate(basis34.functions):
        if fn.family is Family.TOROIDAL:
            v, _ = basis34.evaluate(k, origin)
            assert np.abs(v).max() == 0.0


def test_divergence_at_random_points(basis34, rng):
    pts = ball_points(rng, 100)
    for k in range(len(basis34)):
        _, g = basis34.evaluate(k, pts)
        assert np.abs(np.trace(g, axis1=1, axis2=2)).max() < 1e-12


def test_cached_divergence_and_normal_trace(basis34):
    div = np.trace(basis34.gradients, axis1=2, axis2=3)
    assert np.abs(div).max() < 1e-12
    normal = np.einsum("anq,nq->an", basis34.traces, basis34.grid.surface_points)
    assert np.abs(normal).max() < 1e-12


def test_fields_are_real(basis34):
    assert basis34.values.dtype == np.float64
    assert basis34.gradients.dtype == np.float64


def test_cached_values_match_direct_evaluation(basis34):
    pts = basis34.grid.volume_points
    for k in range(0, len(basis34), 7):
        v, g = basis34.evaluate(k, pts)
        assert_allclose(v, basis34.values[k], rtol=0, atol=1e-13)
        assert_allclose(g, basis34.gradients[k], rtol=0, atol=1e-12)


@pytest.mark.parametrize("family", list(Family))
@pytest.mark.parametrize("radial", ["jacobi", "legendre"])
def test_gradients_match_finite_differences(family, radial, rng):
    pts = ball_points(rng, 20, rmax=0.9)
    h = 1e-6
    for fn in (BasisFunction(family, 1, 0, 1), BasisFunction(family, 3, -2, 2)):
        _, g = evaluate_function(fn, pts, radial)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            vp, _ = evaluate_function(fn, pts + e, radial)
            vm, _ = evaluate_function(fn, pts - e, radial)
            assert_allclose((vp - vm) / (2 * h), g[:, :, k], atol=2e-8 * max(1.0, np.abs(g).max()))


def test_poloidal_radial_component(rng):
    # x . v = l(l+1) (1 - r^2) q(r^2) R(x)
    pts = ball_points(rng, 30)
    fn = BasisFunction(Family.POLOIDAL, 2, 1, 0)
    v, _ = evaluate_function(fn, pts, "legendre")
    R, _, _ = _eval_harmonic(2, 1, pts)
    s = np.einsum("ni,ni->n", pts, pts)
    assert_allclose(np.einsum("ni,ni->n", v, pts), 6 * (1 - s) * R, atol=1e-13)


def test_solid_harmonics_are_harmonic_and_orthonormal():
    g = make_grid(4, 10)
    S = g.surface_points
    Ys = []
    for l in range(5):
        for m in range(-l, l + 1):
            R, _, H = _eval_harmonic(l, m, S)
            assert np.abs(np.trace(H, axis1=1, axis2=2)).max() < 1e-12
            Ys.append(R)
    Ys = np.array(Ys)
    gram = np.einsum("an,bn,n->ab", Ys, Ys, g.surface_weights)
    assert_allclose(gram, np.eye(len(Ys)), atol=1e-12)


def test_grid_weight_sums():
    g = make_grid(3, 20)
    assert_allclose(g.volume_weights.sum(), BALL_VOLUME, rtol=1e-12)
    assert_allclose(g.surface_weights.sum(), SPHERE_AREA, rtol=1e-12)
    assert_allclose(BALL_VOLUME, 4 * math.pi / 3, rtol=1e-15)


def test_integrate_r_squared():
    g = make_grid(3, 8)
    r2 = np.einsum("ni,ni->n", g.volume_points, g.volume_points)
    assert_allclose(g.integrate_volume(r2), 4 * math.pi / 5, rtol=1e-12)


def test_y21_normalized():
    g = make_grid(3, 8)
    Y, _, _ = _eval_harmonic(2, 1, g.surface_points)
    assert_allclose(g.integrate_surface(Y * Y), 1.0, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6)))
def test_volume_rule_exact_for_monomials(exps):
    a, b, c = exps
    g = make_grid(3, 18)
    if a + b + c > min(g.d_vol, g.d_surf):
        return
    x = g.volume_points
    val = g.integrate_volume(x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c)
    assert_allclose(val, monomial_ball_integral(a, b, c), atol=1e-13)


def test_fluid_inertia_of_unit_ball():
    J = fluid_inertia(make_grid(1, 4))
    assert_allclose(np.diag(J), 8 * math.pi / 15, rtol=1e-10)
    assert np.abs(J - np.diag(np.diag(J))).max() < 1e-12
    assert_allclose(np.trace(J), 2 * 4 * math.pi / 5, rtol=1e-10)


def test_gram_positive_definite(basis34):
    G = basis34.mass_matrix()
    assert_allclose(G, G.T, atol=1e-14)
    assert np.linalg.eigvalsh(G).min() > 0
    assert_allclose(np.diag(G), 1.0, rtol=1e-12)


def test_basis_arrays_read_only(basis34):
    with pytest.raises(ValueError):
        basis34.values[0, 0, 0] = 1.0
