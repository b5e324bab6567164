import math
from types import SimpleNamespace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cavityflow.ball_basis import Family, make_grid
from cavityflow.coupling import (
    FLUID_BALL_INERTIA,
    InertiaSpec,
    build_B,
    convection_tensor,
    cross_gram,
    moment_vectors,
    rigid_tensors,
)
from cavityflow.errors import ConfigurationError, ParameterError
from cavityflow.stokes_modes import FluidParams, assemble_forms


def test_inertia_adds_fluid_ball():
    spec = InertiaSpec.from_solid((1.0, 2.0, 2.5))
    assert_allclose(spec.lambdas, np.array([1.0, 2.0, 2.5]) + FLUID_BALL_INERTIA, rtol=1e-12)
    assert min(spec.lambdas) >= FLUID_BALL_INERTIA * (1 - 1e-12)


def test_inertia_validation():
    with pytest.raises(ParameterError):
        InertiaSpec.from_solid((0.1, 0.1, 5.0))
    with pytest.raises(ParameterError):
        InertiaSpec.from_solid((-1.0, 1.0, 1.0))
    with pytest.raises(ParameterError):
        InertiaSpec.raw((1.0, 0.0, 1.0))


def test_reference_total_inertia_is_physical(ref_inertia):
    a, b, c = sorted(ref_inertia.lambdas)
    assert a + b >= c


def test_cross_gram_antisymmetric(tensors48):
    P = tensors48.P
    assert np.array_equal(P, -np.transpose(P, (1, 0, 2)))
    assert np.all(P[np.arange(len(P)), np.arange(len(P))] == 0.0)


def test_convection_antisymmetry(tensors48):
    T = tensors48.T
    assert np.abs(T + np.transpose(T, (2, 1, 0))).max() < 1e-10


def test_convection_energy_neutral(tensors48, rng):
    for _ in range(5):
        c = rng.normal(size=tensors48.n)
        assert np.abs(np.einsum("rkl,r,l->k", tensors48.T, c, c)).max() < 1e-10 * (c @ c)


def test_convection_chunking_invariant(modes48, tensors48):
    small = modes48.restrict(12)
    assert_allclose(convection_tensor(small, chunk=37), tensors48.T[:12, :12, :12], atol=1e-13)


def test_moments_only_on_l1_toroidal(modes48, tensors48):
    for k, (fam, l, _) in enumerate(modes48.labels):
        if fam is not Family.TOROIDAL or l != 1:
            assert np.abs(tensors48.m[k]).max() < 1e-12
    assert np.abs(tensors48.m).max() > 0.1


def test_moment_of_rigid_rotation():
    grid = make_grid(1, 4)
    w = np.cross([0.0, 0.0, 1.0], grid.volume_points)
    m = moment_vectors(SimpleNamespace(grid=grid, values=w[None]))
    assert_allclose(m[0], [0.0, 0.0, 8 * math.pi / 15], atol=1e-12)


def test_moment_linearity(modes48, rng):
    alpha, beta = rng.normal(size=2)
    v = alpha * modes48.values[0] + beta * modes48.values[5]
    m = moment_vectors(SimpleNamespace(grid=modes48.grid, values=v[None]))[0]
    ref = moment_vectors(modes48)
    assert_allclose(m, alpha * ref[0] + beta * ref[5], atol=1e-13)


def test_B_identity_without_moments(ref_inertia):
    B, _ = build_B(np.zeros((4, 3)), ref_inertia)
    assert np.array_equal(B, np.eye(4))


@pytest.mark.parametrize("s", [0.1, 0.5, 0.99])
def test_B_single_mode_closed_form(s):
    lam3 = 3.0
    inertia = InertiaSpec.raw((2.0, 2.0, lam3))
    m = np.array([[0.0, 0.0, math.sqrt(s * lam3)]])
    B, _ = build_B(m, inertia)
    assert_allclose(B, [[1 - s]], rtol=1e-12)


def test_B_single_mode_singular():
    inertia = InertiaSpec.raw((2.0, 2.0, 3.0))
    with pytest.raises(ConfigurationError):
        build_B(np.array([[0.0, 0.0, math.sqrt(3.0)]]), inertia)


def test_B_tends_to_identity_for_heavy_body():
    m = np.array([[0.0, 0.0, 1.0]])
    B, _ = build_B(m, InertiaSpec.raw((1.0, 1.0, 1e12)))
    assert_allclose(B, [[1.0]], atol=1e-11)


@pytest.mark.parametrize("solid", [(0.5, 1.5, 2.5), (0.0, 0.0, 0.0), (1.0, 1.0, 2.0), (5.0, 6.0, 7.0)])
def test_B_spectrum_in_unit_interval(modes48, solid):
    inertia = InertiaSpec.from_solid(solid, check_triangle=False)
    B, _ = build_B(moment_vectors(modes48), inertia)
    ev = np.linalg.eigvalsh(B)
    assert ev.min() > 0
    assert ev.max() <= 1 + 1e-10


def test_B_quadratic_form_identity(modes48, tensors48, rng):
    lam = np.asarray(tensors48.inertia.lambdas)
    w = modes48.grid.volume_weights
    for _ in range(5):
        c = rng.normal(size=tensors48.n)
        v = np.tensordot(c, modes48.values, axes=1)
        om = tensors48.omega(c)
        lhs = c @ tensors48.B @ c
        rhs = np.einsum("ni,ni,n->", v, v, w) - om @ (lam * om)
        assert_allclose(lhs, rhs, atol=1e-10 * (c @ c))


def test_dissipation_is_diagonal(basis34, modes48, rng):
    _, A = assemble_forms(basis34, FluidParams(1.0, 1.0))
    c = rng.normal(size=len(modes48))
    x = modes48.coeffs @ c
    assert_allclose(x @ A @ x, np.sum(modes48.eigenvalues * c * c), rtol=1e-8)


def test_rigid_tensors_empty(ref_inertia):
    t = rigid_tensors(ref_inertia)
    assert t.n == 0
    assert t.omega(np.zeros(0)).shape == (3,)


def test_cross_gram_small(modes48):
    P = cross_gram(modes48.restrict(6))
    assert P.shape == (6, 6, 3)
