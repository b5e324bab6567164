import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import linalg

from cavityflow.coupling import CouplingTensors, InertiaSpec, rigid_tensors
from cavityflow.dynamics import (
    IntegratorConfig,
    Scheme,
    SimState,
    energy_identity_residual,
    integrate,
    modal_system,
    monitors,
    rhs,
)
from cavityflow.errors import NumericalFailure, ParameterError


def random_state(rng, n, scale=1.0):
    return SimState(0.0, scale * rng.normal(size=n), rng.normal(size=3))


def angle_to(a, axis):
    return np.arctan2(np.linalg.norm(np.delete(a, axis)), abs(a[axis]))


@pytest.fixture(scope="module")
def damped_run(tensors48):
    rng = np.random.default_rng(7)
    s0 = SimState(0.0, 0.1 * rng.normal(size=48), [0.4, 1.0, 0.3])
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, t_end=1500.0)
    return integrate(s0, tensors48, cfg, sample_interval=1.0)


def test_state_validation():
    with pytest.raises(ParameterError):
        SimState(0.0, [np.nan], [0, 0, 1])
    with pytest.raises(ParameterError):
        SimState(0.0, [], [0, 1])


@pytest.mark.parametrize("field", ["rel_tol", "abs_tol", "t_end", "equilibrium_eps"])
def test_config_validation(field):
    with pytest.raises(ParameterError):
        IntegratorConfig(**{field: 0.0})
    with pytest.raises(ValueError):
        IntegratorConfig(scheme="leapfrog")


@pytest.mark.parametrize("axis", range(3))
def test_principal_axis_is_fixed_point(tensors48, axis):
    a = np.zeros(3)
    a[axis] = 1.7
    dc, da = rhs(SimState(0.0, np.zeros(48), a), tensors48)
    assert np.abs(dc).max() < 1e-13
    assert np.abs(da).max() < 1e-13
    assert monitors(SimState(0.0, np.zeros(48), a), tensors48).dissipation == 0.0


def test_rigid_euler_at_rest_fluid(tensors48, rng):
    lam = np.asarray(tensors48.inertia.lambdas)
    a = rng.normal(size=3)
    _, da = rhs(SimState(0.0, np.zeros(48), a), tensors48)
    assert_allclose(da, -np.cross(a, lam * a) / lam, atol=1e-15)


def test_conservation_and_dissipation_pointwise(tensors48, rng):
    sys_ = modal_system(tensors48)
    lam = sys_.lam
    for _ in range(200):
        s = random_state(rng, 48, scale=rng.uniform(0.01, 2.0))
        dc, da = sys_.rhs(s.c, s.a)
        Ia = lam * s.a
        assert abs(2 * (lam * da) @ Ia) < 1e-13 * max(1.0, Ia @ Ia) * np.abs(da).max(initial=1.0)
        dE = s.c @ tensors48.B @ dc + s.a @ (lam * da)
        y = sys_.dissipation(s.c)
        assert abs(dE + y) <= 1e-10 * y


def test_jacobian_matches_central_differences(tensors48, rng):
    sys_ = modal_system(tensors48)
    c, a = 0.3 * rng.normal(size=48), rng.normal(size=3)
    J = sys_.jacobian(c, a)
    y = np.concatenate([c, a])
    h = 1e-6
    fd = np.empty_like(J)
    for j in range(len(y)):
        e = np.zeros(len(y))
        e[j] = h
        fp = np.concatenate(sys_.rhs((y + e)[:48], (y + e)[48:]))
        fm = np.concatenate(sys_.rhs((y - e)[:48], (y - e)[48:]))
        fd[:, j] = (fp - fm) / (2 * h)
    assert np.abs(J - fd).max() / np.abs(J).max() < 1e-6


def test_monitors_rigid_example():
    t = rigid_tensors(InertiaSpec.raw((1.0, 2.0, 3.0)))
    m = monitors(SimState(0.0, [], [0.0, 0.0, 1.0]), t)
    assert m.energy == 1.5
    assert m.dissipation == 0.0
    assert m.momentum_norm == 3.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_energy_lower_bound(tensors48, seed):
    rng = np.random.default_rng(seed)
    s = random_state(rng, 48)
    cB = np.linalg.eigvalsh(tensors48.B).min()
    E = monitors(s, tensors48).energy
    assert E >= 0.5 * cB * (s.c @ s.c) * (1 - 1e-12)


def test_equilibrium_is_constant():
    t = rigid_tensors(InertiaSpec.raw((2.0, 3.0, 4.0)))
    s0 = SimState(0.0, [], [0.0, 0.0, 1.0])
    res = integrate(s0, t, IntegratorConfig(t_end=10.0))
    assert res.terminated
    assert np.array_equal(res.final.a, s0.a)


def test_coupled_equilibrium_is_constant(modes48):
    from cavityflow.coupling import build_tensors

    t = build_tensors(modes48, InertiaSpec.raw((2.0, 3.0, 4.0)))
    s0 = SimState(0.0, np.zeros(48), [0.0, 0.0, 1.0])
    res = integrate(s0, t, IntegratorConfig(t_end=10.0))
    assert np.array_equal(res.final.c, s0.c)
    assert np.array_equal(res.final.a, s0.a)


def test_rigid_run_conserves():
    t = rigid_tensors(InertiaSpec.raw((1.0, 2.0, 3.0)))
    s0 = SimState(0.0, [], [0.3, 1.0, 0.2])
    res = integrate(s0, t, IntegratorConfig(rel_tol=1e-13, abs_tol=1e-16, t_end=100.0), sample_interval=0.5)
    assert not res.terminated
    assert energy_identity_residual(res.samples) < 1e-12
    assert res.momentum_drift() < 1e-12


def test_intermediate_axis_instability():
    t = rigid_tensors(InertiaSpec.raw((1.0, 2.0, 3.0)))
    eps = 1e-3
    cfg = IntegratorConfig(t_end=100.0)
    mid = integrate(SimState(0.0, [], [eps, 1.0, eps]), t, cfg, sample_interval=0.1)
    assert max(angle_to(a, 1) for a in mid.column("a")) > 1.0
    top = integrate(SimState(0.0, [], [eps, eps, 1.0]), t, cfg, sample_interval=0.1)
    assert max(angle_to(a, 2) for a in top.column("a")) < 10 * eps


def test_damped_run_terminates(damped_run, tensors48):
    assert damped_run.terminated
    final = damped_run.final
    assert monitors(final, tensors48).dissipation < 1e-10
    assert angle_to(final.a, 2) < 1e-6


def test_damped_run_energy_decreasing(damped_run):
    E = damped_run.column("energy")
    assert np.all(np.diff(E) <= 1e-13 * E[0])
    assert E[-1] < E[0]


def test_damped_run_identities(damped_run):
    assert damped_run.momentum_drift() < 1e-8
    assert energy_identity_residual(damped_run.samples) < 1e-7


def test_residual_improves_with_tolerance(tensors48):
    rng = np.random.default_rng(3)
    s0 = SimState(0.0, 0.1 * rng.normal(size=48), [0.3, 1.0, 0.2])
    res = [
        energy_identity_residual(
            integrate(s0, tensors48, IntegratorConfig(rel_tol=tol, abs_tol=tol * 1e-3, t_end=20.0),
                      sample_interval=0.5).samples)
        for tol in (1e-8, 5e-9)
    ]
    assert res[1] * 2 <= res[0]


def test_semi_implicit_agrees_with_explicit(tensors48):
    rng = np.random.default_rng(11)
    s0 = SimState(0.0, 0.1 * rng.normal(size=48), [0.3, 1.0, 0.2])
    ex = integrate(s0, tensors48, IntegratorConfig(t_end=5.0, rel_tol=1e-10), sample_interval=1.0)
    im = integrate(s0, tensors48, IntegratorConfig(Scheme.SEMI_IMPLICIT, t_end=5.0, rel_tol=1e-9, abs_tol=1e-12),
                   sample_interval=1.0)
    assert_allclose(im.column("t"), ex.column("t"))
    assert_allclose(im.column("a"), ex.column("a"), atol=1e-6)
    assert_allclose(im.column("c"), ex.column("c"), atol=1e-6)
    assert im.momentum_drift() < 1e-8


def test_sink_receives_every_sample(tensors48):
    got = []
    s0 = SimState(0.0, np.full(48, 0.01), [0.0, 1.0, 0.5])
    res = integrate(s0, tensors48, IntegratorConfig(t_end=2.0), sink=got.append, sample_interval=0.25)
    assert len(got) == len(res.samples) == 9
    assert_allclose([s.t for s in got], np.arange(9) * 0.25, atol=1e-12)


def test_blowup_reports_last_state():
    # dc/dt = c^2 - 1e-3 c blows up shortly after t = 1 / c0
    B = np.eye(1)
    fake = CouplingTensors(InertiaSpec.raw((1.0, 1.0, 1.0)), np.full(1, 1e-3), np.zeros((1, 3)),
                           np.zeros((1, 1, 3)), np.zeros((1, 1, 1)), -np.ones((1, 1, 1)), B,
                           linalg.cho_factor(B, lower=True))
    with pytest.raises(NumericalFailure) as info:
        integrate(SimState(0.0, [1.0], [0.0, 0.0, 1.0]), fake, IntegratorConfig(t_end=5.0), sample_interval=0.1)
    assert info.value.state is not None
    assert info.value.state.t < 1.1
