"""
Time integration of the modal fluid/rigid-body system.

The integrated state is (c, a, Q) where Q(t) is the dissipation accumulated
since t = 0, advanced by the same scheme so that the discrete energy balance
E(t) + Q(t) = E(0) can be checked directly.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import Radau

from .errors import NumericalFailure, ParameterError

__all__ = [
    "IntegratorConfig",
    "ModalSystem",
    "Monitors",
    "Sample",
    "Scheme",
    "SimState",
    "TrajectorySummary",
    "energy_identity_residual",
    "integrate",
    "modal_system",
    "monitors",
    "rhs",
]


@dataclass(frozen=True)
class SimState:
    t: float
    c: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if a.shape != (3,):
            raise ParameterError(f"angular velocity must have 3 components, got {a.shape[0]}")
        if not (math.isfinite(self.t) and np.all(np.isfinite(c)) and np.all(np.isfinite(a))):
            raise ParameterError("state entries must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)


@dataclass(frozen=True)
class Monitors:
    energy: float
    momentum_norm: float
    dissipation: float
    blowup_y: float


class Scheme(str, enum.Enum):
    EXPLICIT_ADAPTIVE = "explicit_adaptive"
    SEMI_IMPLICIT = "semi_implicit"


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: Scheme = Scheme.EXPLICIT_ADAPTIVE
    rel_tol: float = 1e-10
    abs_tol: float = 1e-13
    t_end: float = 100.0
    max_step: float = math.inf
    equilibrium_eps: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        for name in ("rel_tol", "abs_tol", "t_end", "max_step", "equilibrium_eps"):
            val = getattr(self, name)
            if not val > 0:
                raise ParameterError(f"{name} must be positive, got {val!r}")


class ModalSystem:
    """Precomputed operators for repeated right-hand-side evaluations."""

    def __init__(self, tensors):
        self.tensors = tensors
        n = tensors.n
        self.n = n
        self.lam = np.asarray(tensors.inertia.lambdas, dtype=float)
        self.Lambda = tensors.Lambda
        self.Im = tensors.Im  # (n, 3)
        # C(a) = sum_i a_i Cbar[i];  Cbar[i, r, k] = lam_i (Im_r x Im_k)_i + 2 P[k, r, i]
        cr = np.cross(self.Im[:, None, :], self.Im[None, :, :])  # [r, k, i]
        self.Cbar = np.transpose(cr * self.lam + 2.0 * np.transpose(tensors.P, (1, 0, 2)), (2, 0, 1))
        self.Dflat = tensors.D.reshape(n, n * n)
        self.Binv = tensors.B_solve(np.eye(n)) if n else np.zeros((0, 0))

    def omega(self, c):
        return self.Im.T @ c

    def rhs(self, c, a):
        lam = self.lam
        Ia = lam * a
        w = self.omega(c)
        adot = np.cross(w - a, Ia) / lam
        if self.n == 0:
            return np.zeros(0), adot
        Ca = np.tensordot(a, self.Cbar, axes=1)
        Ea = -self.Im @ np.cross(a, Ia)
        G = self.Lambda * c + Ca @ c + self.Dflat @ np.outer(c, c).ravel() + Ea
        return -self.Binv @ G, adot

    def dissipation(self, c):
        return float(np.dot(self.Lambda, c * c))

    def energy(self, c, a):
        Bc = self.tensors.B @ c if self.n else c
        return 0.5 * (float(np.dot(c, Bc)) + float(np.dot(a, self.lam * a)))

    def jacobian(self, c, a):
        """Exact Jacobian of (c', a') with respect to (c, a)."""
        n, lam = self.n, self.lam
        Ia = lam * a
        w = self.omega(c)
        J = np.zeros((n + 3, n + 3))
        eye = np.eye(3)
        if n:
            Ca = np.tensordot(a, self.Cbar, axes=1)
            D3 = self.tensors.D
            Gc = np.diag(self.Lambda) + Ca + D3 @ c + np.einsum("rkl,k->rl", D3, c)
            Ga = np.empty((n, 3))
            for i in range(3):
                dE = -self.Im @ (np.cross(eye[i], Ia) + np.cross(a, lam[i] * eye[i]))
                Ga[:, i] = self.Cbar[i] @ c + dE
            J[:n, :n] = -self.Binv @ Gc
            J[:n, n:] = -self.Binv @ Ga
            J[n:, :n] = (np.cross(self.Im, Ia) / lam).T
        for i in range(3):
            J[n:, n + i] = (-np.cross(eye[i], Ia) + np.cross(w - a, lam[i] * eye[i])) / lam
        return J


def modal_system(tensors):
    system = tensors.__dict__.get("_modal_system")
    if system is None:
        system = ModalSystem(tensors)
        tensors.__dict__["_modal_system"] = system
    return system


def rhs(state, tensors):
    """(c', a') of the modal system at ``state``."""
    sys_ = modal_system(tensors)
    if len(state.c) != sys_.n:
        raise ParameterError(f"state has {len(state.c)} modal coefficients, tensors have {sys_.n}")
    return sys_.rhs(state.c, state.a)


def monitors(state, tensors):
    sys_ = modal_system(tensors)
    diss = sys_.dissipation(state.c)
    return Monitors(
        energy=sys_.energy(state.c, state.a),
        momentum_norm=float(np.linalg.norm(sys_.lam * state.a)),
        dissipation=diss,
        blowup_y=diss,
    )


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    state: SimState
    monitors: Monitors
    dissipated: float
    eresid: float

    @property
    def t(self):
        return self.state.t


@dataclass
class TrajectorySummary:
    samples: list
    final: SimState
    terminated: bool
    n_steps: int = 0
    n_rejected: int = 0
    extra: dict = field(default_factory=dict)

    def column(self, name):
        if name == "t":
            return np.array([s.t for s in self.samples])
        if name == "c":
            return np.array([s.state.c for s in self.samples])
        if name == "a":
            return np.array([s.state.a for s in self.samples])
        if name in ("dissipated", "eresid"):
            return np.array([getattr(s, name) for s in self.samples])
        return np.array([getattr(s.monitors, name) for s in self.samples])

    def momentum_drift(self):
        Imom = self.column("momentum_norm")
        return float(np.max(np.abs(Imom - Imom[0])) / Imom[0])


def energy_identity_residual(samples):
    """max_t |E(t) + int_0^t dissipation - E(0)| / E(0) over the samples."""
    samples = list(samples)
    if len(samples) < 2:
        raise ParameterError("need at least two samples")
    E0 = samples[0].monitors.energy
    if E0 <= 0:
        raise ParameterError("initial energy must be positive")
    return max(abs(s.monitors.energy + s.dissipated - E0) / E0 for s in samples)


# Dormand-Prince 5(4)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B5 - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class _Stepper:
    """Embedded Dormand-Prince pair with a PI step-size controller."""

    SAFE = 0.9
    BETA = 0.04
    EXPO1 = 0.2 - 0.04 * 0.75
    FACMIN, FACMAX = 0.2, 10.0

    def __init__(self, f, y0, t0, rtol, atol, max_step):
        self.f, self.rtol, self.atol, self.max_step = f, rtol, atol, max_step
        self.t, self.y = t0, y0
        self.k1 = f(y0)
        self.err_old = 1e-4
        self.h = self._initial_step()
        self.n_steps = self.n_rejected = 0

    def _norm(self, v, y_a, y_b):
        scale = self.atol + self.rtol * np.maximum(np.abs(y_a), np.abs(y_b))
        return math.sqrt(np.mean((v / scale) ** 2))

    def _initial_step(self):
        y, f0 = self.y, self.k1
        d0, d1 = self._norm(y, y, y), self._norm(f0, y, y)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        y1 = y + h0 * f0
        d2 = self._norm(self.f(y1) - f0, y, y) / h0
        h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
        return min(100 * h0, h1, self.max_step)

    def step(self, t_limit):
        """Advance by one accepted step, never past ``t_limit``."""
        while True:
            h = min(self.h, self.max_step, t_limit - self.t)
            if h <= 16 * np.finfo(float).eps * max(1.0, abs(self.t)):
                raise NumericalFailure(f"step size underflow at t={self.t:.6g}")
            y = self.y
            k = [self.k1]
            for s in range(1, 7):
                ys = y + h * sum(a * ki for a, ki in zip(_A[s], k) if a)
                k.append(self.f(ys))
            y_new = ys  # stage 7 abscissa is the 5th-order solution (FSAL)
            err_vec = h * sum(e * ki for e, ki in zip(_E, k) if e)
            if not np.all(np.isfinite(y_new)) or not np.all(np.isfinite(err_vec)):
                err = math.inf
            else:
                err = self._norm(err_vec, y, y_new)
            if err <= 1.0:
                fac = err ** self.EXPO1 / self.err_old ** self.BETA if err > 0 else 1.0 / self.FACMAX
                fac = min(1.0 / self.FACMIN, max(1.0 / self.FACMAX, fac / self.SAFE))
                self.err_old = max(err, 1e-4)
                hit_limit = h == t_limit - self.t
                self.t = t_limit if hit_limit else self.t + h
                self.y, self.k1 = y_new, k[6]
                # keep the controller's proposal when the step was clipped
                self.h = max(self.h, h / fac) if hit_limit else h / fac
                self.n_steps += 1
                return
            self.n_rejected += 1
            if not math.isfinite(err):
                self.h = 0.1 * h
            else:
                self.h = h / min(1.0 / self.FACMIN, err ** self.EXPO1 / self.SAFE)


def integrate(state0, tensors, config, sink=None, sample_interval=None):
    """Integrate from ``state0`` to ``config.t_end`` or an equilibrium.

    Samples are emitted at multiples of ``sample_interval`` (steps are clipped
    to land on them).  After each sample the run stops if
    ``dissipation + |a x I a| < config.equilibrium_eps``.

    Raises
    ------
    NumericalFailure
        On step-size underflow or a non-finite state; ``exc.state`` is the
        last valid :class:`SimState`.
    """
    sys_ = modal_system(tensors)
    n = sys_.n
    if len(state0.c) != n:
        raise ParameterError(f"initial state has {len(state0.c)} coefficients, tensors have {n}")
    if sample_interval is None:
        sample_interval = config.t_end / 100.0
    if not sample_interval > 0:
        raise ParameterError("sample_interval must be positive")

    lam, Lambda = sys_.lam, sys_.Lambda

    def f(y):
        c, a = y[:n], y[n:n + 3]
        dc, da = sys_.rhs(c, a)
        return np.concatenate([dc, da, [np.dot(Lambda, c * c)]])

    def make_sample(t, y):
        st = SimState(t, y[:n].copy(), y[n:n + 3].copy())
        mon = monitors(st, tensors)
        return Sample(st, mon, float(y[-1]), abs(mon.energy + y[-1] - E0) / E0 if E0 > 0 else 0.0)

    def at_equilibrium(s):
        a = s.state.a
        return s.monitors.blowup_y + float(np.linalg.norm(np.cross(a, lam * a))) < config.equilibrium_eps

    y0 = np.concatenate([state0.c, state0.a, [0.0]])
    E0 = sys_.energy(state0.c, state0.a)
    t0 = float(state0.t)
    t_end = t0 + config.t_end
    samples = []

    def emit(s):
        samples.append(s)
        if sink is not None:
            sink(s)

    first = make_sample(t0, y0)
    emit(first)
    if at_equilibrium(first):
        return TrajectorySummary(samples, first.state, True)

    k_sample = 1
    if config.scheme is Scheme.EXPLICIT_ADAPTIVE:
        stepper = _Stepper(f, y0, t0, config.rel_tol, config.abs_tol, config.max_step)
        while True:
            t_next = min(t0 + k_sample * sample_interval, t_end)
            try:
                while stepper.t < t_next:
                    stepper.step(t_next)
            except NumericalFailure as exc:
                raise NumericalFailure(str(exc), samples[-1].state) from None
            s = make_sample(stepper.t, stepper.y)
            emit(s)
            if at_equilibrium(s):
                return TrajectorySummary(samples, s.state, True, stepper.n_steps, stepper.n_rejected)
            if t_next >= t_end:
                return TrajectorySummary(samples, s.state, False, stepper.n_steps, stepper.n_rejected)
            k_sample += 1

    def jac(t, y):
        c = y[:n]
        J = np.zeros((n + 4, n + 4))
        J[: n + 3, : n + 3] = sys_.jacobian(c, y[n:n + 3])
        J[-1, :n] = 2.0 * Lambda * c
        return J

    solver = Radau(lambda t, y: f(y), t0, y0, t_end, rtol=config.rel_tol, atol=config.abs_tol,
                   max_step=config.max_step, jac=jac)
    n_steps = 0
    t_next = min(t0 + sample_interval, t_end)
    while True:
        msg = solver.step()
        n_steps += 1
        if solver.status == "failed" or not np.all(np.isfinite(solver.y)):
            raise NumericalFailure(f"implicit solver failed at t={solver.t:.6g}: {msg}", samples[-1].state)
        dense = None
        while t_next <= solver.t:
            if dense is None:
                dense = solver.dense_output()
            y = solver.y if t_next == solver.t else dense(t_next)
            s = make_sample(t_next, y)
            emit(s)
            if at_equilibrium(s):
                return TrajectorySummary(samples, s.state, True, n_steps, 0)
            if t_next >= t_end:
                return TrajectorySummary(samples, s.state, False, n_steps, 0)
            k_sample += 1
            t_next = min(t0 + k_sample * sample_interval, t_end)
