"""
Coefficients of the truncated fluid/rigid-body system.

For modes phi_k with eigenvalues Lambda_k the modal equations read

    B c' + (Lambda o c) + C(a) c + D:cc + E(a) = 0,
    I a' + (a - omega) x I a = 0,         omega = I^-1 sum_k c_k m_k,

with m_k = int x x phi_k, P_kr = int phi_k x phi_r,
T_rkl = int (phi_k . grad phi_l) . phi_r and
B_rk = delta_rk - m_r . I^-1 m_k.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .ball_basis import fluid_inertia as _fluid_inertia_of_grid
from .ball_basis import make_grid
from .errors import AssemblyError, ConfigurationError, ParameterError

__all__ = [
    "FLUID_BALL_INERTIA",
    "CouplingTensors",
    "InertiaSpec",
    "build_B",
    "build_tensors",
    "convection_tensor",
    "cross_gram",
    "full_convection",
    "moment_vectors",
    "rigid_tensors",
]

FLUID_BALL_INERTIA = 8.0 * math.pi / 15.0


@dataclass(frozen=True)
class InertiaSpec:
    """Principal moments of the whole system (solid plus fluid).

    Build with :meth:`from_solid` to add the fluid ball's contribution, or
    :meth:`raw` to prescribe the total moments directly (e.g. for rigid-only
    runs); in the latter case B positivity is checked when B is formed.
    """

    lambdas: tuple
    solid_lambda: tuple = None

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        object.__setattr__(self, "lambdas", lam)
        if len(lam) != 3 or not all(math.isfinite(x) and x > 0 for x in lam):
            raise ParameterError(f"principal moments must be three positive numbers, got {lam}")

    @classmethod
    def from_solid(cls, solid_lambda, fluid=None, check_triangle=True):
        sl = tuple(float(x) for x in solid_lambda)
        if len(sl) != 3 or not all(math.isfinite(x) and x >= 0 for x in sl):
            raise ParameterError(f"solid_lambda must be three nonnegative numbers, got {sl}")
        if fluid is None:
            fluid = np.diag(_fluid_inertia_of_grid(make_grid(1, 2)))
        fluid = np.broadcast_to(np.asarray(fluid, dtype=float), (3,))
        lam = tuple(float(s + f) for s, f in zip(sl, fluid))
        if check_triangle:
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                if lam[j] + lam[k] < lam[i] * (1 - 1e-14):
                    raise ParameterError(f"principal moments {lam} violate the triangle inequality")
        return cls(lam, sl)

    @classmethod
    def raw(cls, lambdas):
        return cls(tuple(lambdas))

    @property
    def matrix(self):
        return np.diag(self.lambdas)

    @property
    def inverse(self):
        return np.diag([1.0 / x for x in self.lambdas])


@dataclass(eq=False)
class CouplingTensors:
    """Dense coefficient arrays of the modal system.

    ``m[k]`` moment vectors, ``P[k, r]`` cross-Gram vectors, ``T[r, k, l]``
    raw convection, ``D[r, k, l]`` full quadratic coefficient, ``B`` the
    coupled mass matrix with its Cholesky factor ``B_chol``.
    """

    inertia: InertiaSpec
    Lambda: np.ndarray
    m: np.ndarray
    P: np.ndarray
    T: np.ndarray
    D: np.ndarray
    B: np.ndarray
    B_chol: tuple

    @property
    def n(self):
        return len(self.Lambda)

    @property
    def Im(self):
        """Rows I^-1 m_k."""
        return self.m / np.asarray(self.inertia.lambdas)

    def omega(self, c):
        return self.Im.T @ c

    def B_solve(self, rhs):
        return linalg.cho_solve(self.B_chol, rhs)


def moment_vectors(modes):
    """m_k = int x x phi_k dx for every mode."""
    grid = modes.grid
    x = grid.volume_points
    cr = np.cross(x[None, :, :], modes.values)
    return np.einsum("knq,n->kq", cr, grid.volume_weights)


def cross_gram(modes):
    """P[k, r] = int phi_k x phi_r dx, antisymmetric by construction."""
    V = modes.values
    w = modes.grid.volume_weights
    n = len(modes)
    P = np.zeros((n, n, 3))
    for q, (i, j) in enumerate(((1, 2), (2, 0), (0, 1))):
        Vw = V[:, :, i] * w
        half = Vw @ V[:, :, j].T
        P[:, :, q] = half - half.T
    return P


def build_B(m, inertia):
    """B = Id - M^T I^-1 M with M = [m_1 ... m_n]; returns (B, cho_factor)."""
    m = np.asarray(m, dtype=float).reshape(-1, 3)
    Im = m / np.asarray(inertia.lambdas)
    B = np.eye(len(m)) - m @ Im.T
    B = 0.5 * (B + B.T)
    if len(m) == 0:
        return B, (B, True)
    try:
        chol = linalg.cho_factor(B, lower=True)
    except linalg.LinAlgError:
        raise ConfigurationError(
            f"coupled mass matrix is not positive definite for moments {inertia.lambdas}"
        ) from None
    if np.min(np.diag(chol[0])) <= 1e-7:
        raise ConfigurationError(f"coupled mass matrix is numerically singular for moments {inertia.lambdas}")
    return B, chol


def convection_tensor(modes, chunk=None):
    """T[r, k, l] = int (phi_k . grad phi_l) . phi_r dx."""
    V = modes.values
    G = modes.gradients
    w = modes.grid.volume_weights
    n, N = V.shape[:2]
    if G.shape[:2] != (n, N):
        raise AssemblyError("missing gradient cache for convection tensor")
    if chunk is None:
        chunk = max(16, int(2e7 // max(1, 3 * n * n)))
    T = np.zeros((n, n * n))
    for s in range(0, N, chunk):
        sl = slice(s, s + chunk)
        # Z[k, l, node, i] = sum_j phi_k,j d_j phi_l,i
        Z = np.einsum("knj,lnij->klni", V[:, sl], G[:, sl], optimize=True)
        Vw = V[:, sl] * w[sl, None]
        T += Vw.reshape(n, -1) @ Z.reshape(n * n, -1).T
    return T.reshape(n, n, n)


def full_convection(T, P, m, inertia):
    """D[r, k, l] = T[r, k, l] - 2 P[k, r] . I^-1 m_l."""
    Im = np.asarray(m) / np.asarray(inertia.lambdas)
    return T - 2.0 * np.einsum("krq,lq->rkl", P, Im)


def build_tensors(modes, inertia, check=True):
    """All coefficients for the modal system over ``modes``."""
    m = moment_vectors(modes)
    P = cross_gram(modes)
    T = convection_tensor(modes)
    if check:
        resid = np.abs(T + np.transpose(T, (2, 1, 0))).max(initial=0.0)
        scale = max(1.0, np.abs(T).max(initial=0.0))
        if resid > 1e-10 * scale:
            raise AssemblyError(f"convection tensor antisymmetry residual {resid:.2e}; grid too coarse?")
    D = full_convection(T, P, m, inertia)
    B, chol = build_B(m, inertia)
    return CouplingTensors(inertia, np.asarray(modes.eigenvalues, dtype=float).copy(), m, P, T, D, B, chol)


def rigid_tensors(inertia):
    """Empty modal system: the rigid-body equations alone."""
    z1 = np.zeros(0)
    return CouplingTensors(inertia, z1, np.zeros((0, 3)), np.zeros((0, 0, 3)), np.zeros((0, 0, 0)),
                           np.zeros((0, 0, 0)), np.zeros((0, 0)), (np.zeros((0, 0)), True))
