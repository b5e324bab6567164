"""
Stokes eigenmodes of the ball with Navier slip boundary conditions.

The slip condition is natural for the dissipation form

    b(u, v) = zeta (u | v)_Gamma + 2 nu (D(u) | D(v))_Omega,

so the modes come from the symmetric pencil A x = Lambda M x over the
impermeable trial fields, with M the L2 Gram matrix.  ``shooting_oracle``
is an independent check built from the separated radial problem.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import brentq
from scipy.special import spherical_jn

from .ball_basis import Family
from .errors import AssemblyError, NumericalFailure, OracleError, ParameterError

__all__ = [
    "CLUSTER_RTOL",
    "FluidParams",
    "ModeSet",
    "assemble_forms",
    "compute_modes",
    "h1_gram",
    "korn_constant",
    "shooting_oracle",
    "solve_modes",
]

CLUSTER_RTOL = 1e-8


@dataclass(frozen=True)
class FluidParams:
    """Kinematic viscosity ``nu`` and wall friction ``zeta``.

    ``zeta = 0`` (perfect slip) is rejected unless ``experimental_zero_zeta``
    is set; the rigid rotations are then in the kernel of b.
    """

    nu: float = 1.0
    zeta: float = 1.0
    experimental_zero_zeta: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ParameterError(f"nu must be positive, got {self.nu!r}")
        if not math.isfinite(self.zeta) or self.zeta < 0:
            raise ParameterError(f"zeta must be positive, got {self.zeta!r}")
        if self.zeta == 0 and not self.experimental_zero_zeta:
            raise ParameterError("zeta must be strictly positive (zeta = 0 needs experimental_zero_zeta)")


def _sym_grad(grads):
    return 0.5 * (grads + np.swapaxes(grads, -1, -2))


def _check_grid(basis, product_order=2):
    d_f = basis.max_degree()
    if basis.grid.d_vol < product_order * d_f or basis.grid.d_surf < 2 * basis.l_max + 4:
        raise AssemblyError(
            f"grid exact to degree {basis.grid.d_vol}/{basis.grid.d_surf}, "
            f"fields need {product_order * d_f}/{2 * basis.l_max + 4}"
        )


def assemble_forms(basis, params):
    """Mass matrix M and dissipation matrix A over ``basis``."""
    _check_grid(basis)
    w = basis.grid.volume_weights
    M = np.einsum("anq,bnq,n->ab", basis.values, basis.values, w, optimize=True)
    D = _sym_grad(basis.gradients)
    A = 2.0 * params.nu * np.einsum("anij,bnij,n->ab", D, D, w, optimize=True)
    A += params.zeta * np.einsum(
        "anq,bnq,n->ab", basis.traces, basis.traces, basis.grid.surface_weights, optimize=True
    )
    return 0.5 * (M + M.T), 0.5 * (A + A.T)


def h1_gram(basis):
    """Gram matrix of the full H^1 inner product (u|v) + (grad u|grad v)."""
    _check_grid(basis)
    w = basis.grid.volume_weights
    G = np.einsum("anij,bnij,n->ab", basis.gradients, basis.gradients, w, optimize=True)
    H = basis.mass_matrix() + G
    return 0.5 * (H + H.T)


def _pencil(M, A):
    """Eigenpairs of A x = L M x via Cholesky reduction, ascending."""
    try:
        L = linalg.cholesky(M, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"mass matrix is not positive definite: {exc}") from None
    Linv_A = linalg.solve_triangular(L, A, lower=True)
    C = linalg.solve_triangular(L, Linv_A.T, lower=True)
    C = 0.5 * (C + C.T)
    try:
        lam, y = linalg.eigh(C)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"symmetric eigensolver failed: {exc}") from None
    x = linalg.solve_triangular(L, y, lower=True, trans="T")
    return lam, x


def _family_rank(fam):
    return 0 if fam is Family.TOROIDAL else 1


@dataclass(eq=False)
class ModeSet:
    """L2-orthonormal eigenmodes; column n of ``coeffs`` expands mode n.

    ``labels[n]`` is the (family, l, m) block the mode lives in and
    ``radial_order[n]`` its rank inside that block.
    """

    eigenvalues: np.ndarray
    coeffs: np.ndarray
    labels: list
    radial_order: list
    basis: object = None
    params: FluidParams = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.eigenvalues)

    def _mapped(self, name):
        if name not in self._cache:
            if self.basis is None:
                raise AssemblyError("mode set carries no basis values (loaded from cache?)")
            arr = getattr(self.basis, name)
            self._cache[name] = np.tensordot(self.coeffs, arr, axes=([0], [0]))
        return self._cache[name]

    @property
    def values(self):
        return self._mapped("values")

    @property
    def gradients(self):
        return self._mapped("gradients")

    @property
    def traces(self):
        return self._mapped("traces")

    @property
    def grid(self):
        return None if self.basis is None else self.basis.grid

    def multiplets(self, rtol=CLUSTER_RTOL):
        """Index groups of numerically equal eigenvalues."""
        groups = [[0]] if len(self) else []
        for n in range(1, len(self)):
            prev = self.eigenvalues[groups[-1][0]]
            if abs(self.eigenvalues[n] - prev) <= rtol * abs(prev):
                groups[-1].append(n)
            else:
                groups.append([n])
        return groups

    def restrict(self, n):
        return ModeSet(self.eigenvalues[:n].copy(), self.coeffs[:, :n].copy(), self.labels[:n],
                       self.radial_order[:n], self.basis, self.params)


def solve_modes(M, A, n_modes, basis=None, params=None, blockwise=True, rtol=CLUSTER_RTOL):
    """Smallest ``n_modes`` eigenpairs of A x = Lambda M x as a :class:`ModeSet`.

    With a ``basis`` the pencil is split into its (family, l, m) blocks, which
    the rotational symmetry of the ball decouples exactly; this yields modes
    of pure harmonic type.  Without one (or with ``blockwise=False``) the full
    pencil is solved and each mode is labelled by its dominant block.
    """
    M = np.asarray(M, dtype=float)
    A = np.asarray(A, dtype=float)
    nb = M.shape[0]
    if M.shape != (nb, nb) or A.shape != (nb, nb):
        raise ParameterError("M and A must be square matrices of equal size")
    if not (1 <= n_modes <= nb):
        raise ParameterError(f"n_modes must be in [1, {nb}], got {n_modes}")
    if np.abs(M - M.T).max() > 1e-12 * np.abs(M).max() or np.abs(A - A.T).max() > 1e-12 * np.abs(A).max():
        raise ParameterError("M and A must be symmetric")

    blocks = basis.blocks() if basis is not None else None
    if blocks is not None and blockwise:
        mask = np.zeros((nb, nb), dtype=bool)
        for idx in blocks.values():
            mask[np.ix_(idx, idx)] = True
        leak = max(np.abs(M[~mask]).max(initial=0.0) / np.abs(M).max(),
                   np.abs(A[~mask]).max(initial=0.0) / np.abs(A).max())
        if leak > 1e-10:
            blocks_used = None
        else:
            blocks_used = blocks
    else:
        blocks_used = None

    entries = []  # (Lambda, label, radial rank, coefficient vector)
    if blocks_used is not None:
        for key, idx in blocks_used.items():
            lam, x = _pencil(M[np.ix_(idx, idx)], A[np.ix_(idx, idx)])
            for r in range(len(lam)):
                vec = np.zeros(nb)
                vec[idx] = x[:, r]
                entries.append((lam[r], key, r, vec))
    else:
        lam, x = _pencil(M, A)
        ranks = {}
        for r in range(len(lam)):
            key = None
            if blocks is not None:
                weights = {k: x[idx, r] @ M[np.ix_(idx, idx)] @ x[idx, r] for k, idx in blocks.items()}
                key = max(weights, key=weights.get)
            ranks[key] = ranks.get(key, -1) + 1
            entries.append((lam[r], key, ranks[key], x[:, r]))

    entries.sort(key=lambda e: e[0])
    # tie-break inside numerically degenerate clusters by (l, m, family)
    ordered, i = [], 0
    while i < len(entries):
        j = i + 1
        while j < len(entries) and entries[j][0] - entries[i][0] <= rtol * abs(entries[i][0]):
            j += 1
        cluster = entries[i:j]
        if cluster[0][1] is not None:
            cluster.sort(key=lambda e: (e[1][1], e[1][2], _family_rank(e[1][0])))
        ordered.extend(cluster)
        i = j

    chosen = ordered[:n_modes]
    vals = np.array([e[0] for e in chosen])
    if not np.all(np.isfinite(vals)) or vals.min() <= 0.0:
        raise NumericalFailure(f"non-positive Stokes eigenvalue {vals.min():.3e}")
    coeffs = np.stack([e[3] for e in chosen], axis=1)
    return ModeSet(vals, coeffs, [e[1] for e in chosen], [e[2] for e in chosen], basis, params)


def compute_modes(basis, params, n_modes, **kwargs):
    M, A = assemble_forms(basis, params)
    return solve_modes(M, A, n_modes, basis=basis, params=params, **kwargs)


# ---------------------------------------------------------------------------
# Radial oracle


def _toroidal_char(k, l, nu, zeta):
    # nu (u'(1) - u(1)) + zeta u(1) = 0 with u = j_l(k r)
    return (nu * (l - 1) + zeta) * spherical_jn(l, k) - nu * k * spherical_jn(l + 1, k)


def _poloidal_char(k, l, nu, zeta):
    # chi = j_l(k r) - j_l(k) r^l; chi(1) = 0 and nu chi''(1) + zeta chi'(1) = 0
    return (2.0 * nu - zeta) * spherical_jn(l + 1, k) - nu * k * spherical_jn(l, k)


def shooting_oracle(family, l, params, k, dk=0.01, k_max=2000.0):
    """k-th eigenvalue (k >= 1) of the separated radial problem.

    Roots of the transcendental slip condition in the wavenumber are
    bracketed on a uniform scan and refined with Brent's method; the
    eigenvalue is nu * wavenumber**2.
    """
    family = Family.parse(family)
    if l < 1 or k < 1:
        raise ParameterError("shooting_oracle needs l >= 1 and k >= 1")
    nu, zeta = float(params.nu), float(params.zeta)
    char = _toroidal_char if family is Family.TOROIDAL else _poloidal_char

    def f(x):
        return char(x, l, nu, zeta) / x**l

    found = 0
    a = 1e-3
    fa = f(a)
    while a < k_max:
        b = a + dk
        fb = f(b)
        if fa == 0.0:
            found += 1
            if found == k:
                return nu * a * a
        elif fa * fb < 0:
            found += 1
            if found == k:
                root = brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
                return nu * root * root
        a, fa = b, fb
    raise OracleError(f"could not bracket root {k} for {family.value} l={l} below wavenumber {k_max}")


def korn_constant(basis, indices=None):
    """Discrete Korn constant over the span of the selected trial fields.

    Returns sqrt(min Rayleigh quotient) of (|D u|^2 + |u|^2_Gamma) against
    the H^1 norm squared.
    """
    _, A = assemble_forms(basis, FluidParams(nu=0.5, zeta=1.0))
    H = h1_gram(basis)
    if indices is not None:
        idx = np.asarray(indices)
        A, H = A[np.ix_(idx, idx)], H[np.ix_(idx, idx)]
    lam, _ = _pencil(H, A)
    return math.sqrt(lam[0])
