"""
Divergence-free, impermeable vector fields in the unit ball.

Every trial field is a polynomial in Cartesian coordinates.  With the real
solid harmonic R = r^l Y_lm (a homogeneous harmonic polynomial) and a radial
polynomial q(s), s = r^2, the two families are

    toroidal   T = curl(x q R)            = q(s) (grad R x x)
    poloidal   S = curl curl(x h R)       = -2 l h'(s) R x + ((1 + l) h + 2 s h'(s)) grad R

with h(s) = (1 - s) q(s).  Toroidal fields are tangential everywhere on
spheres; the factor (1 - s) removes the normal trace of poloidal fields,
since (S | x) = l (l + 1) h(s) R.  Values and gradients are evaluated from
these closed forms, so no finite differences are involved.
"""

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly
from scipy.special import eval_jacobi

from .errors import AssemblyError, ParameterError

__all__ = [
    "BALL_VOLUME",
    "SPHERE_AREA",
    "BasisFunction",
    "BasisSet",
    "DomainSpec",
    "Family",
    "QuadratureGrid",
    "RADIAL_FAMILIES",
    "build_basis",
    "evaluate_function",
    "field_degree",
    "fluid_inertia",
    "make_grid",
    "solid_harmonic",
]

BALL_VOLUME = 4.0 * math.pi / 3.0
SPHERE_AREA = 4.0 * math.pi
MAX_RULE_DEGREE = 400

RADIAL_FAMILIES = ("jacobi", "legendre")


@dataclass(frozen=True)
class DomainSpec:
    """The fluid domain.  Only the unit ball at unit density is supported."""

    radius: float = 1.0
    fluid_density: float = 1.0

    def __post_init__(self):
        if self.radius != 1.0:
            raise ParameterError("only the unit ball (radius = 1) is supported")
        if self.fluid_density != 1.0:
            raise ParameterError("fluid density is fixed to 1")


class Family(str, enum.Enum):
    TOROIDAL = "toroidal"
    POLOIDAL = "poloidal"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParameterError(f"unknown field family {value!r}") from None


# ---------------------------------------------------------------------------
# Real solid harmonics as dense Cartesian polynomials


def _polymul3(a, b):
    out = np.zeros(tuple(sa + sb - 1 for sa, sb in zip(a.shape, b.shape)))
    for idx in zip(*np.nonzero(a)):
        i, j, k = idx
        out[i:i + b.shape[0], j:j + b.shape[1], k:k + b.shape[2]] += a[idx] * b
    return out


def _r2_power(k):
    """Coefficients of (x^2 + y^2 + z^2)^k."""
    out = np.zeros((2 * k + 1,) * 3)
    for a in range(k + 1):
        for b in range(k + 1 - a):
            c = k - a - b
            coef = math.factorial(k) // (math.factorial(a) * math.factorial(b) * math.factorial(c))
            out[2 * a, 2 * b, 2 * c] = coef
    return out


@lru_cache(maxsize=None)
def solid_harmonic(l, m):
    """Coefficient array c[a, b, c] of x^a y^b z^c for r^l Y_lm.

    Real harmonics, unit L2 norm on the unit sphere, no Condon-Shortley
    phase; m > 0 carries cos(m phi) and m < 0 carries sin(|m| phi).
    """
    if l < 0 or abs(m) > l:
        raise ParameterError(f"invalid harmonic indices (l={l}, m={m})")
    am = abs(m)
    norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - am) / math.factorial(l + am))
    if am > 0:
        norm *= math.sqrt(2.0)

    dleg = nppoly.polyder(npleg.leg2poly([0] * l + [1]), am) if l > 0 else np.array([1.0])
    zpart = np.zeros((1, 1, l - am + 1))
    for p, cp in enumerate(dleg):
        if cp == 0.0 or (l - am - p) % 2:
            continue
        term = np.zeros((1, 1, p + 1))
        term[0, 0, p] = cp
        zpart = _add(zpart, _polymul3(term, _r2_power((l - am - p) // 2)))

    # Re / Im of (x + i y)^|m|
    xy = np.zeros((am + 1, am + 1, 1))
    for k in range(am + 1):
        phase = k % 4  # i^k
        if m >= 0 and phase in (0, 2):
            xy[am - k, k, 0] = math.comb(am, k) * (1 if phase == 0 else -1)
        elif m < 0 and phase in (1, 3):
            xy[am - k, k, 0] = math.comb(am, k) * (1 if phase == 1 else -1)
    out = norm * _polymul3(xy, zpart)
    full = np.zeros((l + 1,) * 3)
    full[: out.shape[0], : out.shape[1], : out.shape[2]] = out[: l + 1, : l + 1, : l + 1]
    return full


def _add(a, b):
    shape = tuple(max(sa, sb) for sa, sb in zip(a.shape, b.shape))
    out = np.zeros(shape)
    out[: a.shape[0], : a.shape[1], : a.shape[2]] += a
    out[: b.shape[0], : b.shape[1], : b.shape[2]] += b
    return out


@lru_cache(maxsize=None)
def _harmonic_derivatives(l, m):
    c = solid_harmonic(l, m)
    grad = [nppoly.polyder(c, axis=i) for i in range(3)]
    hess = [[nppoly.polyder(grad[i], axis=k) for k in range(3)] for i in range(3)]
    return c, grad, hess


def _eval_harmonic(l, m, pts):
    """Return R (N,), grad R (N, 3), hess R (N, 3, 3) at ``pts``."""
    c, grad, hess = _harmonic_derivatives(l, m)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    R = nppoly.polyval3d(x, y, z, c)
    g = np.stack([nppoly.polyval3d(x, y, z, gi) for gi in grad], axis=-1)
    H = np.empty((len(pts), 3, 3))
    for i in range(3):
        for k in range(i, 3):
            H[:, i, k] = nppoly.polyval3d(x, y, z, hess[i][k])
            H[:, k, i] = H[:, i, k]
    return R, g, H


# ---------------------------------------------------------------------------
# Radial polynomial family q_j(s), s = r^2 in [0, 1]


def _jacobi_params(radial, l):
    if radial == "jacobi":
        return 0.0, l + 0.5
    if radial == "legendre":
        return 0.0, 0.0
    raise ParameterError(f"unknown radial family {radial!r}; expected one of {RADIAL_FAMILIES}")


def _radial(j, l, s, radial):
    """q_j(s) and its first two s-derivatives."""
    a, b = _jacobi_params(radial, l)
    x = 2.0 * s - 1.0
    q = eval_jacobi(j, a, b, x)
    dq = np.zeros_like(s)
    d2q = np.zeros_like(s)
    if j >= 1:
        dq = (j + a + b + 1) * eval_jacobi(j - 1, a + 1, b + 1, x)
    if j >= 2:
        d2q = (j + a + b + 1) * (j + a + b + 2) * eval_jacobi(j - 2, a + 2, b + 2, x)
    return q, dq, d2q


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisFunction:
    family: Family
    l: int
    m: int
    j: int

    def __post_init__(self):
        if self.l < 1 or abs(self.m) > self.l or self.j < 0:
            raise ParameterError(f"invalid basis indices {self}")

    @property
    def block(self):
        return (self.family, self.l, self.m)


def field_degree(fn):
    """Polynomial degree of the field's Cartesian components."""
    return fn.l + 2 * fn.j + (1 if fn.family is Family.POLOIDAL else 0)


def evaluate_function(fn, points, radial="jacobi", scale=1.0):
    """Values (N, 3) and gradients (N, 3, 3) of one basis field.

    ``grad[:, i, k]`` is the derivative of component i along x_k.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = np.einsum("ni,ni->n", pts, pts)
    R, gR, HR = _eval_harmonic(fn.l, fn.m, pts)
    q, dq, d2q = _radial(fn.j, fn.l, s, radial)
    eye = np.eye(3)

    if fn.family is Family.TOROIDAL:
        gx = np.cross(gR, pts)
        vals = q[:, None] * gx
        grad = 2.0 * dq[:, None, None] * gx[:, :, None] * pts[:, None, :]
        # d_k (grad R x x)_i = (H[:, k] x x)_i + (grad R x e_k)_i
        hx = np.cross(np.swapaxes(HR, 1, 2), pts[:, None, :])  # [n, k, i]
        ge = np.cross(gR[:, None, :], eye[None, :, :])  # [n, k, i]
        grad += q[:, None, None] * np.swapaxes(hx + ge, 1, 2)
    else:
        l = fn.l
        h = (1.0 - s) * q
        dh = -q + (1.0 - s) * dq
        d2h = -2.0 * dq + (1.0 - s) * d2q
        P = -2.0 * l * dh
        dP = -2.0 * l * d2h
        F = (1.0 + l) * h + 2.0 * s * dh
        dF = (3.0 + l) * dh + 2.0 * s * d2h
        vals = (P * R)[:, None] * pts + F[:, None] * gR
        grad = (
            2.0 * (dP * R)[:, None, None] * pts[:, :, None] * pts[:, None, :]
            + P[:, None, None] * pts[:, :, None] * gR[:, None, :]
            + (P * R)[:, None, None] * eye
            + 2.0 * dF[:, None, None] * gR[:, :, None] * pts[:, None, :]
            + F[:, None, None] * HR
        )
    return scale * vals, scale * grad


# ---------------------------------------------------------------------------
# Quadrature


@dataclass(frozen=True)
class QuadratureGrid:
    """Product quadrature on the unit ball and the unit sphere.

    The surface rule (Gauss-Legendre in cos(theta) times a uniform rule in
    phi) integrates spherical harmonics of degree <= ``d_surf`` exactly.  The
    volume rule combines it with a radial Gauss rule exact for r^(d_vol + 2),
    so it integrates every polynomial of total degree <= min(d_vol, d_surf),
    and more generally any polynomial of degree <= d_vol whose restriction to
    spheres has harmonic degree <= d_surf.
    """

    volume_points: np.ndarray
    volume_weights: np.ndarray
    surface_points: np.ndarray
    surface_weights: np.ndarray
    d_vol: int
    d_surf: int

    def integrate_volume(self, values):
        return np.tensordot(values, self.volume_weights, axes=([-1], [0]))

    def integrate_surface(self, values):
        return np.tensordot(values, self.surface_weights, axes=([-1], [0]))


def _sphere_rule(degree):
    n_theta = degree // 2 + 1
    n_phi = degree + 1
    ct, wt = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - ct**2)
    pts = np.stack(
        [
            np.outer(st, np.cos(phi)).ravel(),
            np.outer(st, np.sin(phi)).ravel(),
            np.repeat(ct, n_phi),
        ],
        axis=-1,
    )
    w = np.repeat(wt, n_phi) * (2.0 * np.pi / n_phi)
    return pts, w


def make_grid(l_max, max_poly_degree, surface_degree=None):
    """Build a :class:`QuadratureGrid`.

    Parameters
    ----------
    l_max : int
        Largest harmonic degree of the fields to be integrated.  The angular
        rule is exact through degree ``3 * l_max + 4``, enough for triple
        products of fields and one gradient.
    max_poly_degree : int
        Total polynomial degree of the integrands; the radial rule integrates
        r^(max_poly_degree + 2) exactly.
    surface_degree : int, optional
        Override for the angular exactness.
    """
    if l_max < 0 or max_poly_degree < 0:
        raise ParameterError("grid degrees must be nonnegative")
    d_surf = 3 * l_max + 4 if surface_degree is None else int(surface_degree)
    if d_surf > MAX_RULE_DEGREE or max_poly_degree > MAX_RULE_DEGREE:
        raise ParameterError(f"requested exactness exceeds rule limit {MAX_RULE_DEGREE}")

    spts, sw = _sphere_rule(d_surf)
    n_r = (max_poly_degree + 3 + 1) // 2
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (xr + 1.0)
    wr = 0.5 * wr * r**2
    vpts = (r[:, None, None] * spts[None, :, :]).reshape(-1, 3)
    vw = np.outer(wr, sw).ravel()
    return QuadratureGrid(vpts, vw, spts, sw, int(max_poly_degree), d_surf)


def fluid_inertia(grid):
    """Inertia tensor of the unit-density fluid ball about its center."""
    x = grid.volume_points
    w = grid.volume_weights
    r2 = np.einsum("ni,ni->n", x, x)
    J = np.eye(3) * np.dot(w, r2) - np.einsum("n,ni,nj->ij", w, x, x)
    return 0.5 * (J + J.T)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Basis functions with values cached on a quadrature grid.

    Each field is scaled to unit L2(ball) norm.  Arrays are laid out as
    ``values[a, n, i]``, ``gradients[a, n, i, k]`` and ``traces[a, n, i]``.
    """

    functions: tuple
    grid: QuadratureGrid
    values: np.ndarray
    gradients: np.ndarray
    traces: np.ndarray
    scales: np.ndarray
    radial: str = "jacobi"
    l_max: int = 0
    n_rad: int = 0
    families: tuple = field(default=())

    def __len__(self):
        return len(self.functions)

    def evaluate(self, index, points):
        """Direct (uncached) evaluation of function ``index`` at ``points``."""
        return evaluate_function(self.functions[index], points, self.radial, self.scales[index])

    def blocks(self):
        """Map (family, l, m) -> list of function indices."""
        out = {}
        for a, fn in enumerate(self.functions):
            out.setdefault(fn.block, []).append(a)
        return out

    def mass_matrix(self):
        return np.einsum("anq,bnq,n->ab", self.values, self.values, self.grid.volume_weights, optimize=True)

    def max_degree(self):
        return max(field_degree(fn) for fn in self.functions)


def build_basis(l_max, n_rad, families=(Family.TOROIDAL, Family.POLOIDAL), radial="jacobi",
                product_order=3, grid=None):
    """Construct the trial fields for l = 1..l_max and radial index 0..n_rad-1.

    ``product_order`` sets how many fields must be multiplied exactly by the
    default grid: 2 suffices for mass and dissipation forms, 3 is needed for
    the convection tensor.
    """
    if int(l_max) != l_max or l_max < 1:
        raise ParameterError(f"l_max must be an integer >= 1, got {l_max!r}")
    if int(n_rad) != n_rad or n_rad < 1:
        raise ParameterError(f"n_rad must be an integer >= 1, got {n_rad!r}")
    fams = sorted({Family.parse(f) for f in families}, key=lambda f: f is Family.POLOIDAL)
    if not fams:
        raise ParameterError("at least one field family is required")
    _jacobi_params(radial, 1)

    functions = tuple(
        BasisFunction(fam, l, m, j)
        for fam in fams
        for l in range(1, l_max + 1)
        for m in range(-l, l + 1)
        for j in range(n_rad)
    )
    d_f = max(field_degree(fn) for fn in functions)
    if grid is None:
        grid = make_grid(l_max, product_order * d_f)
    elif grid.d_vol < 2 * d_f or grid.d_surf < 2 * l_max + 4:
        raise AssemblyError("quadrature grid is not exact for products of these fields")

    nv, ns = len(grid.volume_weights), len(grid.surface_weights)
    values = np.empty((len(functions), nv, 3))
    grads = np.empty((len(functions), nv, 3, 3))
    traces = np.empty((len(functions), ns, 3))
    scales = np.empty(len(functions))
    for a, fn in enumerate(functions):
        v, g = evaluate_function(fn, grid.volume_points, radial)
        norm = math.sqrt(np.dot(grid.volume_weights, np.einsum("ni,ni->n", v, v)))
        scales[a] = 1.0 / norm
        values[a] = v * scales[a]
        grads[a] = g * scales[a]
        traces[a] = evaluate_function(fn, grid.surface_points, radial, scales[a])[0]
    for arr in (values, grads, traces, scales):
        arr.setflags(write=False)
    return BasisSet(functions, grid, values, grads, traces, scales, radial, int(l_max), int(n_rad), tuple(fams))
