"""
Permanent rotations and their linear stability.

Equilibria are (c, a) = (0, a*) with I a* = lambda* a*.  The modal system is
quadratic, so its Jacobian at an equilibrium is assembled exactly from the
coupling tensors and its spectrum is split into a zero cluster, a stable
part and an unstable part.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .dynamics import modal_system
from .errors import ConsistencyError, NumericalFailure, ParameterError

__all__ = [
    "Classification",
    "Equilibrium",
    "StabilityReport",
    "classify",
    "find_equilibria",
    "linearize",
    "rigid_linearization_eigenvalues",
    "stability_of",
]


class Classification(str, enum.Enum):
    NORMALLY_STABLE = "NormallyStable"
    NORMALLY_HYPERBOLIC = "NormallyHyperbolic"


@dataclass(frozen=True)
class Equilibrium:
    a_star: np.ndarray
    lambda_star: float
    manifold_dim: int

    @property
    def momentum(self):
        return self.lambda_star * float(np.linalg.norm(self.a_star))


@dataclass(frozen=True)
class StabilityReport:
    equilibrium: Equilibrium
    spectrum: np.ndarray
    zero_multiplicity: int
    unstable_count: int
    classification: Classification
    spectral_gap: float
    imaginary_count: int = 0
    threshold: float = 0.0

    def row(self):
        return {
            "lambda_star": self.equilibrium.lambda_star,
            "m": self.equilibrium.manifold_dim,
            "zero_multiplicity": self.zero_multiplicity,
            "unstable_count": self.unstable_count,
            "spectral_gap": self.spectral_gap,
            "classification": self.classification.value,
        }


def _distinct_moments(lambdas, rtol=1e-12):
    groups = []
    for i in np.argsort(lambdas, kind="stable"):
        if groups and abs(lambdas[i] - lambdas[groups[-1][0]]) <= rtol * lambdas[i]:
            groups[-1].append(int(i))
        else:
            groups.append([int(i)])
    return groups


def find_equilibria(inertia, momentum):
    """All representative equilibria with |I a*| = ``momentum``.

    For each distinct moment (ascending) the eigenspace is spanned by
    coordinate axes; both signs of each axis are returned.
    """
    if not (math.isfinite(momentum) and momentum > 0):
        raise ParameterError(f"momentum must be positive, got {momentum!r}")
    lam = np.asarray(inertia.lambdas, dtype=float)
    out = []
    for group in _distinct_moments(lam):
        lam_star = float(lam[group[0]])
        for i in group:
            for sign in (1.0, -1.0):
                a = np.zeros(3)
                a[i] = sign * momentum / lam_star
                out.append(Equilibrium(a, lam_star, len(group)))
    return out


def linearize(tensors, eq, tol=1e-12):
    """Jacobian of the modal system at (0, a*).

    Returns ``(J, mass)`` where ``J`` is the Jacobian of the solved system
    (c', a') and ``mass = diag(B, I)``; the pencil form is ``mass @ J``.
    """
    sys_ = modal_system(tensors)
    c0 = np.zeros(sys_.n)
    dc, da = sys_.rhs(c0, eq.a_star)
    resid = max(np.abs(dc).max(initial=0.0), np.abs(da).max())
    if resid > tol * max(1.0, float(np.dot(eq.a_star, eq.a_star))):
        raise ConsistencyError(f"(0, a*) is not an equilibrium: rhs norm {resid:.2e}")
    J = sys_.jacobian(c0, eq.a_star)
    mass = linalg.block_diag(tensors.B, np.diag(sys_.lam)) if sys_.n else np.diag(sys_.lam)
    return J, mass


def classify(J, mass, eq, Lambda0=None, rtol=1e-9):
    """Split the spectrum of the linearization and classify ``eq``.

    Eigenvalues z of ``J`` (equivalently of the pencil ``(mass J, mass)``)
    with |z| below ``rtol * scale`` form the zero cluster, where scale
    is max(|a*|, Lambda0).
    """
    scale = float(np.linalg.norm(eq.a_star))
    if Lambda0 is not None:
        scale = max(scale, float(Lambda0))
    thr = rtol * scale
    try:
        z = linalg.eig(mass @ J, mass, right=False)
    except linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolver failed: {exc}") from None
    if not np.all(np.isfinite(z)):
        raise NumericalFailure("non-finite eigenvalue in linearized spectrum")
    z = z[np.lexsort((z.imag, z.real))]
    zero = np.abs(z) < thr
    n_zero = int(zero.sum())

    sv = linalg.svdvals(J)
    nullity = int(np.sum(sv < rtol * max(sv.max(initial=0.0), scale)))
    if nullity != n_zero:
        raise ConsistencyError(
            f"zero eigenvalue is not semi-simple (algebraic {n_zero}, geometric {nullity}); "
            "truncation may be too coarse"
        )
    rest = z[~zero]
    unstable = int(np.sum(rest.real > thr))
    imaginary = int(np.sum(np.abs(rest.real) <= thr))
    gap = float(np.min(np.abs(rest.real))) if len(rest) else math.inf
    cls = Classification.NORMALLY_STABLE if unstable == 0 else Classification.NORMALLY_HYPERBOLIC
    return StabilityReport(eq, z, n_zero, unstable, cls, gap, imaginary, thr)


def stability_of(tensors, eq):
    J, mass = linearize(tensors, eq)
    Lambda0 = float(tensors.Lambda[0]) if tensors.n else None
    return classify(J, mass, eq, Lambda0=Lambda0)


def rigid_linearization_eigenvalues(lambdas, axis, speed):
    """Closed-form spectrum of the rigid Euler equations about ``axis``.

    Linearizing I a' = I a x a at a* = speed * e_axis gives {0, +-mu} with
    mu^2 = -speed^2 (l* - l_i)(l* - l_j) / (l_i l_j).
    """
    lam = [float(x) for x in lambdas]
    i, j = [k for k in range(3) if k != axis]
    ls = lam[axis]
    mu2 = -speed**2 * (ls - lam[i]) * (ls - lam[j]) / (lam[i] * lam[j])
    mu = np.sqrt(complex(mu2))
    return np.array([0.0, mu, -mu])
