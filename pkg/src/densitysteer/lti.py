"""Continuous-time LTI plants and their controllability Gramians.

The Gramian used here is the "backward" one,

    W(0, t) = int_0^t exp(-A s) B B^T exp(-A^T s) ds,

which is what the minimum-energy transfer formulas need.
"""

from dataclasses import dataclass, field

import numpy as np

from . import matops
from .config import DEFAULT_TOL, Tolerances


class UncontrollableError(ValueError):
    """The Kalman matrix is numerically rank deficient."""

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"system is not controllable (Kalman min singular value "
            f"{report.min_sv:.3e}, max {report.max_sv:.3e})")


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """The plant ``x' = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = matops.as_matrix(self.A, "A")
        B = matops.as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B must have {A.shape[0]} rows, got {B.shape[0]}")
        A.flags.writeable = False
        B.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def is_driftless_identity(self):
        """True for ``A = 0, B = I`` (the Benamou-Brenier plant)."""
        return (self.n == self.m and not np.any(self.A)
                and np.array_equal(self.B, np.eye(self.n)))


def double_integrator():
    return LtiSystem(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]))


@dataclass(frozen=True)
class ControllabilityReport:
    controllable: bool
    min_sv: float
    max_sv: float


def kalman_matrix(sys):
    """``[B, AB, ..., A^{n-1} B]``, shape ``(n, n*m)``."""
    blocks = [sys.B]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def controllability_check(sys, tol=None):
    """Numerical Kalman rank test.

    Controllable iff ``sigma_min > tol * sigma_max`` of the Kalman matrix.
    ``tol`` defaults to ``DEFAULT_TOL.rank``.
    """
    if sys.n == 0:
        raise ValueError("empty system (n = 0)")
    tol = DEFAULT_TOL.rank if tol is None else tol
    if tol <= 0:
        raise ValueError("tol must be positive")
    K = kalman_matrix(sys)
    sv = np.linalg.svd(K, compute_uv=False)
    smin, smax = float(sv[-1]), float(sv[0])
    return ControllabilityReport(bool(smax > 0 and smin > tol * smax), smin, smax)


def require_controllable(sys, tol=None):
    report = controllability_check(sys, tol)
    if not report.controllable:
        raise UncontrollableError(report)
    return report


def gramian(sys, t):
    """Controllability Gramian ``W(0, t)`` via a block-augmented exponential.

    With ``C = [[A, B B^T], [0, -A^T]]``, ``expm(C t)`` has lower-right block
    ``exp(-A^T t)`` and upper-right block ``exp(A t) W(0, t)``, so
    ``W = (lower-right)^T (upper-right)``.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    n = sys.n
    if t == 0:
        return np.zeros((n, n))
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = sys.A
    C[:n, n:] = sys.B @ sys.B.T
    C[n:, n:] = -sys.A.T
    F = matops.expm(C * t)
    return matops.symmetrize(F[n:, n:].T @ F[:n, n:])


def gramian_integrand(sys, s):
    """``exp(-A s) B B^T exp(-A^T s)``, the time derivative of ``W(0, s)``."""
    G = matops.expm(-sys.A * s) @ sys.B
    return G @ G.T


def gramian_quadrature_oracle(sys, t, steps=512):
    """Composite Simpson rule on the defining integral. Test oracle only."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if steps < 16:
        raise ValueError("steps must be >= 16")
    steps += steps % 2
    h = t / steps
    total = np.zeros((sys.n, sys.n))
    for k in range(steps + 1):
        w = 1.0 if k in (0, steps) else (4.0 if k % 2 else 2.0)
        total += w * gramian_integrand(sys, k * h)
    return matops.symmetrize(total * h / 3.0)


@dataclass(frozen=True, eq=False)
class GramianTable:
    system: LtiSystem
    horizon: float
    grid: np.ndarray
    values: np.ndarray = field(repr=False)   # shape (L+1, n, n)

    def psd_monotone(self, tol=1e-10):
        """Smallest eigenvalue over consecutive differences ``W_{i+1} - W_i``.

        Returns ``(ok, worst)``; the tolerance is relative to ``max(1, |W_L|)``.
        """
        scale = max(1.0, float(np.linalg.norm(self.values[-1], 2)))
        worst = min((matops.min_eig(b - a) for a, b in
                     zip(self.values[:-1], self.values[1:])), default=0.0)
        return worst >= -tol * scale, worst


def gramian_table(sys, T, L):
    """Exact Gramians on the uniform grid ``t_i = i T / L``, ``i = 0..L``."""
    if T <= 0:
        raise ValueError("T must be positive")
    if L < 2:
        raise ValueError("L must be >= 2")
    grid = np.linspace(0.0, T, L + 1)
    values = np.stack([gramian(sys, t) for t in grid])
    grid.flags.writeable = False
    values.flags.writeable = False
    return GramianTable(sys, float(T), grid, values)


def random_controllable_system(rng, n, m, scale=1.0, tol: Tolerances = DEFAULT_TOL):
    """Draw ``A, B`` with Gaussian entries until the Kalman test passes."""
    while True:
        A = scale * rng.standard_normal((n, n)) / np.sqrt(n)
        B = rng.standard_normal((n, m))
        sys = LtiSystem(A, B)
        if controllability_check(sys, max(tol.rank, 1e-6)).controllable:
            return sys
