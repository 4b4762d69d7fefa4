"""Target maps, reference densities and the checks that relate them.

A :class:`DiffeoSpec` is evaluated on batches: ``eval`` maps an ``(N, n)``
array to ``(N, n)`` and ``jacobian`` maps it to ``(N, n, n)``. Calling the
map object directly also accepts a single point.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import lti, matops
from .config import DEFAULT_TOL, Tolerances

KINDS = ("affine", "gradient-of-convex", "composed", "custom")
DEFAULT_BOX = 3.0


def _batch(x, n):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != n:
        raise ValueError(f"expected points of dimension {n}, got {x.shape[-1]}")
    return x, single


@dataclass(frozen=True, eq=False)
class DiffeoSpec:
    dim: int
    eval: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    jacobian: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    kind: str = "custom"
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown diffeo kind {self.kind!r}")

    def __call__(self, x):
        x, single = _batch(x, self.dim)
        y = self.eval(x)
        return y[0] if single else y

    def jac(self, x):
        x, single = _batch(x, self.dim)
        J = self.jacobian(x)
        return J[0] if single else J


# -- constructors ------------------------------------------------------------

def identity(n):
    return DiffeoSpec(n, lambda x: x.copy(),
                      lambda x: np.broadcast_to(np.eye(n), (len(x), n, n)).copy(),
                      "gradient-of-convex", "identity")


def affine(M, c=None, name="affine"):
    """``x -> M x + c``."""
    M = matops.as_matrix(M, "affine matrix")
    n = M.shape[0]
    if M.shape[1] != n:
        raise ValueError("affine matrix must be square")
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float).reshape(n)
    return DiffeoSpec(n, lambda x: x @ M.T + c,
                      lambda x: np.broadcast_to(M, (len(x), n, n)).copy(),
                      "affine", name)


def translation(c):
    c = np.asarray(c, dtype=float).ravel()
    return affine(np.eye(c.size), c, name="translation")


def gradient_of_convex(n, grad, hess, name="gradient"):
    """Map given as the gradient of a user-supplied convex potential."""
    return DiffeoSpec(n, grad, hess, "gradient-of-convex", name)


def quadratic_potential(Q, b=None):
    """Gradient of ``x^T Q x / 2 + b^T x`` for symmetric PSD ``Q``."""
    Q = matops.as_matrix(Q, "Q")
    if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
        raise ValueError("Q must be symmetric")
    spec = affine(Q, b)
    return DiffeoSpec(spec.dim, spec.eval, spec.jacobian, "gradient-of-convex",
                      "quadratic_potential")


def tanh_monotone(n, alpha=0.5, scale=1.0):
    """Coordinatewise ``z -> z + alpha * tanh(scale * z) / scale``.

    This is the gradient of ``sum(z^2/2 + alpha * log cosh(scale z) / scale^2)``,
    convex and a diffeomorphism for ``|alpha| < 1``.
    """
    if not abs(alpha) < 1:
        raise ValueError("tanh_monotone needs |alpha| < 1")
    if scale <= 0:
        raise ValueError("scale must be positive")

    def f(x):
        return x + alpha * np.tanh(scale * x) / scale

    def jac(x):
        d = 1.0 + alpha / np.cosh(scale * x) ** 2
        J = np.zeros(x.shape + (n,))
        idx = np.arange(n)
        J[:, idx, idx] = d
        return J

    return DiffeoSpec(n, f, jac, "gradient-of-convex", "tanh_monotone")


def compose(outer, inner):
    """``outer o inner`` with the chain-rule Jacobian."""
    if outer.dim != inner.dim:
        raise ValueError("dimension mismatch in composition")

    def f(x):
        return outer.eval(inner.eval(x))

    def jac(x):
        return outer.jacobian(inner.eval(x)) @ inner.jacobian(x)

    return DiffeoSpec(inner.dim, f, jac, "composed",
                      f"{outer.name or 'map'}∘{inner.name or 'map'}")


def linear_conjugate(psi, left, right, name="conjugate"):
    """``x -> left @ psi(right @ x)``."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)

    def f(x):
        return psi.eval(x @ right.T) @ left.T

    def jac(x):
        return left @ psi.jacobian(x @ right.T) @ right

    return DiffeoSpec(psi.dim, f, jac, "composed", name)


def fd_jacobian(psi, x, h=1e-6):
    """Central finite-difference Jacobian at a batch of points (cross-check only)."""
    x, _ = _batch(x, psi.dim)
    J = np.empty(x.shape + (psi.dim,))
    for j in range(psi.dim):
        e = np.zeros(psi.dim)
        e[j] = h
        J[:, :, j] = (psi.eval(x + e) - psi.eval(x - e)) / (2 * h)
    return J


# -- densities ---------------------------------------------------------------

def substream(seed, stream=0):
    """Independent generator for ``(seed, stream)``; stable across runs."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


@dataclass(frozen=True, eq=False)
class DensitySpec:
    dim: int
    log_density: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sampler: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)
    kind: str = "custom"
    params: dict = field(default_factory=dict, repr=False)

    def sample(self, N, seed, stream=0):
        return self.sampler(substream(seed, stream), N)

    def pdf(self, x):
        x, single = _batch(x, self.dim)
        p = np.exp(self.log_density(x))
        return p[0] if single else p


def _gauss_logpdf(x, mean, cov):
    n = mean.size
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (x - mean).T).T
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * np.sum(z * z, axis=1) - 0.5 * (n * np.log(2 * np.pi) + logdet)


def _check_spd(S, what):
    S = matops.as_matrix(S, what)
    if S.shape[0] != S.shape[1] or np.max(np.abs(S - S.T)) > 1e-12 * max(1.0, np.abs(S).max()):
        raise ValueError(f"{what} must be a symmetric matrix")
    if np.linalg.eigvalsh(S)[0] <= 0:
        raise matops.NotPSDError(f"{what} is not positive definite")
    return matops.symmetrize(S)


def gaussian(mean, cov):
    mean = np.asarray(mean, dtype=float).ravel()
    cov = _check_spd(np.atleast_2d(cov), "covariance")
    if cov.shape[0] != mean.size:
        raise ValueError("mean / covariance dimension mismatch")
    L = np.linalg.cholesky(cov)

    def sampler(rng, N):
        return mean + rng.standard_normal((N, mean.size)) @ L.T

    return DensitySpec(mean.size, lambda x: _gauss_logpdf(x, mean, cov), sampler,
                       "gaussian", {"mean": mean, "cov": cov})


def standard_gaussian(n):
    return gaussian(np.zeros(n), np.eye(n))


def mixture(weights, means, covs):
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("mixture weights must be positive")
    w = w / w.sum()
    comps = [gaussian(m, c) for m, c in zip(means, covs)]
    if len(comps) != w.size or len({c.dim for c in comps}) != 1:
        raise ValueError("inconsistent mixture components")
    n = comps[0].dim

    def logpdf(x):
        terms = np.stack([np.log(wk) + c.log_density(x) for wk, c in zip(w, comps)])
        top = terms.max(axis=0)
        return top + np.log(np.exp(terms - top).sum(axis=0))

    def sampler(rng, N):
        labels = rng.choice(w.size, size=N, p=w)
        z = rng.standard_normal((N, n))
        out = np.empty((N, n))
        for k, c in enumerate(comps):
            sel = labels == k
            out[sel] = c.params["mean"] + z[sel] @ np.linalg.cholesky(c.params["cov"]).T
        return out

    return DensitySpec(n, logpdf, sampler, "mixture",
                       {"weights": w, "means": [c.params["mean"] for c in comps],
                        "covs": [c.params["cov"] for c in comps]})


# -- the whitened-coordinates transform --------------------------------------

@dataclass(frozen=True, eq=False)
class Whitening:
    """``W(0,T)``, its square roots and ``exp(-+A T)`` for one (system, horizon)."""

    WT: np.ndarray
    sqrt: np.ndarray
    sqrt_inv: np.ndarray
    exp_neg: np.ndarray      # exp(-A T)
    exp_pos: np.ndarray      # exp(A T)


def whitening(sys, T, tol: Tolerances = DEFAULT_TOL):
    if T <= 0:
        raise ValueError("T must be positive")
    lti.require_controllable(sys, tol.rank)
    WT = lti.gramian(sys, T)
    if matops.min_eig(WT) <= 0:
        raise np.linalg.LinAlgError("W(0,T) is singular")
    return Whitening(WT, matops.spd_sqrt(WT, tol), matops.spd_sqrt(WT, tol, inverse=True),
                     matops.expm(-sys.A * T), matops.expm(sys.A * T))


def hat_transform(psi, sys, T, tol: Tolerances = DEFAULT_TOL, white=None):
    """``x -> W^{-1/2} exp(-A T) psi(W^{1/2} x)`` with ``W = W(0, T)``."""
    if psi.dim != sys.n:
        raise ValueError("map and system dimensions differ")
    wh = white or whitening(sys, T, tol)
    return linear_conjugate(psi, wh.sqrt_inv @ wh.exp_neg, wh.sqrt, "psihat")


def inverse_hat_transform(psihat, sys, T, tol: Tolerances = DEFAULT_TOL, white=None):
    """``x -> exp(A T) W^{1/2} psihat(W^{-1/2} x)``; inverse of :func:`hat_transform`."""
    if psihat.dim != sys.n:
        raise ValueError("map and system dimensions differ")
    wh = white or whitening(sys, T, tol)
    return linear_conjugate(psihat, wh.exp_pos @ wh.sqrt, wh.sqrt_inv, "psi")


# -- checks --------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityVerdict:
    """Sampled certificate (not a proof) of monotonicity."""

    monotone: bool
    witness: Optional[tuple]
    min_pairing: float
    min_sym_jac_eig: float
    min_jac_det: float

    @property
    def orientation_preserving(self):
        return self.min_jac_det > 0


def _box(region, n):
    if region is None:
        lo, hi = -DEFAULT_BOX * np.ones(n), DEFAULT_BOX * np.ones(n)
    else:
        lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in region)
    if np.any(hi <= lo):
        raise ValueError("empty region")
    return lo, hi


def monotonicity_certificate(psi, region=None, n_samples=400, seed=0,
                             tol: Tolerances = DEFAULT_TOL):
    """Check ``<x - y, psi(x) - psi(y)> >= 0`` and ``sym(D psi) >= 0`` on samples.

    ``region`` is ``(lo, hi)`` for an axis-aligned box; the default is
    ``[-3, 3]^n``. Pairings are taken over all sampled pairs.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    lo, hi = _box(region, psi.dim)
    X = lo + (hi - lo) * substream(seed).random((n_samples, psi.dim))
    Y = psi.eval(X)

    iu, ju = np.triu_indices(n_samples, k=1)
    pair = np.einsum("kd,kd->k", X[iu] - X[ju], Y[iu] - Y[ju])
    k = int(np.argmin(pair))
    min_pairing = float(pair[k])

    J = psi.jacobian(X)
    sym = 0.5 * (J + np.swapaxes(J, 1, 2))
    min_eig = float(np.linalg.eigvalsh(sym)[:, 0].min())
    min_det = float(np.linalg.det(J).min())

    monotone = min_pairing >= -tol.monotone and min_eig >= -tol.monotone
    witness = None if monotone else (X[iu[k]].copy(), X[ju[k]].copy())
    return MonotonicityVerdict(monotone, witness, min_pairing, min_eig, min_det)


def jacobian_consistency(psi, points, h=1e-6):
    """Max abs gap between ``psi.jacobian`` and a central finite difference."""
    return float(np.max(np.abs(psi.jac(np.atleast_2d(points)) - fd_jacobian(psi, points, h))))


def monge_ampere_residual(psi, rho0, rho1, points):
    """``max |det D psi(x) rho1(psi(x)) - rho0(x)| / rho0(x)`` over ``points``."""
    x, _ = _batch(points, psi.dim)
    y = psi.eval(x)
    log1 = rho1.log_density(y)
    bad = ~np.isfinite(log1)
    if np.any(bad):
        raise ValueError(f"target density vanishes at psi(x) for x = {x[np.argmax(bad)]}")
    det = np.linalg.det(psi.jacobian(x))
    ratio = det * np.exp(log1 - rho0.log_density(x))
    return float(np.max(np.abs(ratio - 1.0)))


def brenier_gaussian(mu0, S0, mu1, S1):
    """Optimal (quadratic-cost) affine map from N(mu0, S0) to N(mu1, S1)."""
    S0 = _check_spd(np.atleast_2d(S0), "S0")
    S1 = _check_spd(np.atleast_2d(S1), "S1")
    mu0 = np.asarray(mu0, dtype=float).ravel()
    mu1 = np.asarray(mu1, dtype=float).ravel()
    if not (S0.shape == S1.shape and mu0.size == mu1.size == S0.shape[0]):
        raise ValueError("dimension mismatch")
    r0 = matops.spd_sqrt(S0)
    r0i = matops.spd_sqrt(S0, inverse=True)
    M = matops.symmetrize(r0i @ matops.spd_sqrt(matops.symmetrize(r0 @ S1 @ r0)) @ r0i)
    spec = affine(M, mu1 - M @ mu0)
    return DiffeoSpec(spec.dim, spec.eval, spec.jacobian, "gradient-of-convex",
                      "brenier_gaussian")
