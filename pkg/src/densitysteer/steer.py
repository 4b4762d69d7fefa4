"""Open-loop and feedback transfer ``x0 -> psi(x0)`` for a controllable LTI plant.

For horizon ``T`` the minimum-energy open-loop input is

    u_x0(t) = B^T exp(-A^T t) W(0,T)^{-1} (exp(-A T) psi(x0) - x0)

and the state it produces at time ``t`` is ``K_t(x0)``. The feedback law
evaluates the same input at ``x0 = K_t^{-1}(x)``; this module owns that
inversion (damped Newton, with a strongly monotone fixed-point fallback).
"""

import threading
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import diffeo, lti, matops
from .config import DEFAULT_TOL, Tolerances


class InversionError(RuntimeError):
    """``K_t`` could not be inverted to tolerance."""

    def __init__(self, t, residual, x):
        self.t, self.residual, self.x = t, residual, x
        super().__init__(f"K_t inversion failed at t={t:.6g}: residual {residual:.3e}")


class UncertifiedPlanWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Stage:
    """Time-``t`` matrices shared by every particle."""

    t: float
    exp_pos: np.ndarray     # exp(A t)
    exp_neg: np.ndarray     # exp(-A t)
    W: np.ndarray           # W(0, t)
    M: np.ndarray           # W(0, t) W(0, T)^{-1}
    gain: np.ndarray        # (exp(-A t) B)^T W(0,T)^{-1}, maps the transfer residual to u


@dataclass(frozen=True, eq=False)
class SteeringPlan:
    system: lti.LtiSystem
    horizon: float
    psi: diffeo.DiffeoSpec
    psihat: diffeo.DiffeoSpec
    WT: np.ndarray
    WT_sqrt: np.ndarray
    WT_sqrt_inv: np.ndarray
    WT_inv: np.ndarray
    exp_neg_T: np.ndarray
    monotone_certified: bool
    verdict: diffeo.MonotonicityVerdict
    tol: Tolerances = DEFAULT_TOL
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n(self):
        return self.system.n

    def stage(self, t):
        t = float(t)
        with self._lock:
            st = self._cache.get(t)
        if st is not None:
            return st
        sys = self.system
        W = lti.gramian(sys, t)
        exp_neg = matops.expm(-sys.A * t)
        st = Stage(t, matops.expm(sys.A * t), exp_neg, W, W @ self.WT_inv,
                   (exp_neg @ sys.B).T @ self.WT_inv)
        with self._lock:
            self._cache.setdefault(t, st)
        return st


def make_plan(sys, T, psi, tol: Tolerances = DEFAULT_TOL, certify_samples=400, seed=0):
    """Precompute everything the feedback law needs.

    The plan is returned even when the monotonicity certificate on ``psihat``
    fails; ``monotone_certified`` is then False and a warning is issued.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if psi.dim != sys.n:
        raise ValueError(f"map dimension {psi.dim} != state dimension {sys.n}")
    wh = diffeo.whitening(sys, T, tol)
    psihat = diffeo.hat_transform(psi, sys, T, tol, white=wh)
    verdict = diffeo.monotonicity_certificate(psihat, n_samples=certify_samples,
                                              seed=seed, tol=tol)
    if not verdict.monotone:
        warnings.warn("psihat failed the monotonicity certificate; feedback "
                      "inversion may fail", UncertifiedPlanWarning, stacklevel=2)
    return SteeringPlan(sys, float(T), psi, psihat, wh.WT, wh.sqrt, wh.sqrt_inv,
                        matops.spd_inv(wh.WT), wh.exp_neg, verdict.monotone, verdict, tol)


def plan_from_psihat(sys, T, psihat, **kw):
    """Plan for the ``psi`` whose whitened form is ``psihat``."""
    psi = diffeo.inverse_hat_transform(psihat, sys, T, kw.get("tol", DEFAULT_TOL))
    return make_plan(sys, T, psi, **kw)


def _check_time(plan, t, closed=True):
    T = plan.horizon
    ok = 0 <= t <= T if closed else 0 <= t < T
    if not ok:
        raise ValueError(f"t={t} outside [0, {T}{']' if closed else ')'}")


def _points(plan, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != plan.n:
        raise ValueError(f"points must have dimension {plan.n}")
    return x, single


def _transfer(plan, x0):
    """``exp(-A T) psi(x0) - x0``, row-wise."""
    return plan.psi.eval(x0) @ plan.exp_neg_T.T - x0


def _k(plan, st, x0):
    return (x0 + _transfer(plan, x0) @ st.M.T) @ st.exp_pos.T


def _dk(plan, st, x0):
    n = plan.n
    inner = (np.eye(n) - st.M) + (st.M @ plan.exp_neg_T) @ plan.psi.jacobian(x0)
    return st.exp_pos @ inner


def _input(plan, st, x0):
    return _transfer(plan, x0) @ st.gain.T


def open_loop_control(plan, x0, t):
    """Minimum-energy input at time ``t`` for initial state(s) ``x0``."""
    _check_time(plan, t)
    x0, single = _points(plan, x0)
    u = _input(plan, plan.stage(t), x0)
    return u[0] if single else u


def k_map(plan, t, x0):
    """State at time ``t`` reached from ``x0`` under the open-loop input."""
    _check_time(plan, t)
    x0, single = _points(plan, x0)
    y = _k(plan, plan.stage(t), x0)
    return y[0] if single else y


def k_map_jacobian(plan, t, x0):
    _check_time(plan, t)
    x0, single = _points(plan, x0)
    J = _dk(plan, plan.stage(t), x0)
    return J[0] if single else J


class InversionResult(NamedTuple):
    x0: np.ndarray
    converged: np.ndarray
    residual: np.ndarray
    iterations: int


def _residual(plan, st, x0, x):
    return np.linalg.norm(_k(plan, st, x0) - x, axis=1)


def _newton(plan, st, x, x0, tol):
    scale = 1.0 + np.linalg.norm(x, axis=1)
    G = _k(plan, st, x0) - x
    res = np.linalg.norm(G, axis=1)
    done = res <= tol.newton_tol * scale
    stalled = np.zeros(len(x), dtype=bool)
    it = 0
    while it < tol.newton_max_iter and not np.all(done | stalled):
        it += 1
        act = np.flatnonzero(~(done | stalled))
        try:
            d = -np.linalg.solve(_dk(plan, st, x0[act]), G[act][..., None])[..., 0]
        except np.linalg.LinAlgError:
            d = np.stack([_safe_solve(J, -g) for J, g in
                          zip(_dk(plan, st, x0[act]), G[act])])
        lam = np.ones(len(act))
        pending = np.ones(len(act), dtype=bool)
        for _ in range(40):
            idx = np.flatnonzero(pending)
            trial = x0[act[idx]] + lam[idx, None] * d[idx]
            G_trial = _k(plan, st, trial) - x[act[idx]]
            r_trial = np.linalg.norm(G_trial, axis=1)
            ok = r_trial ** 2 <= (1.0 - 2e-4 * lam[idx]) * res[act[idx]] ** 2
            ok |= r_trial <= tol.newton_tol * scale[act[idx]]
            acc = idx[ok]
            x0[act[acc]] = trial[ok]
            G[act[acc]] = G_trial[ok]
            res[act[acc]] = r_trial[ok]
            pending[acc] = False
            if not pending.any():
                break
            lam[pending] *= 0.5
        stalled[act[pending]] = True
        done = res <= tol.newton_tol * scale
    if tol.newton_polish and done.any():
        # one undamped step past the tolerance; keep it only where it helps
        idx = np.flatnonzero(done & (res > 0))
        if len(idx):
            d = -np.linalg.solve(_dk(plan, st, x0[idx]), G[idx][..., None])[..., 0]
            trial = x0[idx] + d
            r_trial = np.linalg.norm(_k(plan, st, trial) - x[idx], axis=1)
            better = r_trial < res[idx]
            x0[idx[better]] = trial[better]
            res[idx[better]] = r_trial[better]
    return x0, done, res, it


def _safe_solve(J, g):
    try:
        return np.linalg.solve(J, g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(J, g, rcond=None)[0]


def _fixed_point(plan, st, x, x0, tol):
    """Forward-backward iteration on the strongly monotone whitened equation.

    With ``x0 = W_T^{1/2} z`` the root-find ``K_t(x0) = x`` becomes
    ``P z + psihat(z) = b`` where ``P = W_T^{1/2} W_t^{-1} W_T^{1/2} - I`` is
    positive definite for ``t < T``. Each step is explicit in ``psihat`` and
    exact in ``P``; it contracts whenever ``psihat`` is monotone.
    """
    lam, Q = np.linalg.eigh(matops.symmetrize(
        plan.WT_sqrt @ matops.spd_inv(st.W) @ plan.WT_sqrt - np.eye(plan.n)))
    p = max(float(lam[0]), 0.0)
    b = x @ (plan.WT_sqrt @ np.linalg.solve(st.W, st.exp_neg)).T
    z = x0 @ plan.WT_sqrt_inv.T
    scale = 1.0 + np.linalg.norm(x, axis=1)
    res = _residual(plan, st, x0, x)
    for it in range(tol.fallback_max_iter):
        if it % 10 == 0:
            res = _residual(plan, st, z @ plan.WT_sqrt.T, x)
            if np.all(res <= tol.newton_tol * scale):
                break
        J = plan.psihat.jacobian(z)
        mu = np.clip(np.linalg.eigvalsh(0.5 * (J + np.swapaxes(J, 1, 2)))[:, 0], 0.0, None)
        L = np.linalg.norm(J, ord=2, axis=(1, 2))
        gam = (mu + p) / np.maximum(L ** 2, (mu + p) * 1e-300 + 1e-300)
        y = (z - gam[:, None] * (plan.psihat.eval(z) - b)) @ Q
        z = (y / (1.0 + gam[:, None] * lam)) @ Q.T
    x0 = z @ plan.WT_sqrt.T
    res = _residual(plan, st, x0, x)
    return x0, res <= tol.newton_tol * scale, res


def invert_batch(plan, t, x, x0_guess=None):
    """Solve ``K_t(x0) = x`` row-wise without raising.

    Starts from ``x0_guess`` when given, else from ``exp(-A t) x``. Rows that
    Newton cannot finish are handed to the fixed-point fallback.
    """
    x, _ = _points(plan, x)
    st = plan.stage(t)
    tol = plan.tol
    if t == 0:
        return InversionResult(x.copy(), np.ones(len(x), bool), np.zeros(len(x)), 0)
    x0 = (x @ st.exp_neg.T) if x0_guess is None else np.array(x0_guess, dtype=float)
    x0, ok, res, it = _newton(plan, st, x, x0, tol)
    if not ok.all() and t < plan.horizon:
        bad = np.flatnonzero(~ok)
        xb, okb, resb = _fixed_point(plan, st, x[bad], x0[bad], tol)
        finite = np.all(np.isfinite(xb), axis=1)
        x0[bad[finite]] = xb[finite]
        ok[bad] = okb & finite
        res[bad] = np.where(finite, resb, np.inf)
    return InversionResult(x0, ok, res, it)


def k_map_inverse(plan, t, x, x0_guess=None):
    """``K_t^{-1}(x)`` for ``0 <= t < T``; raises :class:`InversionError`."""
    _check_time(plan, t, closed=False)
    if not plan.monotone_certified:
        warnings.warn("inverting K_t for an uncertified plan", UncertifiedPlanWarning,
                      stacklevel=2)
    xb, single = _points(plan, x)
    r = invert_batch(plan, t, xb, x0_guess)
    if not r.converged.all():
        i = int(np.argmax(~r.converged))
        raise InversionError(t, float(r.residual[i]), xb[i])
    return r.x0[0] if single else r.x0


def feedback_control(plan, t, x, x0_guess=None):
    """Feedback input ``u(t, x)``: the open-loop input of ``K_t^{-1}(x)``."""
    _check_time(plan, t, closed=False)
    xb, single = _points(plan, x)
    x0 = np.atleast_2d(k_map_inverse(plan, t, xb, x0_guess))
    u = _input(plan, plan.stage(t), x0)
    return u[0] if single else u


@dataclass(frozen=True)
class InjectivityReport:
    n_pairs: int
    min_bilinear: float
    worst_pair: Optional[tuple]      # (x0, y0, t)
    skipped_times: tuple = ()


def injectivity_probe(plan, n_pairs, times, seed=0, region=None, chunk=20000):
    """Sample ``<x0 - y0, W_t^{-1} exp(-A t) (K_t x0 - K_t y0)>``.

    Pairs are drawn uniformly from ``region`` (default ``[-3, 3]^n``). Times
    outside ``(0, T)`` or below ``probe_t_min * T`` are skipped and listed.
    """
    T = plan.horizon
    lo, hi = diffeo._box(region, plan.n)
    rng = diffeo.substream(seed, 1)
    X = lo + (hi - lo) * rng.random((n_pairs, plan.n))
    Y = lo + (hi - lo) * rng.random((n_pairs, plan.n))
    close = np.linalg.norm(X - Y, axis=1) < 1e-8
    while close.any():
        Y[close] = lo + (hi - lo) * rng.random((int(close.sum()), plan.n))
        close = np.linalg.norm(X - Y, axis=1) < 1e-8

    best, worst, skipped = np.inf, None, []
    for t in times:
        t = float(t)
        if not (plan.tol.probe_t_min * T <= t < T):
            skipped.append(t)
            continue
        st = plan.stage(t)
        Q = np.linalg.solve(st.W, st.exp_neg)
        for s in range(0, n_pairs, chunk):
            x, y = X[s:s + chunk], Y[s:s + chunk]
            form = np.einsum("kd,kd->k", x - y, (_k(plan, st, x) - _k(plan, st, y)) @ Q.T)
            k = int(np.argmin(form))
            if form[k] < best:
                best, worst = float(form[k]), (x[k].copy(), y[k].copy(), t)
    return InjectivityReport(n_pairs, best, worst, tuple(skipped))


class DiagnosticRow(NamedTuple):
    t: float
    norm: float
    radius: float
    whitened_norm: float


def norm_vs_radius_diagnostic(plan, grid):
    """Norm and spectral radius of ``W(0,t) W(0,T)^{-1}`` on ``grid``.

    ``whitened_norm`` is ``|W_T^{-1/2} W_t W_T^{-1/2}|``, which is at most one.
    """
    rows = []
    for t in grid:
        _check_time(plan, t)
        st = plan.stage(t)
        norm, radius = matops.norm_and_radius(st.M)
        wn = np.linalg.norm(plan.WT_sqrt_inv @ st.W @ plan.WT_sqrt_inv, 2)
        rows.append(DiagnosticRow(float(t), norm, radius, float(wn)))
    return rows
