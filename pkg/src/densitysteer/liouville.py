"""Particle (characteristics) simulation of density transport under feedback.

A density is carried by a weighted ensemble; each particle is integrated
under ``x' = A x + B u(t, x)`` with fixed-step RK4. Particles are split into
fixed-size blocks so the result does not depend on the worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import steer

BLOCK = 1024


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    weights: np.ndarray
    seed: int = 0
    source: str = ""

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(pos) < 1:
            raise ValueError("ensemble needs at least one particle")
        if w.size != len(pos) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per particle")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def size(self):
        return len(self.positions)

    def pushforward(self, psi):
        return ParticleEnsemble(psi.eval(self.positions), self.weights, self.seed,
                                f"{psi.name or 'map'}#{self.source}")


def sample_ensemble(rho, N, seed):
    """``N`` i.i.d. draws from ``rho`` with uniform weights."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return ParticleEnsemble(rho.sample(N, seed), np.full(N, 1.0 / N), int(seed), rho.kind)


@dataclass(frozen=True, eq=False)
class TrajectoryBundle:
    times: np.ndarray            # recorded nodes, strictly increasing, 0 .. T
    states: np.ndarray           # (N, len(times), n); NaN after a particle is aborted
    controls: np.ndarray         # (N, len(times), m)
    weights: np.ndarray
    flagged: np.ndarray          # (N,) inversion failures
    plan: "steer.SteeringPlan" = field(repr=False)
    step: float = 0.0

    @property
    def initial(self):
        return self.states[:, 0]

    @property
    def terminal(self):
        return self.states[:, -1]

    def terminal_ensemble(self):
        ok = ~self.flagged
        w = self.weights[ok]
        return ParticleEnsemble(self.terminal[ok], w / w.sum())


def _stage_times(T, n_steps, cap):
    h = T / n_steps
    t_end = T - cap
    return [(k * h, min(k * h + 0.5 * h, t_end), min((k + 1) * h, t_end))
            for k in range(n_steps)]


def _integrate_block(plan, X0, schedule, h, rec_steps):
    A, B = plan.system.A, plan.system.B
    N, n, m = len(X0), plan.n, plan.system.m
    n_rec = len(rec_steps)
    states = np.full((N, n_rec, n), np.nan)
    controls = np.full((N, n_rec, m), np.nan)
    flagged = np.zeros(N, dtype=bool)
    x = X0.copy()
    comp = np.zeros_like(x)      # Kahan compensation for the state sum
    guess = X0.copy()
    alive = np.arange(N)
    rec_pos = {s: i for i, s in enumerate(rec_steps)}

    def rhs(t, xs, g):
        r = steer.invert_batch(plan, t, xs, g)
        u = steer._input(plan, plan.stage(t), r.x0)
        return xs @ A.T + u @ B.T, u, r.x0, r.converged

    n_steps = len(schedule)
    for k in range(n_steps + 1):
        if len(alive) == 0:
            break
        t0, t_mid, t1 = schedule[k] if k < n_steps else (schedule[-1][2],) * 3
        xa, ga = x[alive], guess[alive]
        k1, u1, g1, ok1 = rhs(t0, xa, ga)
        if k in rec_pos:
            states[alive, rec_pos[k]] = xa
            controls[alive, rec_pos[k]] = u1
        if k == n_steps:
            bad = ~ok1
        else:
            k2, _, g2, ok2 = rhs(t_mid, xa + 0.5 * h * k1, g1)
            k3, _, g3, ok3 = rhs(t_mid, xa + 0.5 * h * k2, g2)
            k4, _, g4, ok4 = rhs(t1, xa + h * k3, g3)
            incr = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4) - comp[alive]
            new = xa + incr
            comp[alive] = (new - xa) - incr
            x[alive] = new
            guess[alive] = g4
            bad = ~(ok1 & ok2 & ok3 & ok4)
        if bad.any():
            dead = alive[bad]
            flagged[dead] = True
            alive = alive[~bad]
    return states, controls, flagged


def simulate_closed_loop(plan, ens, step, threads=1, record_every=1, block=BLOCK):
    """Integrate every particle of ``ens`` under the plan's feedback law.

    The step is adjusted to ``T / round(T / step)`` so the grid lands on
    ``T``. States and controls are kept every ``record_every`` steps (the
    final node is always kept). Feedback on the last interval is evaluated
    at ``min(t, T - terminal_cap)``; with the default cap of zero the last
    stage inverts ``K_T = psi`` directly.
    """
    T = plan.horizon
    if step <= 0 or step > T / 10 + 1e-15:
        raise ValueError(f"step must lie in (0, T/10], got {step}")
    if ens.dim != plan.n:
        raise ValueError("ensemble and plan dimensions differ")
    n_steps = max(10, int(round(T / step)))
    h = T / n_steps
    schedule = _stage_times(T, n_steps, plan.tol.terminal_cap)
    for trio in schedule:
        for t in trio:
            plan.stage(t)
    rec_steps = sorted(set(range(0, n_steps + 1, max(1, int(record_every)))) | {n_steps})
    times = np.array([k * h for k in rec_steps])
    times[-1] = T

    X = ens.positions
    chunks = [X[s:s + block] for s in range(0, len(X), block)]
    work = lambda c: _integrate_block(plan, c, schedule, h, rec_steps)  # noqa: E731
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    states = np.concatenate([p[0] for p in parts])
    controls = np.concatenate([p[1] for p in parts])
    flagged = np.concatenate([p[2] for p in parts])
    return TrajectoryBundle(times, states, controls, ens.weights, flagged, plan, h)


@dataclass(frozen=True)
class EndpointStats:
    max: float
    mean: float
    per_particle: np.ndarray     # NaN where flagged
    n_flagged: int


def endpoint_error(bundle, psi):
    """``|x_i(T) - psi(x_i(0))|`` over particles that were not aborted."""
    ok = ~bundle.flagged
    err = np.full(len(ok), np.nan)
    if ok.any():
        err[ok] = np.linalg.norm(bundle.terminal[ok] - psi.eval(bundle.initial[ok]), axis=1)
        mx, mean = float(np.max(err[ok])), float(np.mean(err[ok]))
    else:
        mx = mean = float("nan")
    return EndpointStats(mx, mean, err, int((~ok).sum()))


def _weighted_mean_dist(X, wx, Y, wy, chunk=1024):
    total = 0.0
    for s in range(0, len(X), chunk):
        total += float(wx[s:s + chunk] @ (cdist(X[s:s + chunk], Y) @ wy))
    return total


def energy_distance(a, b):
    """``2 E|X - Y| - E|X - X'| - E|Y - Y'|`` for two weighted ensembles."""
    if a.dim != b.dim:
        raise ValueError("ensembles have different dimensions")
    xy = _weighted_mean_dist(a.positions, a.weights, b.positions, b.weights)
    xx = _weighted_mean_dist(a.positions, a.weights, a.positions, a.weights)
    yy = _weighted_mean_dist(b.positions, b.weights, b.positions, b.weights)
    return max(0.0, 2.0 * xy - xx - yy)


def transport_cost(bundle):
    """Trapezoidal estimate of ``1/2 int_0^T sum_i w_i |u_i(t)|^2 dt``."""
    ok = ~bundle.flagged
    w = bundle.weights[ok] / bundle.weights[ok].sum()
    power = np.einsum("i,itm->t", w, bundle.controls[ok] ** 2)
    return 0.5 * float(np.trapezoid(power, bundle.times))


def straight_line_check(bundle):
    """Max distance of ``x_i(t)`` from ``(1 - t/T) x_i(0) + (t/T) x_i(T)``.

    Only meaningful for the driftless, fully actuated plant ``A = 0, B = I``.
    """
    if not bundle.plan.system.is_driftless_identity():
        raise ValueError("straight_line_check requires A = 0 and B = I")
    ok = ~bundle.flagged
    s = (bundle.times / bundle.plan.horizon)[None, :, None]
    X = bundle.states[ok]
    interp = (1.0 - s) * X[:, :1] + s * X[:, -1:]
    return float(np.max(np.linalg.norm(X - interp, axis=2))) if ok.any() else float("nan")
