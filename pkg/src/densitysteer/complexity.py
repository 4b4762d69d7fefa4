"""Switching-count bounds for implementing diffeomorphisms by switched flows.

For a compact ``n``-manifold embedded in ``R^d`` with reach ``tau`` and a
resolution ``0 < r < tau``, with ``c = vol(M) / vol(B^n)``:

    N_low  = c * n * 16^{-n} * r^{-n}       (covering number, lower)
    N_high = c * n * (pi/2)^n * r^{-n}      (covering number, upper)
    k_low  = c * n^2 * 16^{-n} * r^{-n}     (flows per fragment)

A :class:`FlowProgram` is a finite composition ``exp(a_K f_{i_K}) o ... o
exp(a_1 f_{i_1})`` of rescaled generator flows, each run for unit time.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import DEFAULT_TOL
from .matops import as_matrix


# -- manifolds and bounds ------------------------------------------------------

def unit_ball_volume(n):
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_volume(n):
    """Surface measure of the unit ``n``-sphere in ``R^{n+1}``."""
    return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


@dataclass(frozen=True)
class ManifoldSpec:
    intrinsic_dim: int
    ambient_dim: int
    volume: float
    reach: float
    name: str = ""
    c1_bound: float = float("nan")   # C^1 bound of the generating fields; metadata only

    def __post_init__(self):
        if not (self.ambient_dim > self.intrinsic_dim >= 1):
            raise ValueError("need ambient_dim > intrinsic_dim >= 1")
        for what, v in (("volume", self.volume), ("reach", self.reach)):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{what} must be finite and positive")


def sphere(n):
    """Unit ``S^n`` in ``R^{n+1}``; reach 1."""
    return ManifoldSpec(n, n + 1, sphere_volume(n), 1.0, f"S{n}")


def flat_torus():
    """``S^1 x S^1`` in ``R^4`` with unit circles; reach 1, area ``4 pi^2``."""
    return ManifoldSpec(2, 4, 4 * math.pi ** 2, 1.0, "T2")


def catalog(name):
    """Look up ``S1``, ``S2``, ``S<n>`` or ``T2`` (case-insensitive)."""
    key = name.strip().upper()
    if key in ("T2", "TORUS", "FLAT_TORUS"):
        return flat_torus()
    if key.startswith("S") and key[1:].isdigit() and int(key[1:]) >= 1:
        return sphere(int(key[1:]))
    raise KeyError(f"unknown manifold {name!r}; try S1, S2, S<n>, T2")


def _check_r(m, r):
    if not (0 < r < m.reach):
        raise ValueError(f"resolution r={r} must satisfy 0 < r < reach={m.reach}")


def _base(m, r):
    _check_r(m, r)
    n = m.intrinsic_dim
    return m.volume / unit_ball_volume(n) * r ** (-n), n


def covering_bounds(m, r):
    """``(N_low, N_high)`` for the covering number at resolution ``r``."""
    c, n = _base(m, r)
    return c * n * 16.0 ** (-n), c * n * (math.pi / 2) ** n


def switching_lower_bound(m, r):
    """Lower bound on the flows-per-fragment count ``k`` (real valued)."""
    c, n = _base(m, r)
    return c * n * n * 16.0 ** (-n)


@dataclass(frozen=True)
class ComplexityReport:
    manifold: str
    r: float
    N_low: float
    N_high: float
    k_low: float
    K_estimate: int
    log10_k_low: float     # the exponential-in-n growth is easier to read here


def complexity_report(m, r, k_per_fragment):
    """Aggregate bounds; ``K_estimate = k_per_fragment * ceil(N_low)``."""
    if k_per_fragment < m.intrinsic_dim:
        raise ValueError(f"k_per_fragment={k_per_fragment} < n={m.intrinsic_dim}")
    lo, hi = covering_bounds(m, r)
    k = switching_lower_bound(m, r)
    return ComplexityReport(m.name, float(r), lo, hi, k,
                            int(k_per_fragment) * math.ceil(lo), math.log10(k))


# -- switched-flow programs ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class VectorField:
    """Autonomous field evaluated on ``(N, n)`` batches."""

    dim: int
    eval: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    name: str = ""


def linear_field(M):
    M = as_matrix(M, "field matrix")
    if M.shape[0] != M.shape[1]:
        raise ValueError("linear field needs a square matrix")
    return VectorField(M.shape[0], lambda x: x @ M.T, "linear")


def angle_field():
    """``d/dtheta`` on ``S^1`` in the angle chart."""
    return VectorField(1, np.ones_like, "dtheta")


@dataclass(frozen=True, eq=False)
class Scaling:
    """Smooth scalar function ``a(x)`` on ``(N, n)`` batches."""

    eval: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    name: str = ""


def constant(c):
    c = float(c)
    return Scaling(lambda x: np.full(len(x), c), f"const({c:g})")


def affine_scaling(c, g):
    g = np.asarray(g, dtype=float).ravel()
    return Scaling(lambda x: float(c) + x @ g, "affine")


@dataclass(frozen=True, eq=False)
class FlowProgram:
    generators: Sequence[VectorField]
    steps: Sequence[tuple]           # (Scaling, generator index), applied first to last

    def __post_init__(self):
        dims = {f.dim for f in self.generators}
        if len(dims) > 1:
            raise ValueError("generators have different dimensions")
        for a, i in self.steps:
            if not (0 <= i < len(self.generators)):
                raise ValueError(f"generator index {i} out of range")

    @property
    def dim(self):
        return self.generators[0].dim

    def __len__(self):
        return len(self.steps)


class FlowBlowup(RuntimeError):
    def __init__(self, step_index):
        self.step_index = step_index
        super().__init__(f"trajectory blew up during program step {step_index}")


def _rk4_unit(rhs, x, substeps, k_index, blowup):
    h = 1.0 / substeps
    for _ in range(substeps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > blowup:
            raise FlowBlowup(k_index)
    return x


def flow_program_apply(prog, x, substeps=100):
    """Image of ``x`` under the composed flows (RK4, ``substeps`` per unit time)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x).copy()
    for k, (a, i) in enumerate(prog.steps):
        f = prog.generators[i]
        x = _rk4_unit(lambda y: a.eval(y)[:, None] * f.eval(y), x, substeps, k,
                      DEFAULT_TOL.blowup)
    return x[0] if single else x


@dataclass(frozen=True, eq=False)
class Schedule:
    """Piecewise-constant-in-time feedback for ``x' = sum_i u_i(t, x) f_i(x)``.

    Piece ``k`` is active on ``[k, k+1)`` and drives channel ``channels[k]``
    with gain ``scalings[k](x)``; every other channel is zero.
    """

    generators: Sequence[VectorField]
    channels: tuple
    scalings: tuple
    m_controls: int

    @property
    def switching_count(self):
        return len(self.channels)

    @property
    def total_time(self):
        return float(len(self.channels))

    def control(self, t, x):
        """``u(t, x)``, shape ``(N, m_controls)``."""
        x = np.atleast_2d(x)
        u = np.zeros((len(x), self.m_controls))
        k = min(int(math.floor(t)), len(self.channels) - 1)
        if 0 <= t <= self.total_time and k >= 0:
            u[:, self.channels[k]] = self.scalings[k].eval(x)
        return u


def flow_program_to_schedule(prog, m_controls):
    for _, i in prog.steps:
        if i >= m_controls:
            raise ValueError(f"generator index {i} >= m_controls={m_controls}")
    if len(prog.generators) > m_controls:
        raise ValueError("more generators than control channels")
    return Schedule(tuple(prog.generators), tuple(i for _, i in prog.steps),
                    tuple(a for a, _ in prog.steps), int(m_controls))


def simulate_schedule(sched, x, substeps=100):
    """Integrate the control-affine system under ``sched`` over ``[0, K]``.

    Each unit interval is integrated separately so no RK4 stage straddles a
    switching time.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    h = 1.0 / substeps

    for k in range(sched.switching_count):
        def rhs(t, y):
            u = sched.control(t, y)
            out = np.zeros_like(y)
            for j, f in enumerate(sched.generators):
                if np.any(u[:, j]):
                    out += u[:, j:j + 1] * f.eval(y)
            return out

        for s in range(substeps):
            t = k + s * h
            # stage times stay inside [k, k+1) so the active piece never changes
            tm, te = t + 0.5 * h, min(t + h, k + 1 - 1e-12)
            k1 = rhs(t, x)
            k2 = rhs(tm, x + 0.5 * h * k1)
            k3 = rhs(tm, x + 0.5 * h * k2)
            k4 = rhs(te, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x
