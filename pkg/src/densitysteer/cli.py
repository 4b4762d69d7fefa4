"""Scenario runner.

    densitysteer run CONFIG [--out DIR] [--seed N] [--threads N]
    densitysteer validate CONFIG
    densitysteer bounds --manifold NAME --r VALUE [--k K]

A config is a JSON object; see README.md for the schema. Exit status is 0
when every hard check passes, 1 when a hard check fails and 2 for invalid
input or a runtime error.
"""

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import __version__, complexity, diffeo, liouville, lti, steer
from .config import DEFAULT_TOL

SCENARIOS = ("steer", "benamou_brenier", "diagnostic", "complexity", "flow_program")
DIFFEO_KINDS = ("identity", "affine", "translation", "quadratic_potential", "tanh",
                "brenier_gaussian", "compose")
THREADS_ENV = "DENSITYSTEER_THREADS"


class ConfigError(ValueError):
    """Validation failure; ``errors`` is a list of ``(path, reason)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {r}" for p, r in self.errors))


@dataclass
class ScenarioConfig:
    kind: str
    raw: dict
    seed: int = 0
    system: Optional[lti.LtiSystem] = None
    horizon: float = 1.0
    psi: Optional[diffeo.DiffeoSpec] = None
    psi_space: str = "psi"
    density: Optional[diffeo.DensitySpec] = None
    ensemble_size: int = 0
    step: float = 1e-3
    record_every: int = 1
    threads: int = 1
    checks: dict = field(default_factory=dict)
    diagnostic: dict = field(default_factory=dict)
    manifold: Optional[complexity.ManifoldSpec] = None
    r: float = 0.0
    k_per_fragment: int = 0
    program: Optional[complexity.FlowProgram] = None
    program_points: Any = None
    m_controls: int = 0
    substeps: int = 100
    output: dict = field(default_factory=dict)


# -- validation ----------------------------------------------------------------

class _V:
    """Accumulates ``(path, reason)`` errors while reading a nested dict."""

    def __init__(self):
        self.errors = []

    def err(self, path, reason):
        self.errors.append((path, reason))

    def get(self, d, key, path, required=True, default=None):
        if not isinstance(d, dict):
            self.err(path, "expected an object")
            return default
        if key not in d:
            if required:
                self.err(f"{path}.{key}", "missing")
            return default
        return d[key]

    def number(self, d, key, path, required=True, default=None, positive=False,
               integer=False):
        v = self.get(d, key, path, required, default)
        p = f"{path}.{key}"
        if v is None or (v is default and not required):
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.err(p, "expected a finite number")
            return default
        if integer and int(v) != v:
            self.err(p, "expected an integer")
            return default
        if positive and v <= 0:
            self.err(p, "must be positive")
            return default
        return int(v) if integer else float(v)

    def array(self, d, key, path, ndim, required=True):
        v = self.get(d, key, path, required)
        if v is None:
            return None
        try:
            a = np.array(v, dtype=float)
        except (TypeError, ValueError):
            self.err(f"{path}.{key}", "expected a numeric array")
            return None
        if ndim == 2 and a.ndim == 1 and a.size:
            a = a.reshape(-1, 1)
        if a.ndim != ndim or not np.all(np.isfinite(a)):
            self.err(f"{path}.{key}", f"expected a finite {ndim}-D numeric array")
            return None
        return a


def _build_diffeo(v, d, path, n):
    kind = v.get(d, "kind", path)
    if kind is None:
        return None
    if kind not in DIFFEO_KINDS:
        v.err(f"{path}.kind", f"unknown diffeo kind {kind!r} (one of {', '.join(DIFFEO_KINDS)})")
        return None
    try:
        if kind == "identity":
            return diffeo.identity(n)
        if kind == "translation":
            c = v.array(d, "offset", path, 1)
            if c is None:
                return None
            if c.size != n:
                v.err(f"{path}.offset", f"expected length {n}, got {c.size}")
                return None
            return diffeo.translation(c)
        if kind in ("affine", "quadratic_potential"):
            key = "matrix" if kind == "affine" else "Q"
            M = v.array(d, key, path, 2)
            c = v.array(d, "offset", path, 1, required=False)
            if M is None:
                return None
            if M.shape != (n, n):
                v.err(f"{path}.{key}", f"expected shape ({n}, {n}), got {M.shape}")
                return None
            if c is not None and c.size != n:
                v.err(f"{path}.offset", f"expected length {n}")
                return None
            if kind == "affine":
                return diffeo.affine(M, c)
            return diffeo.quadratic_potential(M, c)
        if kind == "tanh":
            alpha = v.number(d, "alpha", path, required=False, default=0.5)
            scale = v.number(d, "scale", path, required=False, default=1.0, positive=True)
            if alpha is not None and not abs(alpha) < 1:
                v.err(f"{path}.alpha", "need |alpha| < 1")
                return None
            return diffeo.tanh_monotone(n, alpha, scale)
        if kind == "brenier_gaussian":
            mu0 = v.array(d, "mu0", path, 1, required=False)
            S0 = v.array(d, "S0", path, 2, required=False)
            mu1 = v.array(d, "mu1", path, 1)
            S1 = v.array(d, "S1", path, 2)
            if mu1 is None or S1 is None:
                return None
            mu0 = np.zeros(n) if mu0 is None else mu0
            S0 = np.eye(n) if S0 is None else S0
            if not (mu0.size == mu1.size == n and S0.shape == S1.shape == (n, n)):
                v.err(path, f"brenier_gaussian parameters must have dimension {n}")
                return None
            return diffeo.brenier_gaussian(mu0, S0, mu1, S1)
        maps = v.get(d, "maps", path)
        if not isinstance(maps, list) or not maps:
            v.err(f"{path}.maps", "expected a non-empty list (applied first to last)")
            return None
        parts = [_build_diffeo(v, m, f"{path}.maps[{i}]", n) for i, m in enumerate(maps)]
        if any(p is None for p in parts):
            return None
        out = parts[0]
        for p in parts[1:]:
            out = diffeo.compose(p, out)
        return out
    except ValueError as e:
        v.err(path, str(e))
        return None


def _build_density(v, d, path, n):
    kind = v.get(d, "kind", path, required=False, default="gaussian")
    try:
        if kind == "gaussian":
            mean = v.array(d, "mean", path, 1, required=False)
            cov = v.array(d, "cov", path, 2, required=False)
            mean = np.zeros(n) if mean is None else mean
            cov = np.eye(n) if cov is None else cov
            if mean.size != n or cov.shape != (n, n):
                v.err(path, f"density must have dimension {n}")
                return None
            return diffeo.gaussian(mean, cov)
        if kind == "mixture":
            w = v.array(d, "weights", path, 1)
            means = v.get(d, "means", path)
            covs = v.get(d, "covs", path)
            if w is None or means is None or covs is None:
                return None
            rho = diffeo.mixture(w, np.array(means, dtype=float), np.array(covs, dtype=float))
            if rho.dim != n:
                v.err(path, f"density must have dimension {n}")
                return None
            return rho
        v.err(f"{path}.kind", f"unknown density kind {kind!r} (gaussian, mixture)")
    except ValueError as e:
        v.err(path, str(e))
    return None


def _build_system(v, raw, kind):
    sysd = raw.get("system")
    if kind == "benamou_brenier" and sysd is None:
        n = v.number(raw, "dim", "$", positive=True, integer=True)
        if n is None:
            return None
        return lti.LtiSystem(np.zeros((n, n)), np.eye(n))
    A = v.array(sysd if sysd is not None else {}, "A", "$.system", 2)
    B = v.array(sysd if sysd is not None else {}, "B", "$.system", 2)
    if A is None or B is None:
        return None
    if A.shape[0] != A.shape[1]:
        v.err("$.system.A", f"must be square, got shape {A.shape}")
        return None
    if B.shape[0] != A.shape[0]:
        v.err("$.system.B", f"expected {A.shape[0]} rows, got {B.shape[0]}")
        return None
    sys_ = lti.LtiSystem(A, B)
    if kind == "benamou_brenier" and not sys_.is_driftless_identity():
        v.err("$.system", "benamou_brenier requires A = 0 and B = I")
        return None
    return sys_


def _build_manifold(v, d, path):
    if not isinstance(d, dict):
        v.err(path, "expected an object")
        return None
    if "name" in d and len(d) == 1:
        try:
            return complexity.catalog(str(d["name"]))
        except KeyError as e:
            v.err(f"{path}.name", str(e.args[0]))
            return None
    n = v.number(d, "intrinsic_dim", path, positive=True, integer=True)
    dd = v.number(d, "ambient_dim", path, positive=True, integer=True)
    vol = v.number(d, "volume", path, positive=True)
    tau = v.number(d, "reach", path, positive=True)
    if None in (n, dd, vol, tau):
        return None
    try:
        return complexity.ManifoldSpec(n, dd, vol, tau, str(d.get("name", "custom")))
    except ValueError as e:
        v.err(path, str(e))
        return None


def _build_program(v, d, path):
    gens_raw = v.get(d, "generators", path)
    steps_raw = v.get(d, "steps", path)
    if not isinstance(gens_raw, list) or not gens_raw:
        v.err(f"{path}.generators", "expected a non-empty list")
        return None
    gens = []
    for i, g in enumerate(gens_raw):
        p = f"{path}.generators[{i}]"
        gk = v.get(g, "kind", p)
        if gk == "dtheta":
            gens.append(complexity.angle_field())
        elif gk == "linear":
            M = v.array(g, "matrix", p, 2)
            if M is not None:
                if M.shape[0] != M.shape[1]:
                    v.err(f"{p}.matrix", "must be square")
                else:
                    gens.append(complexity.linear_field(M))
        elif gk is not None:
            v.err(f"{p}.kind", f"unknown generator {gk!r} (linear, dtheta)")
    if len(gens) != len(gens_raw):
        return None
    if len({g.dim for g in gens}) > 1:
        v.err(f"{path}.generators", "generators have different dimensions")
        return None
    if not isinstance(steps_raw, list):
        v.err(f"{path}.steps", "expected a list")
        return None
    steps = []
    for i, s in enumerate(steps_raw):
        p = f"{path}.steps[{i}]"
        idx = v.number(s, "field", p, integer=True)
        sc = v.get(s, "scaling", p)
        if idx is None or sc is None:
            continue
        if not 0 <= idx < len(gens):
            v.err(f"{p}.field", f"index {idx} out of range")
            continue
        sk = v.get(sc, "kind", f"{p}.scaling", required=False, default="constant")
        if sk == "constant":
            c = v.number(sc, "value", f"{p}.scaling")
            if c is not None:
                steps.append((complexity.constant(c), idx))
        elif sk == "affine":
            c = v.number(sc, "value", f"{p}.scaling")
            g = v.array(sc, "gradient", f"{p}.scaling", 1)
            if c is not None and g is not None:
                if g.size != gens[0].dim:
                    v.err(f"{p}.scaling.gradient", f"expected length {gens[0].dim}")
                else:
                    steps.append((complexity.affine_scaling(c, g), idx))
        else:
            v.err(f"{p}.scaling.kind", f"unknown scaling {sk!r} (constant, affine)")
    if len(steps) != len(steps_raw):
        return None
    return complexity.FlowProgram(tuple(gens), tuple(steps))


def validate_config(raw_text):
    """Parse and validate a JSON scenario; raise :class:`ConfigError` on problems."""
    try:
        raw = json.loads(raw_text)
    except json.JSONDecodeError as e:
        raise ConfigError([("$", f"invalid JSON: {e}")]) from None
    if not isinstance(raw, dict):
        raise ConfigError([("$", "top level must be an object")])
    v = _V()
    kind = v.get(raw, "scenario", "$")
    if kind is not None and kind not in SCENARIOS:
        v.err("$.scenario", f"unknown scenario {kind!r} (one of {', '.join(SCENARIOS)})")
    if v.errors:
        raise ConfigError(v.errors)

    cfg = ScenarioConfig(kind=kind, raw=raw)
    cfg.seed = v.number(raw, "seed", "$", required=False, default=0, integer=True)
    cfg.threads = v.number(raw, "threads", "$", required=False, default=1, integer=True,
                           positive=True)
    cfg.output = raw.get("output", {}) if isinstance(raw.get("output", {}), dict) else {}

    if kind in ("steer", "benamou_brenier", "diagnostic"):
        cfg.system = _build_system(v, raw, kind)
        cfg.horizon = v.number(raw, "horizon", "$", required=False, default=1.0, positive=True)
        if cfg.system is not None:
            n = cfg.system.n
            rep = lti.controllability_check(cfg.system)
            if not rep.controllable:
                v.err("$.system", f"not controllable (Kalman min singular value {rep.min_sv:.3e})")
            dd = v.get(raw, "diffeo", "$")
            if dd is not None:
                cfg.psi_space = dd.get("space", "psi") if isinstance(dd, dict) else "psi"
                if cfg.psi_space not in ("psi", "psihat"):
                    v.err("$.diffeo.space", "must be 'psi' or 'psihat'")
                cfg.psi = _build_diffeo(v, dd, "$.diffeo", n)
            if kind != "diagnostic":
                cfg.density = _build_density(v, raw.get("density", {}), "$.density", n)
                cfg.ensemble_size = v.number(raw, "ensemble_size", "$", positive=True,
                                             integer=True)
                cfg.step = v.number(raw, "step", "$", required=False, default=1e-3,
                                    positive=True)
                if cfg.step is not None and cfg.horizon is not None \
                        and cfg.step > cfg.horizon / 10:
                    v.err("$.step", "must be at most horizon / 10")
                cfg.record_every = v.number(raw, "record_every", "$", required=False,
                                            default=1, positive=True, integer=True)
        checks = raw.get("checks", {})
        cfg.checks = {
            "endpoint_tol": v.number(checks, "endpoint_tol", "$.checks", False, 1e-3, True),
            "straight_line_tol": v.number(checks, "straight_line_tol", "$.checks", False,
                                          1e-6, True),
        }
        if kind == "diagnostic":
            dg = raw.get("diagnostic", {})
            cfg.diagnostic = {
                "grid_points": v.number(dg, "grid_points", "$.diagnostic", False, 21, True, True),
                "probe_pairs": v.number(dg, "probe_pairs", "$.diagnostic", False, 10000, True,
                                        True),
                "probe_times": v.number(dg, "probe_times", "$.diagnostic", False, 20, True, True),
            }

    elif kind == "complexity":
        cfg.manifold = _build_manifold(v, v.get(raw, "manifold", "$"), "$.manifold")
        cfg.r = v.number(raw, "r", "$", positive=True)
        if cfg.manifold is not None and cfg.r is not None and cfg.r >= cfg.manifold.reach:
            v.err("$.r", f"resolution r={cfg.r} must be below the reach "
                         f"tau={cfg.manifold.reach} (r < tau)")
        default_k = cfg.manifold.intrinsic_dim if cfg.manifold else 1
        cfg.k_per_fragment = v.number(raw, "k_per_fragment", "$", False, default_k, True, True)
        if cfg.manifold and cfg.k_per_fragment is not None \
                and cfg.k_per_fragment < cfg.manifold.intrinsic_dim:
            v.err("$.k_per_fragment", f"must be >= intrinsic dimension "
                                      f"{cfg.manifold.intrinsic_dim}")

    elif kind == "flow_program":
        pd = v.get(raw, "program", "$")
        if pd is not None:
            cfg.program = _build_program(v, pd, "$.program")
            cfg.substeps = v.number(pd, "substeps", "$.program", False, 100, True, True)
            pts = v.array(pd, "points", "$.program", 2)
            if cfg.program is not None and pts is not None:
                if pts.shape[1] != cfg.program.dim:
                    v.err("$.program.points", f"points must have dimension {cfg.program.dim}")
                cfg.program_points = pts
            cfg.m_controls = v.number(pd, "m_controls", "$.program", False,
                                      len(cfg.program.generators) if cfg.program else 1,
                                      True, True)
            if cfg.program and cfg.m_controls is not None \
                    and cfg.m_controls < len(cfg.program.generators):
                v.err("$.program.m_controls", "fewer control channels than generators")

    if v.errors:
        raise ConfigError(v.errors)
    return cfg


# -- running -------------------------------------------------------------------

def _finite(x):
    """JSON-safe scalars: numpy to python, non-finite to None."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, np.ndarray):
        return _finite(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def _plan(cfg):
    if cfg.psi_space == "psihat":
        return steer.plan_from_psihat(cfg.system, cfg.horizon, cfg.psi, seed=cfg.seed)
    return steer.make_plan(cfg.system, cfg.horizon, cfg.psi, seed=cfg.seed)


def _plan_block(plan, cfg):
    rep = lti.controllability_check(cfg.system)
    table = lti.gramian_table(cfg.system, cfg.horizon, 20)
    ok, worst = table.psd_monotone()
    v = plan.verdict
    return {
        "controllability": {"controllable": rep.controllable, "min_sv": rep.min_sv,
                            "max_sv": rep.max_sv},
        "gramian_table": {"nodes": len(table.grid), "psd_monotone": ok,
                          "min_increment_eig": worst},
        "monotonicity": {"certified": v.monotone, "min_pairing": v.min_pairing,
                         "min_sym_jac_eig": v.min_sym_jac_eig, "min_jac_det": v.min_jac_det,
                         "witness": None if v.witness is None else [list(w) for w in v.witness],
                         "note": "sampled certificate on psihat over [-3,3]^n, not a proof"},
    }, ok


def _run_transport(cfg, threads):
    plan = _plan(cfg)
    report, gram_ok = _plan_block(plan, cfg)
    ens = liouville.sample_ensemble(cfg.density, cfg.ensemble_size, cfg.seed)
    bundle = liouville.simulate_closed_loop(plan, ens, cfg.step, threads=threads,
                                            record_every=cfg.record_every)
    stats = liouville.endpoint_error(bundle, plan.psi)
    ok_ens = ens.positions[~bundle.flagged]
    target = liouville.ParticleEnsemble(plan.psi.eval(ok_ens),
                                        np.full(len(ok_ens), 1.0 / len(ok_ens))) \
        if len(ok_ens) else None
    report["endpoint"] = {"max": stats.max, "mean": stats.mean, "n_flagged": stats.n_flagged,
                          "n_particles": ens.size, "step": bundle.step}
    report["energy_distance"] = (liouville.energy_distance(bundle.terminal_ensemble(), target)
                                 if target is not None else None)
    report["transport_cost"] = liouville.transport_cost(bundle) if target is not None else None
    checks = {
        "endpoint_tolerance": bool(stats.n_flagged == 0
                                   and stats.max <= cfg.checks["endpoint_tol"]),
        "gramian_psd_monotone": bool(gram_ok),
    }
    if cfg.kind == "benamou_brenier" and target is not None:
        dev = liouville.straight_line_check(bundle)
        disp = plan.psi.eval(ok_ens) - ok_ens
        report["straight_line_deviation"] = dev
        report["transport_cost_oracle"] = 0.5 * float(np.mean(np.sum(disp ** 2, axis=1))) \
            / cfg.horizon
        checks["straight_line"] = bool(dev <= cfg.checks["straight_line_tol"])
    return report, checks, bundle


def _run_diagnostic(cfg):
    plan = _plan(cfg)
    report, gram_ok = _plan_block(plan, cfg)
    T = cfg.horizon
    grid = np.linspace(0.0, T, cfg.diagnostic["grid_points"])
    rows = steer.norm_vs_radius_diagnostic(plan, grid)
    report["norm_vs_radius"] = [r._asdict() for r in rows]
    k = cfg.diagnostic["probe_times"]
    times = T * np.arange(1, k + 1) / (k + 1)
    probe = steer.injectivity_probe(plan, cfg.diagnostic["probe_pairs"], times, cfg.seed)
    report["injectivity"] = {
        "n_pairs": probe.n_pairs, "min_bilinear": probe.min_bilinear,
        "positive": bool(probe.min_bilinear > 0),
        "worst_pair": None if probe.worst_pair is None else
        {"x0": probe.worst_pair[0], "y0": probe.worst_pair[1], "t": probe.worst_pair[2]},
        "skipped_times": list(probe.skipped_times)}
    checks = {
        "gramian_psd_monotone": bool(gram_ok),
        "spectral_radius_le_one": all(r.radius <= 1 + 1e-9 for r in rows),
        "whitened_norm_le_one": all(r.whitened_norm <= 1 + 1e-10 for r in rows),
    }
    return report, checks


def _run_complexity(cfg):
    rep = complexity.complexity_report(cfg.manifold, cfg.r, cfg.k_per_fragment)
    m = cfg.manifold
    report = {"manifold": {"name": m.name, "intrinsic_dim": m.intrinsic_dim,
                           "ambient_dim": m.ambient_dim, "volume": m.volume, "reach": m.reach},
              "complexity": {"r": rep.r, "N_low": rep.N_low, "N_high": rep.N_high,
                             "k_low": rep.k_low, "k_per_fragment": cfg.k_per_fragment,
                             "K_estimate": rep.K_estimate, "log10_k_low": rep.log10_k_low}}
    return report, {"bounds_ordered": bool(rep.N_low <= rep.N_high)}


def _run_flow(cfg):
    prog, pts = cfg.program, cfg.program_points
    images = complexity.flow_program_apply(prog, pts, cfg.substeps)
    sched = complexity.flow_program_to_schedule(prog, cfg.m_controls)
    sim = complexity.simulate_schedule(sched, pts, cfg.substeps)
    gap = float(np.max(np.abs(sim - images))) if len(pts) else 0.0
    report = {"flow_program": {"program_length": len(prog),
                               "switching_count": sched.switching_count,
                               "total_time": sched.total_time, "images": images,
                               "schedule_vs_apply_max_gap": gap}}
    return report, {"schedule_matches_program": gap <= 1e-8,
                    "switching_count_equals_length": sched.switching_count == len(prog)}


def _atomic_write(path, write):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectories(fh, bundle):
    """CSV rows ``t, particle_id, x_0..x_{n-1}, u_0..u_{m-1}`` at 17 significant digits."""
    N, L, n = bundle.states.shape
    m = bundle.controls.shape[2]
    fh.write(",".join(["t", "particle_id"] + [f"x_{i}" for i in range(n)]
                      + [f"u_{j}" for j in range(m)]) + "\n")
    ids = np.arange(N, dtype=float)
    fmt = ",".join(["%.17g", "%d"] + ["%.17g"] * (n + m))
    for k in range(L):
        rows = np.column_stack([np.full(N, bundle.times[k]), ids, bundle.states[:, k],
                                bundle.controls[:, k]])
        np.savetxt(fh, rows, fmt=fmt)


def run_scenario(cfg, out_dir=".", threads=None):
    """Run a validated scenario; returns ``(report, passed)`` and writes outputs."""
    threads = threads or cfg.threads or 1
    t0 = time.perf_counter()
    bundle = None
    if cfg.kind in ("steer", "benamou_brenier"):
        body, checks, bundle = _run_transport(cfg, threads)
    elif cfg.kind == "diagnostic":
        body, checks = _run_diagnostic(cfg)
    elif cfg.kind == "complexity":
        body, checks = _run_complexity(cfg)
    else:
        body, checks = _run_flow(cfg)
    passed = all(checks.values())
    report = {"scenario": cfg.kind, "version": __version__, "seed": cfg.seed,
              "config": cfg.raw}
    report.update(body)
    report["checks"] = checks
    report["passed"] = passed
    report["wall_clock_s"] = time.perf_counter() - t0
    report = _finite(report)

    report_path = os.path.join(out_dir, cfg.output.get("report", "report.json"))
    traj_path = os.path.join(out_dir, cfg.output.get("trajectories", "trajectories.csv"))
    written = []
    try:
        if bundle is not None:
            _atomic_write(traj_path, lambda fh: write_trajectories(fh, bundle))
            written.append(traj_path)
        _atomic_write(report_path,
                      lambda fh: fh.write(json.dumps(report, indent=2, allow_nan=False) + "\n"))
    except BaseException:
        for p in written:
            os.unlink(p)
        raise
    return report, passed


def bounds_report(name, r, k=None):
    m = complexity.catalog(name)
    rep = complexity.complexity_report(m, r, m.intrinsic_dim if k is None else k)
    return {"manifold": m.name, "intrinsic_dim": m.intrinsic_dim, "volume": m.volume,
            "reach": m.reach, "r": rep.r, "N_low": rep.N_low, "N_high": rep.N_high,
            "k_low": rep.k_low, "K_estimate": rep.K_estimate}


def _threads(arg, cfg_threads):
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return cfg_threads


def main(argv=None):
    ap = argparse.ArgumentParser(prog="densitysteer", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=".")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--threads", type=int)
    p_val = sub.add_parser("validate", help="validate a scenario config")
    p_val.add_argument("config")
    p_b = sub.add_parser("bounds", help="covering-number and switching bounds")
    p_b.add_argument("--manifold", required=True)
    p_b.add_argument("--r", type=float, required=True)
    p_b.add_argument("--k", type=int)
    args = ap.parse_args(argv)

    if args.cmd == "bounds":
        try:
            print(json.dumps(bounds_report(args.manifold, args.r, args.k), indent=2))
        except (KeyError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        return 0

    try:
        with open(args.config) as fh:
            text = fh.read()
        if args.cmd == "run" and args.seed is not None:
            raw = json.loads(text)
            raw["seed"] = args.seed
            text = json.dumps(raw)
        cfg = validate_config(text)
    except ConfigError as e:
        for path, reason in e.errors:
            print(f"{path}: {reason}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.cmd == "validate":
        print(f"ok: {cfg.kind} scenario")
        return 0

    try:
        report, passed = run_scenario(cfg, args.out, _threads(args.threads, cfg.threads))
    except Exception as e:  # surface with scenario context
        print(f"error in {cfg.kind} scenario: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    for name, ok in report["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
