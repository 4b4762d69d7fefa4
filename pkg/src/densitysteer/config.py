"""Numerical tolerances shared by every module.

Tests may build a tighter :class:`Tolerances` and pass it explicitly.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # matops
    psd_clip: float = 1e-12          # relative to the largest eigenvalue
    symmetry: float = 1e-12          # relative symmetry check for SPD inputs
    # lti
    rank: float = 1e-10              # Kalman matrix, relative to sigma_max
    # diffeo
    monotone: float = 1e-10          # slack on pairings / symmetric-part eigenvalues
    jacobian_fd: float = 1e-5        # finite-difference Jacobian cross-check
    gradient_symmetry: float = 1e-9
    # steer
    newton_tol: float = 1e-10        # |K_t(x0) - x| <= tol * (1 + |x|)
    newton_max_iter: int = 50
    newton_polish: bool = True      # extra Newton step after convergence
    fallback_max_iter: int = 20000
    probe_t_min: float = 1e-3        # injectivity probe skips t < probe_t_min * T
    # liouville
    terminal_cap: float = 0.0        # feedback evaluated at min(t, T - cap)
    # complexity
    blowup: float = 1e9


DEFAULT_TOL = Tolerances()
