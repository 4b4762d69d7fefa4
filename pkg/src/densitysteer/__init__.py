"""Feedback steering of controllable linear systems and ensembles.

Submodules
----------
matops      dense matrix kernels (expm, SPD square root, norms)
lti         LTI systems, Kalman rank test, controllability Gramians
diffeo      target maps, the whitened-coordinates transform, monotonicity checks
steer       open-loop/feedback synthesis and the flow map K_t
liouville   particle-ensemble transport under the feedback law
complexity  covering-number and switching-count bounds, switched-flow programs
cli         scenario runner
"""

__version__ = "0.1.0"

from .config import Tolerances, DEFAULT_TOL  # noqa: F401
