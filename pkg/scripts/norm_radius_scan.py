"""Operator norm against spectral radius of W(0,t) W(0,T)^{-1} over [0, T].

The radius stays at or below one while the norm can exceed it; the whitened
matrix W_T^{-1/2} W_t W_T^{-1/2} is similar to the product and has norm at most one.
"""

import numpy as np

from densitysteer import diffeo, lti, steer


def main():
    sys_ = lti.double_integrator()
    plan = steer.plan_from_psihat(sys_, 1.0, diffeo.tanh_monotone(2, 0.5))
    print(f"{'t':>6} {'norm':>10} {'radius':>10} {'whitened':>10}")
    for row in steer.norm_vs_radius_diagnostic(plan, np.linspace(0, 1, 11)):
        print(f"{row.t:6.2f} {row.norm:10.5f} {row.radius:10.5f} {row.whitened_norm:10.5f}")


if __name__ == "__main__":
    main()
