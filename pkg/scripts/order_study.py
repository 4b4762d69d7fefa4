"""Endpoint error of the closed-loop particle scheme against RK4 step size.

Double integrator, T = 1, psihat(z) = z + 0.5 tanh(z). Prints one row per
step with the max error over the ensemble and the ratio to the next row (consecutive rows halve the step).
"""

import argparse

from densitysteer import diffeo, liouville, lti, steer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    plan = steer.plan_from_psihat(lti.double_integrator(), 1.0, diffeo.tanh_monotone(2, 0.5))
    ens = liouville.sample_ensemble(diffeo.standard_gaussian(2), args.n, args.seed)
    steps = [0.1 / 2 ** k for k in range(8)] + [1e-3, 5e-4]
    errs = []
    for h in steps:
        b = liouville.simulate_closed_loop(plan, ens, h, record_every=10 ** 9)
        errs.append(liouville.endpoint_error(b, plan.psi).max)
    print(f"{'step':>10} {'max error':>12} {'ratio':>8}")
    for i, (h, e) in enumerate(zip(steps, errs)):
        ratio = f"{e / errs[i + 1]:8.2f}" if i + 1 < len(errs) else ""
        print(f"{h:10.3g} {e:12.3e} {ratio}")


if __name__ == "__main__":
    main()
