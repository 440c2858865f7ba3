"""Discrete heat kernel e^{-2t} I_k(2t): the linear (beta = 1) backward run
from a unit mass, its diffusive rescaling and the fitted kernel bounds."""

import numpy as np

from coarselat import Configuration, ModelParams, heat_kernel, integrate_backward, kernel_profile
from coarselat.analysis import kernel_estimates, step_approximation_distance
from coarselat.integrator import IntegratorPolicy


def main():
    M = 128
    u0 = np.zeros(M)
    u0[0] = 1.0
    run = integrate_backward(Configuration(u0), ModelParams(beta=1.0), 5.0, policy=IntegratorPolicy(sample_times=(1.0, 5.0)))
    for t in (1.0, 5.0):
        ks = np.arange(-20, 21)
        err = np.max(np.abs(run.masses_at(t)[ks % M] - [heat_kernel(t, k) for k in ks]))
        print(f"t={t}: solver vs Bessel closed form, sup error {err:.2e}")
    profiles = [kernel_profile(t) for t in (1.0, 4.0, 16.0, 64.0)]
    aronson, nash = kernel_estimates(profiles)
    print(f"Aronson constant {aronson.C:.4f}; Nash exponent {nash.alpha:.3f}, constant {nash.C:.4f}")
    for t in (4.0, 25.0, 100.0):
        p = kernel_profile(t)
        print(f"t={t}: peak of U {p.rescaled(0.0)[()]:.4f}, L1 distance to steps of width 0.3: "
              f"{step_approximation_distance(p, 0.3):.4f}")


if __name__ == "__main__":
    main()
