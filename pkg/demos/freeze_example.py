"""Two-periodic data (2, 1, 2, 1, ...) with beta = -1.

Every small particle shrinks at the same rate and all of them vanish at one
instant t*.  Their mass goes to the neighbours, which then hold 3 each and
never move again.  t* has a closed form as a one-dimensional integral, which
the run is compared against.
"""

import numpy as np
from scipy.integrate import quad

from coarselat import Configuration, ModelParams, integrate_forward


def main():
    params = ModelParams(beta=-1.0)
    run = integrate_forward(Configuration.periodic([2.0, 1.0], 16), params, 1.0)
    times = np.array([e.time for e in run.vanish_events()])
    exact, _ = quad(lambda a: a * (3 - a) / (2 * (3 - 2 * a)), 0.0, 1.0, epsabs=1e-14)
    print(f"vanishings: {times.size}, spread of times {np.ptp(times):.1e}")
    print(f"t* from the run {times.mean():.12f}, from quadrature {exact:.12f}")
    print("final masses:", run.final.masses)
    print("integrator stats:", run.stats)


if __name__ == "__main__":
    main()
