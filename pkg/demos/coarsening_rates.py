"""Build an n-stage approximant backward in time and read off its coarsening
rate from the living mean at the scheduled vanishing times.

Usage: python coarsening_rates.py [beta] [n] [M0] [epsilon]
"""

import sys
import time

from coarselat import ModelParams, build_approximant, fit_rate


def main(argv):
    beta = float(argv[0]) if argv else 0.5
    n = int(argv[1]) if len(argv) > 1 else 4
    M0 = int(argv[2]) if len(argv) > 2 else 1024
    eps = float(argv[3]) if len(argv) > 3 else 1 / 12
    params = ModelParams(beta=beta, epsilon=eps)
    start = time.perf_counter()
    ap = build_approximant(params, n, M0=M0)
    sched = ap.schedule
    print(f"built in {time.perf_counter() - start:.1f}s; T = {sched.T:.2f}, windows {ap.stats['window_sizes']}")
    means = ap.living_means()
    for t, m in zip(sched.t_events, means):
        print(f"  t = {t:12.2f}   living mean {m:.4f}")
    if n >= 4:
        if beta == 1:
            fit = fit_rate(sched.t_events, means, "exponential")
            print(f"exponential rate {fit.exponent:.3e}; schedule predicts ln(theta)/T")
        else:
            fit = fit_rate(sched.t_events, means, "power", origin=sched.origin())
            print(f"power-law exponent {fit.exponent:.3f}; scaling predicts {1 / (1 - beta):.3f}")


if __name__ == "__main__":
    main(sys.argv[1:])
