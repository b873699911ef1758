"""The LSTM cell state never forgets its whole history.

Every other pre-activation in the moment recursions is asymptotically
Gaussian, but the cell accumulates c' = sig(u_f) c + sig(u_i) tanh(u_r)
forever, so its stationary law is a random recursion's fixed point, not a
Gaussian. This script draws that law two ways: with the package's
stationary-ensemble sampler and with an actual width-200 network run for
200 steps, then compares the two samples.
"""

import numpy as np
from scipy import stats as sps

from rnnmf import (
    GateParams,
    Hyperparameters,
    InputStats,
    SimulationConfig,
    get_architecture,
    preactivation_stats,
    sample_cell_distribution,
    simulate_cell_distribution,
    solve_moments,
)


def histogram(samples, lo, hi, bins=9, width=40):
    counts, edges = np.histogram(samples, bins=bins, range=(lo, hi))
    peak = counts.max()
    for c, e0, e1 in zip(counts, edges, edges[1:]):
        bar = "#" * int(round(width * c / peak))
        print(f"  [{e0:+.2f}, {e1:+.2f})  {bar}")


def main():
    arch = get_architecture("LSTM")
    gate = dict(sigma2=0.5, nu2=0.5, rho2=0.1, mu=0.0)
    theta = Hyperparameters(
        {
            "i": GateParams(**gate),
            "f": GateParams(**{**gate, "mu": 1.0}),
            "r": GateParams(**gate),
            "o": GateParams(**gate),
        }
    )
    inputs = InputStats(1.0, 1.0)

    msol = solve_moments(theta, arch, inputs, seed=0)
    stats = preactivation_stats(theta, arch, msol.state, inputs)
    ens = sample_cell_distribution(theta, stats, n_s=200, n_iters=200, seed=0)
    cells = simulate_cell_distribution(theta, arch, SimulationConfig(N=200, T=200, seed=0))

    lo = float(min(ens.samples.min(), cells.min()))
    hi = float(max(ens.samples.max(), cells.max()))
    print("stationary-ensemble sampler (200 samples):")
    histogram(ens.samples, lo, hi)
    print("width-200 network after 200 steps:")
    histogram(cells, lo, hi)

    ks = sps.ks_2samp(ens.samples, cells)
    print(f"\ntwo-sample KS distance = {ks.statistic:.3f} (p = {ks.pvalue:.2f})")
    print(f"sampler mean/var = {ens.samples.mean():+.3f}/{ens.samples.var():.3f}, "
          f"network mean/var = {cells.mean():+.3f}/{cells.var():.3f}")


if __name__ == "__main__":
    main()
