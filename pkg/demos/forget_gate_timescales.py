"""How the forget-gate mean sets the memory horizon.

Along the zero-variance family (all weight variances off, only gate means
active) the correlation map of the peephole cell contracts at the rate
chi = sigmoid(mu_f)^2 per step, so correlations between two trajectories
persist for xi = -1/ln chi steps. Pushing mu_f up saturates the forget
gate and stretches xi without bound; that is the knob the critical
initializations turn.
"""

import math

from rnnmf import (
    GateParams,
    Hyperparameters,
    InputStats,
    get_architecture,
    solve_correlation,
    solve_moments,
)


def zero_variance_theta(mu_f):
    return Hyperparameters(
        {
            k: GateParams(sigma2=0.0, nu2=0.0, rho2=0.0, mu=mu_f if k == "f" else 0.0)
            for k in ("i", "f", "r", "o")
        }
    )


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def main():
    arch = get_architecture("peepholeLSTM")
    inputs = InputStats(1.0, 1.0)
    print(f"{'mu_f':>5} {'chi':>10} {'xi (pipeline)':>14} {'xi (closed form)':>17}")
    for mu_f in (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0):
        theta = zero_variance_theta(mu_f)
        msol = solve_moments(theta, arch, inputs)
        rep = solve_correlation(theta, arch, inputs, msol)
        closed = -1.0 / math.log(sig(mu_f) ** 2)
        print(f"{mu_f:>5.1f} {rep.chi:>10.6f} {rep.xi:>14.4f} {closed:>17.4f}")
    print()
    print("each unit of mu_f beyond ~3 multiplies the horizon by ~e:")
    print("xi(5) / xi(4) =", end=" ")
    xs = []
    for mu_f in (4.0, 5.0):
        theta = zero_variance_theta(mu_f)
        msol = solve_moments(theta, arch, inputs)
        xs.append(solve_correlation(theta, arch, inputs, msol).xi)
    print(f"{xs[1] / xs[0]:.3f}")


if __name__ == "__main__":
    main()
