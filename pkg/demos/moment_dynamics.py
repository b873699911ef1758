"""Mean-field moment trajectories against a finite-width run.

Two weight-sharing GRU copies see inputs that are uncorrelated for the
first ten steps and identical afterwards. The mean-field recursion tracks
the width-2048 simulation through the switch: Q_s settles onto its fixed
point while C_s dips, then recovers toward C* = 1 once the inputs lock.
"""

from rnnmf import (
    GateParams,
    Hyperparameters,
    InputStats,
    SimulationConfig,
    get_architecture,
    moment_trajectory,
    simulate_pair,
)


def build_theta(mu_f):
    gate = dict(sigma2=0.5, nu2=0.5, rho2=0.05, mu=0.0)
    return Hyperparameters(
        {
            "f": GateParams(**{**gate, "mu": mu_f}),
            "r": GateParams(**gate),
            "r2": GateParams(**gate),
        }
    )


def main():
    arch = get_architecture("GRU")
    theta = build_theta(mu_f=1.0)
    inputs = InputStats(R=1.0, sigma_z=0.0)
    T = 30
    schedule = [0.0] * 10 + [1.0] * (T - 10)

    predicted = moment_trajectory(theta, arch, inputs, T, sigma_z_schedule=schedule)
    simulated = simulate_pair(
        theta, arch, SimulationConfig(N=2048, T=T, seed=0), inputs,
        sigma_z_schedule=schedule,
    )

    print("GRU, input correlation 0 -> 1 at t = 10, width 2048")
    print(f"{'t':>3} {'Q pred':>9} {'Q sim':>9} {'C pred':>9} {'C sim':>9}")
    for t in (1, 2, 5, 9, 10, 11, 12, 15, 20, 25, 30):
        p, s = predicted[t], simulated[t]
        print(f"{t:>3} {p.q_s:>9.5f} {s.q:>9.5f} {p.c_s:>9.5f} {s.c:>9.5f}")

    gaps_q = [abs(p.q_s - s.q) for p, s in zip(predicted[1:], simulated[1:])]
    gaps_c = [abs(p.c_s - s.c) for p, s in zip(predicted[1:], simulated[1:])]
    print(f"\nworst |dQ| = {max(gaps_q):.2e}, worst |dC| = {max(gaps_c):.2e}")
    print("(finite-size noise at N = 2048 is O(1/sqrt(N)) ~ 2e-2 per step)")


if __name__ == "__main__":
    main()
