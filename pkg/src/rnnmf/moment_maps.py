"""Pre-activation statistics and the deterministic moment / correlation maps.

At large width the gate pre-activations of one unit are jointly Gaussian and
independent across distinct gates, so the evolution of (mu_s, Q_s, C_s)
closes into scalar recursions whose coefficients are one- and two-point
Gaussian expectations. The LSTM is the exception: its hidden-state moments
depend on the cell-state distribution, supplied here as a sampled ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from .core import (
    ZERO_STATE,
    ArchitectureSpec,
    Hyperparameters,
    InputStats,
    MomentState,
    dsigmoid,
    sigmoid,
    validate_theta,
)
from .quadrature import DEFAULT_ORDER, GaussianPairSpec, expect1, expect2

__all__ = [
    "DegenerateCorrelation",
    "MissingCellEnsemble",
    "GateStats",
    "PreActivationStats",
    "preactivation_stats",
    "step_moments",
    "step_correlation",
    "moment_trajectory",
]

# relative floor below which a variance is treated as a point mass
_DEG_TOL = 1e-13


class DegenerateCorrelation(ArithmeticError):
    """Correlation requested for a zero-variance (point mass) quantity."""


class MissingCellEnsemble(ValueError):
    """The LSTM moment map needs a sampled cell ensemble and none (or the
    wrong kind) was supplied."""


_G_FUNCS = {"sigmoid": sigmoid, "tanh": np.tanh}


@dataclass(frozen=True)
class GateStats:
    q: float
    mu: float
    sigma2_pre: float
    c: Optional[float]  # None when the pre-activation is a point mass


class PreActivationStats:
    """Per-gate Gaussian statistics (Q_k, mu_k, Sigma_k^2, C_k)."""

    def __init__(self, gates: Mapping[str, GateStats]):
        self._gates = MappingProxyType(dict(gates))

    @property
    def gates(self) -> Mapping[str, GateStats]:
        return self._gates

    def q(self, k: str) -> float:
        return self._gates[k].q

    def mu(self, k: str) -> float:
        return self._gates[k].mu

    def sigma2_pre(self, k: str) -> float:
        return self._gates[k].sigma2_pre

    def c(self, k: str) -> float:
        v = self._gates[k].c
        if v is None:
            raise DegenerateCorrelation(
                f"gate {k!r} has zero pre-activation variance; its correlation is undefined"
            )
        return v

    def pair_c(self, k: str) -> float:
        """Correlation for pair expectations; 0 for point masses (any value
        works there, the pair collapses to the mean)."""
        v = self._gates[k].c
        return 0.0 if v is None else v

    def pair(self, k: str) -> GaussianPairSpec:
        g = self._gates[k]
        return GaussianPairSpec(g.mu, g.sigma2_pre, self.pair_c(k))


def _finish_corr(cov: float, denom: float) -> Optional[float]:
    if denom <= 0.0:
        return None
    c = cov / denom
    if abs(c) > 1.0 + 1e-9:
        raise ArithmeticError(f"pre-activation correlation {c} out of range (bug)")
    return min(max(c, -1.0), 1.0)


def preactivation_stats(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    state: MomentState,
    inputs: InputStats,
    order: int = DEFAULT_ORDER,
) -> PreActivationStats:
    """Gaussian statistics of every gate pre-activation given the state
    moments. Linear gates are closed-form; gated pre-activations integrate
    the inner gate's nonlinearity over its (correlated pair) distribution.
    """

    validate_theta(theta, arch)
    mu_s, q_s, c_s = state.mu_s, state.q_s, state.c_s
    sigma2_s = state.sigma2_s
    # exact at c_s = 1 so that fully correlated copies stay bit-identical
    rho_s = q_s if c_s == 1.0 else c_s * sigma2_s + mu_s * mu_s

    out: dict[str, GateStats] = {}
    for gid in arch.linear_gates():
        p = theta[gid.label]
        q_k = p.sigma2 * q_s + p.nu2 * inputs.R + p.rho2 + p.mu * p.mu
        s2 = p.sigma2 * q_s + p.nu2 * inputs.R + p.rho2
        cov = p.sigma2 * rho_s + p.nu2 * inputs.R * inputs.sigma_z + p.rho2
        out[gid.label] = GateStats(q=q_k, mu=p.mu, sigma2_pre=s2, c=_finish_corr(cov, s2))

    for gid in arch.gated_gates():
        p = theta[gid.label]
        inner = out[gid.gated_by]
        g = _G_FUNCS[gid.g_name]
        gg = lambda u, _g=g: _g(u) * _g(u)
        e_g2 = expect1(gg, inner.mu, inner.sigma2_pre, order)
        inner_pair = GaussianPairSpec(inner.mu, inner.sigma2_pre, 0.0 if inner.c is None else inner.c)
        e_gg = expect2(g, g, inner_pair, order)
        q_k = p.sigma2 * e_g2 * q_s + p.nu2 * inputs.R + p.rho2 + p.mu * p.mu
        s2 = p.sigma2 * e_g2 * q_s + p.nu2 * inputs.R + p.rho2
        cov = p.sigma2 * e_gg * rho_s + p.nu2 * inputs.R * inputs.sigma_z + p.rho2
        out[gid.label] = GateStats(q=q_k, mu=p.mu, sigma2_pre=s2, c=_finish_corr(cov, s2))

    return PreActivationStats(out)


def _sig2(u):
    s = sigmoid(u)
    return s * s


def _tanh2(u):
    t = np.tanh(u)
    return t * t


def _moment_pair(g, stats: PreActivationStats, k: str, order: int):
    """(E[g], E[g^2], E[g_a g_b]) of g(u_k) over the correlated pair."""
    mu, s2 = stats.mu(k), stats.sigma2_pre(k)
    e1 = expect1(g, mu, s2, order)
    e2 = expect2(g, g, GaussianPairSpec(mu, s2, 1.0), order)
    epair = expect2(g, g, stats.pair(k), order)
    return e1, e2, epair


def _correlation_from(rho: float, mu: float, q: float) -> float:
    s2 = q - mu * mu
    if s2 <= _DEG_TOL * max(1.0, abs(q)):
        return 0.0
    c = (rho - mu * mu) / s2
    if abs(c) > 1.0 + 1e-9:
        raise ArithmeticError(f"state correlation {c} out of range (bug)")
    return min(max(c, -1.0), 1.0)


def _convex_update_moments(
    mu_s, q_s, rho_s, e_gam, e_gam2, e_gampair, e_x, e_x2, e_xpair
):
    """Moments of s' = gamma s + (1 - gamma) x with gamma, x, s independent."""
    mu_n = e_gam * mu_s + (1.0 - e_gam) * e_x
    q_n = e_gam2 * q_s + 2.0 * (e_gam - e_gam2) * mu_s * e_x + (1.0 - 2.0 * e_gam + e_gam2) * e_x2
    rho_n = (
        e_gampair * rho_s
        + 2.0 * (e_gam - e_gampair) * mu_s * e_x
        + (1.0 - 2.0 * e_gam + e_gampair) * e_xpair
    )
    return mu_n, q_n, rho_n


def _rho_s(state: MomentState) -> float:
    return state.q_s if state.c_s == 1.0 else state.c_s * state.sigma2_s + state.mu_s * state.mu_s


def _step_vanilla(theta, arch, state, inputs, order):
    stats = preactivation_stats(theta, arch, state, inputs, order)
    e1, e2, ep = _moment_pair(sigmoid, stats, "f", order)
    return e1, e2, ep


def _step_convex(theta, arch, state, inputs, order, x_label):
    stats = preactivation_stats(theta, arch, state, inputs, order)
    e_gam, e_gam2, e_gampair = _moment_pair(sigmoid, stats, "f", order)
    e_x, e_x2, e_xpair = _moment_pair(np.tanh, stats, x_label, order)
    return _convex_update_moments(
        state.mu_s, state.q_s, _rho_s(state), e_gam, e_gam2, e_gampair, e_x, e_x2, e_xpair
    )


def _step_peephole(theta, arch, state, inputs, order):
    stats = preactivation_stats(theta, arch, state, inputs, order)
    e_gam, e_gam2, e_gampair = _moment_pair(sigmoid, stats, "f", order)
    e_i, e_i2, e_ipair = _moment_pair(sigmoid, stats, "i", order)
    e_t, e_t2, e_tpair = _moment_pair(np.tanh, stats, "r", order)
    mu_c, q_c = state.mu_s, state.q_s
    mu_n = e_gam * mu_c + e_i * e_t
    q_n = e_gam2 * q_c + 2.0 * e_gam * mu_c * e_i * e_t + e_i2 * e_t2
    rho_n = e_gampair * _rho_s(state) + 2.0 * e_gam * mu_c * e_i * e_t + e_ipair * e_tpair
    return mu_n, q_n, rho_n


def _lstm_output_moments(theta, stats, cell_new, order):
    from .lstm_cell_sampler import CellStateEnsemble  # local to avoid import cycles

    assert isinstance(cell_new, CellStateEnsemble)
    e_o = expect1(sigmoid, stats.mu("o"), stats.sigma2_pre("o"), order)
    e_o2 = expect2(sigmoid, sigmoid, GaussianPairSpec(stats.mu("o"), stats.sigma2_pre("o"), 1.0), order)
    th = np.tanh(cell_new.samples)
    mu_n = e_o * float(np.mean(th))
    q_n = e_o2 * float(np.mean(th * th))
    rho_n = None
    if cell_new.paired:
        e_opair = expect2(sigmoid, sigmoid, stats.pair("o"), order)
        th_b = np.tanh(cell_new.samples_b)
        rho_n = e_opair * float(np.mean(th * th_b))
    return mu_n, q_n, rho_n


def step_moments(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    state: MomentState,
    inputs: InputStats,
    cell=None,
    order: int = DEFAULT_ORDER,
) -> MomentState:
    """One step of the moment map: (mu, Q, C) -> (mu', Q', C').

    For the LSTM a cell ensemble must be supplied; it is advanced one step
    internally (using this state's gate statistics) to evaluate the output
    moments. The caller keeps its own copy in sync with advance_cell, which
    reproduces the identical advance from the ensemble's seed lineage.
    Correlation output for the LSTM requires a paired ensemble unless the
    result is degenerate.
    """

    name = arch.name
    if name == "vanillaRNN":
        mu_n, q_n, rho_n = _step_vanilla(theta, arch, state, inputs, order)
    elif name == "minimalRNN":
        mu_n, q_n, rho_n = _step_convex(theta, arch, state, inputs, order, "r")
    elif name == "GRU":
        mu_n, q_n, rho_n = _step_convex(theta, arch, state, inputs, order, "r2")
    elif name == "peepholeLSTM":
        mu_n, q_n, rho_n = _step_peephole(theta, arch, state, inputs, order)
    elif name == "LSTM":
        if cell is None:
            raise MissingCellEnsemble("the LSTM moment map needs a cell ensemble")
        from .lstm_cell_sampler import advance_cell

        stats = preactivation_stats(theta, arch, state, inputs, order)
        cell_new = advance_cell(theta, stats, cell)
        mu_n, q_n, rho_n = _lstm_output_moments(theta, stats, cell_new, order)
        if rho_n is None:
            if q_n - mu_n * mu_n <= _DEG_TOL * max(1.0, abs(q_n)):
                return MomentState(mu_n, max(q_n, mu_n * mu_n), 0.0)
            raise MissingCellEnsemble(
                "correlation stepping for the LSTM needs a paired ensemble "
                "(see correlated_cell_pairs)"
            )
    else:
        raise ValueError(f"no moment map for architecture {name!r}")
    return MomentState(mu_n, q_n, _correlation_from(rho_n, mu_n, q_n))


def step_correlation(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    fixed: MomentState,
    c_s: float,
    inputs: InputStats,
    cell=None,
    order: int = DEFAULT_ORDER,
    n_s: int = 200,
    n_iters: int = 200,
    seed: int = 0,
) -> float:
    """The scalar correlation map C -> M_C(C) at a converged (mu*, Q*).

    Normalization uses the fixed (mu*, Q*), so at the moment fixed point the
    map is exactly one dimensional in C. For the LSTM the value is computed
    on stationary coupled cell pairs re-equilibrated at the gate
    correlations implied by C (deterministic in C for a fixed seed, which
    keeps finite differences and fixed-point iteration well posed); a
    supplied paired ensemble seeds the initialization.
    """

    sigma2_star = fixed.q_s - fixed.mu_s * fixed.mu_s
    if sigma2_star <= _DEG_TOL * max(1.0, abs(fixed.q_s)):
        raise DegenerateCorrelation(
            "correlation map undefined at a degenerate (point mass) state"
        )
    if abs(c_s) > 1.0:
        raise ValueError(f"|C| must be <= 1, got {c_s}")
    state = MomentState(fixed.mu_s, fixed.q_s, c_s)
    name = arch.name
    if name == "vanillaRNN":
        _, _, rho_n = _step_vanilla(theta, arch, state, inputs, order)
    elif name == "minimalRNN":
        _, _, rho_n = _step_convex(theta, arch, state, inputs, order, "r")
    elif name == "GRU":
        _, _, rho_n = _step_convex(theta, arch, state, inputs, order, "r2")
    elif name == "peepholeLSTM":
        _, _, rho_n = _step_peephole(theta, arch, state, inputs, order)
    elif name == "LSTM":
        from .lstm_cell_sampler import correlated_cell_pairs

        stats = preactivation_stats(theta, arch, state, inputs, order)
        init = cell if (cell is not None and getattr(cell, "paired", False)) else None
        pairs = correlated_cell_pairs(theta, stats, n_s=n_s, n_iters=n_iters, seed=seed, init=init)
        e_opair = expect2(sigmoid, sigmoid, stats.pair("o"), order)
        rho_n = e_opair * float(np.mean(np.tanh(pairs.samples) * np.tanh(pairs.samples_b)))
    else:
        raise ValueError(f"no correlation map for architecture {name!r}")
    return (rho_n - fixed.mu_s * fixed.mu_s) / sigma2_star


def moment_trajectory(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    inputs: InputStats,
    T: int,
    order: int = DEFAULT_ORDER,
    n_s: int = 200,
    n_iters: int = 0,
    seed: int = 0,
    sigma_z_schedule=None,
    start: Optional[MomentState] = None,
) -> list:
    """T steps of the moment map from the zero state, as a list of states.

    Mirrors the simulator's transient: index t is the prediction after t
    updates. A per-step sigma_z schedule overrides inputs.sigma_z. For the
    LSTM the cell ensemble starts at zero (n_iters = 0 equilibration, i.e.
    the true transient) and is advanced in lockstep with the moments.
    """

    state = start if start is not None else ZERO_STATE
    traj = [state]
    cell = None
    if arch.name == "LSTM":
        from .lstm_cell_sampler import correlated_cell_pairs

        stats0 = preactivation_stats(theta, arch, state, inputs, order)
        cell = correlated_cell_pairs(theta, stats0, n_s=n_s, n_iters=n_iters, seed=seed)
    for t in range(T):
        sz = inputs.sigma_z if sigma_z_schedule is None else float(sigma_z_schedule[t])
        step_inputs = InputStats(inputs.R, sz)
        if arch.name == "LSTM":
            from .lstm_cell_sampler import advance_cell

            stats = preactivation_stats(theta, arch, state, step_inputs, order)
            state = step_moments(theta, arch, state, step_inputs, cell=cell, order=order)
            cell = advance_cell(theta, stats, cell)
        else:
            state = step_moments(theta, arch, state, step_inputs, order=order)
        traj.append(state)
    return traj
