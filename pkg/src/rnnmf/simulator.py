"""Finite-width, untied-weights simulator: the package's empirical oracle.

Runs the actual recurrent systems at width N with fresh Gaussian weight
draws per step (untied mode; tied mode reuses the first step's draws purely
for the comparison experiments). Provides coupled-pair moment trajectories,
a one-step state-to-state Jacobian assembled from the displayed derivative
formula, the same map as a callable for finite-difference checks, and raw
stationary cell samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import (
    ArchitectureSpec,
    Hyperparameters,
    InputStats,
    SimulationConfig,
    dsigmoid,
    dtanh,
    sigmoid,
    validate_theta,
)

__all__ = [
    "NonFiniteState",
    "WeightDraw",
    "SpectrumReport",
    "TrajectoryPoint",
    "JacobianFrame",
    "simulate_pair",
    "build_jacobian",
    "jacobian_frame",
    "assemble_jacobian",
    "simulate_cell_distribution",
]

_MAX_SVD_N = 2048  # dense SVD guardrail

_G_FUNCS = {"sigmoid": sigmoid, "tanh": np.tanh}

_DG_FUNCS = {"sigmoid": dsigmoid, "tanh": dtanh}


class NonFiniteState(ArithmeticError):
    pass


@dataclass(frozen=True)
class WeightDraw:
    """One step's weight draws: per gate W (N x N), U (N x M), b (N,)."""

    W: Mapping[str, np.ndarray]
    U: Mapping[str, np.ndarray]
    b: Mapping[str, np.ndarray]


@dataclass(frozen=True)
class SpectrumReport:
    """Squared singular values (descending) with their mean and variance."""

    squared_singular_values: np.ndarray
    mean: float
    variance: float

    @classmethod
    def from_matrix(cls, J: np.ndarray) -> "SpectrumReport":
        sv = np.linalg.svd(J, compute_uv=False)
        sq = np.sort(sv * sv)[::-1]
        return cls(squared_singular_values=sq, mean=float(np.mean(sq)), variance=float(np.var(sq)))


@dataclass(frozen=True)
class TrajectoryPoint:
    """Cross-unit empirical moments of a coupled pair at one time step."""

    t: int
    mu: float
    q: float
    c: float  # NaN when the state variance is (numerically) zero
    se_mu: float
    se_q: float
    se_c: float


def _draw_step(rng, theta: Hyperparameters, labels, N: int, M: int) -> WeightDraw:
    W, U, b = {}, {}, {}
    for k in labels:
        W[k] = rng.standard_normal((N, N)) * math.sqrt(theta.sigma2(k) / N)
        U[k] = rng.standard_normal((N, M)) * math.sqrt(theta.nu2(k) / N)
        b[k] = theta.mu(k) + rng.standard_normal(N) * math.sqrt(theta.rho2(k))
    return WeightDraw(W=W, U=U, b=b)


def _preactivations(arch: ArchitectureSpec, draw: WeightDraw, s: np.ndarray, z: np.ndarray) -> dict:
    u: dict = {}
    for g in arch.gates:
        if g.form == "gated":
            inner = _G_FUNCS[g.g_name](u[g.gated_by])
            u[g.label] = draw.W[g.label] @ (inner * s) + draw.U[g.label] @ z + draw.b[g.label]
        else:
            u[g.label] = draw.W[g.label] @ s + draw.U[g.label] @ z + draw.b[g.label]
    return u


def _lstm_cell_update(u: dict, c: np.ndarray) -> np.ndarray:
    return sigmoid(u["f"]) * c + sigmoid(u["i"]) * np.tanh(u["r"])


def _check_finite(x: np.ndarray, t: int):
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"state became non-finite at step {t}")


def _advance(arch, u: dict, s: np.ndarray, c: Optional[np.ndarray]):
    if arch.needs_cell:
        c_new = _lstm_cell_update(u, c)
        return sigmoid(u["o"]) * np.tanh(c_new), c_new
    return arch.f(s, u), None


def _empirical(sa, sb, t) -> TrajectoryPoint:
    N = sa.size
    rt = math.sqrt(N)
    mu = 0.5 * float(np.mean(sa) + np.mean(sb))
    q = 0.5 * float(np.mean(sa * sa) + np.mean(sb * sb))
    se_mu = float(np.std(sa)) / rt
    se_q = float(np.std(sa * sa)) / rt
    if np.array_equal(sa, sb):
        # identical computation path: correlation is 1 by construction
        return TrajectoryPoint(t, mu, q, 1.0, se_mu, se_q, 0.0)
    va = float(np.var(sa))
    vb = float(np.var(sb))
    if va <= 0.0 or vb <= 0.0:
        return TrajectoryPoint(t, mu, q, math.nan, se_mu, se_q, math.nan)
    prod = sa * sb
    cov = float(np.mean(prod)) - float(np.mean(sa)) * float(np.mean(sb))
    denom = math.sqrt(va * vb)
    se_c = float(np.std(prod)) / rt / denom
    return TrajectoryPoint(t, mu, q, cov / denom, se_mu, se_q, se_c)


def simulate_pair(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    config: SimulationConfig,
    inputs: InputStats,
    tied: bool = False,
    seed: Optional[int] = None,
    sigma_z_schedule=None,
) -> list:
    """Trajectory of empirical (mu, Q, C) for two weight-sharing copies.

    Both copies start from the same initial state and see the same weight
    draws every step (fresh per step unless tied); their inputs are i.i.d.
    per-coordinate Gaussian pairs with covariance R [[1, sz], [sz, 1]],
    where sz is inputs.sigma_z or, when given, sigma_z_schedule[t]. Returns
    TrajectoryPoints for t = 0..T with single-copy standard errors.
    """

    validate_theta(theta, arch)
    N, T = config.N, config.T
    if sigma_z_schedule is not None:
        sched = np.asarray(sigma_z_schedule, dtype=float)
        if sched.size < T:
            raise ValueError(f"schedule has {sched.size} entries < T = {T}")
        if np.any(np.abs(sched) > 1.0):
            raise ValueError("schedule entries must lie in [-1, 1]")
    else:
        sched = np.full(T, inputs.sigma_z)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed if seed is None else seed))
    labels = arch.labels()
    s0 = np.full(N, config.d0_mean, dtype=float)
    if config.d0_var > 0.0:
        s0 = s0 + rng.standard_normal(N) * math.sqrt(config.d0_var)
    sa = s0.copy()
    sb = s0.copy()
    ca = np.zeros(N) if arch.needs_cell else None
    cb = np.zeros(N) if arch.needs_cell else None
    sqrtR = math.sqrt(inputs.R)
    out = [_empirical(sa, sb, 0)]
    draw0 = None
    for t in range(1, T + 1):
        if tied:
            if draw0 is None:
                draw0 = _draw_step(rng, theta, labels, N, N)
            draw = draw0
        else:
            draw = _draw_step(rng, theta, labels, N, N)
        sz = float(sched[t - 1])
        g1 = rng.standard_normal(N)
        g2 = rng.standard_normal(N)
        za = sqrtR * g1
        zb = sqrtR * (sz * g1 + math.sqrt(max(1.0 - sz * sz, 0.0)) * g2) if sz != 1.0 else za.copy()
        ua = _preactivations(arch, draw, sa, za)
        ub = _preactivations(arch, draw, sb, zb)
        sa, ca = _advance(arch, ua, sa, ca)
        sb, cb = _advance(arch, ub, sb, cb)
        _check_finite(sa, t)
        _check_finite(sb, t)
        out.append(_empirical(sa, sb, t))
    return out


@dataclass(frozen=True)
class JacobianFrame:
    """A burned-in state with the fresh draws of one assembly step.

    one_step re-runs the step from an arbitrary state vector with everything
    else held fixed, which is exactly the map the assembled Jacobian is the
    derivative of. For the LSTM the tracked state is h and the previous cell
    enters through the stored output-gate pre-activations: c = artanh(h /
    sigmoid(u_o_prev)), so the map is closed in h.
    """

    arch: ArchitectureSpec = field(repr=False)
    state: np.ndarray
    cell: Optional[np.ndarray]
    u_o_prev: Optional[np.ndarray]
    draw: WeightDraw = field(repr=False)
    z: np.ndarray
    u: dict = field(repr=False)

    def one_step(self, s: np.ndarray) -> np.ndarray:
        u = _preactivations(self.arch, self.draw, s, self.z)
        if self.arch.needs_cell:
            c = np.arctanh(s / sigmoid(self.u_o_prev))
            c_new = _lstm_cell_update(u, c)
            return sigmoid(u["o"]) * np.tanh(c_new)
        return self.arch.f(s, u)


def jacobian_frame(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    config: SimulationConfig,
    seed: Optional[int] = None,
    inputs: Optional[InputStats] = None,
    burn_in: int = 100,
) -> JacobianFrame:
    """Burn the network in for burn_in steps, then freeze one step's draws."""

    validate_theta(theta, arch)
    inputs = inputs if inputs is not None else InputStats(1.0, 1.0)
    N = config.N
    rng = np.random.default_rng(np.random.SeedSequence(config.seed if seed is None else seed))
    labels = arch.labels()
    s = np.zeros(N)
    c = np.zeros(N) if arch.needs_cell else None
    u_o = None
    sqrtR = math.sqrt(inputs.R)
    for t in range(1, burn_in + 1):
        draw = _draw_step(rng, theta, labels, N, N)
        z = sqrtR * rng.standard_normal(N)
        u = _preactivations(arch, draw, s, z)
        s, c = _advance(arch, u, s, c)
        _check_finite(s, t)
        if arch.needs_cell:
            u_o = u["o"]
    if arch.needs_cell and u_o is None:
        raise ValueError("burn_in must be >= 1 for the cell-carrying architecture")
    draw = _draw_step(rng, theta, labels, N, N)
    z = sqrtR * rng.standard_normal(N)
    u = _preactivations(arch, draw, s, z)
    return JacobianFrame(arch=arch, state=s, cell=c, u_o_prev=u_o, draw=draw, z=z, u=u)


def assemble_jacobian(theta: Hyperparameters, frame: JacobianFrame) -> np.ndarray:
    """Derivative matrix of frame.one_step at frame.state, assembled from
    the per-gate derivative profiles and the frame's weight draws."""

    arch = frame.arch
    s, u, draw = frame.state, frame.u, frame.draw
    N = s.size
    if arch.needs_cell:
        do = sigmoid(frame.u_o_prev)
        c = np.arctanh(s / do)
        c_new = _lstm_cell_update(u, c)
        diag = sigmoid(u["f"]) * sigmoid(u["o"]) * dtanh(c_new) / (do * dtanh(c))
        J = np.diag(diag)
        for k in arch.labels():
            J += arch.dk[k](s, u, c)[:, None] * draw.W[k]
        return J
    inner_labels = {g.gated_by for g in arch.gates if g.gated_by is not None}
    J = np.diag(np.broadcast_to(np.asarray(arch.d0(s, u), dtype=float), (N,)))
    for g in arch.gates:
        if g.form == "gated":
            gfun, dgfun = _G_FUNCS[g.g_name], _DG_FUNCS[g.g_name]
            uk = u[g.gated_by]
            outer = arch.dk[g.label](s, u)[:, None] * draw.W[g.label]
            J += outer * gfun(uk)[None, :]
            J += (outer * (s * dgfun(uk))[None, :]) @ draw.W[g.gated_by]
        elif g.label in inner_labels:
            continue  # reaches the state only through its gated consumer
        else:
            J += arch.dk[g.label](s, u)[:, None] * draw.W[g.label]
    return J


def build_jacobian(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    config: SimulationConfig,
    seed: Optional[int] = None,
    inputs: Optional[InputStats] = None,
    burn_in: int = 100,
):
    """State-to-state Jacobian after burn-in, with its squared-SV spectrum.

    Assembles J = diag + sum_k diag(df/du_k) W_k (plus the gated chain term
    for architectures with a gated gate) from one frozen step and returns
    (J, SpectrumReport). Width is capped at 2048 to keep the dense SVD fast.
    """

    if config.N > _MAX_SVD_N:
        raise ValueError(f"N = {config.N} exceeds the SVD cap {_MAX_SVD_N}")
    frame = jacobian_frame(theta, arch, config, seed=seed, inputs=inputs, burn_in=burn_in)
    J = assemble_jacobian(theta, frame)
    if not np.all(np.isfinite(J)):
        raise NonFiniteState("assembled Jacobian has non-finite entries")
    return J, SpectrumReport.from_matrix(J)


def simulate_cell_distribution(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    config: SimulationConfig,
    seed: Optional[int] = None,
    inputs: Optional[InputStats] = None,
) -> np.ndarray:
    """Cell values of one width-N network after T steps of i.i.d. inputs.

    Only meaningful for the cell-carrying architectures (the peephole's
    tracked state is its cell; the LSTM's hidden state is paired with an
    internal cell, which is what gets returned).
    """

    if arch.name not in ("LSTM", "peepholeLSTM"):
        raise ValueError(f"{arch.name} has no cell state")
    validate_theta(theta, arch)
    inputs = inputs if inputs is not None else InputStats(1.0, 1.0)
    N = config.N
    rng = np.random.default_rng(np.random.SeedSequence(config.seed if seed is None else seed))
    labels = arch.labels()
    s = np.zeros(N)
    c = np.zeros(N) if arch.needs_cell else None
    sqrtR = math.sqrt(inputs.R)
    for t in range(1, config.T + 1):
        draw = _draw_step(rng, theta, labels, N, N)
        z = sqrtR * rng.standard_normal(N)
        u = _preactivations(arch, draw, s, z)
        s, c = _advance(arch, u, s, c)
        _check_finite(s, t)
    return c if arch.needs_cell else s
