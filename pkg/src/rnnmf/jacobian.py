"""Spectral moments of the asymptotic state-to-state Jacobian.

At the moment fixed point the Jacobian is a sum of a random diagonal and
independent Gaussian matrices with unit-dependent diagonal profiles,
J = D_0 + sum_k D_k W_k (+ the gated chain for the GRU). Its squared
singular value moments reduce to expectations of per-unit "contribution"
values a_k:

    m1    = E[sum_k a_k]
    sigma = E[(sum_k a_k)^2] - (E[a_0])^2
    m2    = sigma + m1^2

The four quadrature architectures evaluate these exactly with a small term
algebra over Gaussian gate expectations; the LSTM estimates them on a
sampled stationary cell frame. With fully correlated copies the correlation
map slope chi equals m1, which is the identity the tests pin down.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .core import (
    ArchitectureSpec,
    Hyperparameters,
    InputStats,
    MomentState,
    dsigmoid,
    dtanh,
    sigmoid,
)
from .lstm_cell_sampler import CellStateEnsemble, _advance_streams, correlated_cell_pairs
from .moment_maps import PreActivationStats, preactivation_stats
from .quadrature import DEFAULT_ORDER, expect1

__all__ = [
    "ContributionVector",
    "JacobianMoments",
    "IsometryGap",
    "contribution_vector",
    "moments",
    "isometry_gap",
    "lstm_chi_frame",
    "jacobian_report_dict",
    "CRITICAL_TOL",
]

CRITICAL_TOL = 1e-2  # per-component threshold for calling a point critical

_PRIMS = {
    "sig": sigmoid,
    "dsig": dsigmoid,
    "tanh": np.tanh,
    "dtanh": dtanh,
    "omsig": lambda u: 1.0 - sigmoid(u),
}


def _prod_func(names):
    fs = tuple(_PRIMS[n] for n in names)

    def g(u):
        out = fs[0](u)
        for f in fs[1:]:
            out = out * f(u)
        return out

    return g


@dataclass(frozen=True)
class _Term:
    """coef * s^s_pow * prod_k prims(u_k), all inside one expectation,
    times pre-averaged factor blocks (avg), each its own expectation."""

    coef: float
    s_pow: int = 0
    funcs: tuple = ()  # ((gate, (prim, ...)), ...)
    avg: tuple = ()  # ((s_pow, funcs), ...)


def _mk(coef, s_pow=0, funcs=(), avg=()):
    canon = tuple(sorted((g, tuple(sorted(ps))) for g, ps in funcs))
    return _Term(coef, s_pow, canon, tuple(avg))


def _tmul(t1: _Term, t2: _Term) -> _Term:
    merged: dict[str, tuple] = {}
    for g, ps in t1.funcs + t2.funcs:
        merged[g] = merged.get(g, ()) + ps
    funcs = tuple(sorted((g, tuple(sorted(ps))) for g, ps in merged.items()))
    return _Term(t1.coef * t2.coef, t1.s_pow + t2.s_pow, funcs, t1.avg + t2.avg)


class _EvalCtx:
    def __init__(self, stats: PreActivationStats, state_powers, order: int):
        self.stats = stats
        self.powers = state_powers  # [1, E s, E s^2, E s^3, E s^4]
        self.order = order
        self._memo: dict = {}

    def gate_expect(self, gate: str, prims: tuple) -> float:
        key = (gate, prims)
        if key not in self._memo:
            self._memo[key] = expect1(
                _prod_func(prims), self.stats.mu(gate), self.stats.sigma2_pre(gate), self.order
            )
        return self._memo[key]

    def term(self, t: _Term) -> float:
        v = t.coef
        if t.s_pow:
            v *= self.powers[t.s_pow]
        for g, ps in t.funcs:
            v *= self.gate_expect(g, ps)
        for s_pow, funcs in t.avg:
            if s_pow:
                v *= self.powers[s_pow]
            for g, ps in funcs:
                v *= self.gate_expect(g, ps)
        return v

    def terms(self, ts) -> float:
        return sum(self.term(t) for t in ts)


def _entries_vanilla(theta):
    return {
        "a_0": [],
        "f": [_mk(theta.sigma2("f"), funcs=(("f", ("dsig", "dsig")),))],
    }


def _entries_convex(theta, x: str):
    """minimalRNN (x = 'r') and GRU (x = 'r2'): s' = sig(u_f) s + (1-sig) tanh(u_x)."""
    sf2 = theta.sigma2("f")
    out = {
        "a_0": [_mk(1.0, funcs=(("f", ("sig", "sig")),))],
        "f": [
            _mk(sf2, s_pow=2, funcs=(("f", ("dsig", "dsig")),)),
            _mk(-2.0 * sf2, s_pow=1, funcs=(("f", ("dsig", "dsig")), (x, ("tanh",)))),
            _mk(sf2, funcs=(("f", ("dsig", "dsig")), (x, ("tanh", "tanh")))),
        ],
    }
    return out


def _entries_minimal(theta):
    out = _entries_convex(theta, "r")
    out["r"] = [_mk(theta.sigma2("r"), funcs=(("f", ("omsig", "omsig")), ("r", ("dtanh", "dtanh"))))]
    return out


def _entries_gru(theta):
    out = _entries_convex(theta, "r2")
    s22 = theta.sigma2("r2")
    outer = (("f", ("omsig", "omsig")), ("r2", ("dtanh", "dtanh")))
    # the inner-chain factors enter pre-averaged: unit-level fluctuations of
    # the inner matrix's column profile wash out of the trace at large width
    out["r"] = [_mk(theta.sigma2("r") * s22, funcs=outer, avg=((2, (("r", ("dsig", "dsig")),)),))]
    out["r2"] = [_mk(s22, funcs=outer, avg=((0, (("r", ("sig", "sig")),)),))]
    return out


def _entries_peephole(theta):
    return {
        "a_0": [_mk(1.0, funcs=(("f", ("sig", "sig")),))],
        "i": [_mk(theta.sigma2("i"), funcs=(("i", ("dsig", "dsig")), ("r", ("tanh", "tanh"))))],
        "f": [_mk(theta.sigma2("f"), s_pow=2, funcs=(("f", ("dsig", "dsig")),))],
        "r": [_mk(theta.sigma2("r"), funcs=(("i", ("sig", "sig")), ("r", ("dtanh", "dtanh"))))],
        # the output gate never feeds back into the cell: D_o = 0 identically,
        # so its entry is omitted
    }


_ENTRY_BUILDERS = {
    "vanillaRNN": _entries_vanilla,
    "minimalRNN": _entries_minimal,
    "GRU": _entries_gru,
    "peepholeLSTM": _entries_peephole,
}

_ENTRY_ORDER = {
    "vanillaRNN": ("a_0", "f"),
    "minimalRNN": ("a_0", "f", "r"),
    "GRU": ("a_0", "f", "r", "r2"),
    "peepholeLSTM": ("a_0", "i", "f", "r"),
    "LSTM": ("a_0", "i", "f", "r", "o"),
}


def _stationary_state_powers(theta, arch, stats: PreActivationStats, mu_star, q_star, order):
    """E[s^p] for p = 0..4 at the moment fixed point.

    p = 1, 2 are (mu*, Q*); higher powers follow from the update's
    independence structure, e.g. for s' = gamma s + (1 - gamma) x:
    E[s^p] (1 - E[gamma^p]) = sum_{j<p} C(p,j) E[gamma^j (1-gamma)^{p-j}]
    E[s^j] E[x^{p-j}].
    """

    M = [1.0, mu_star, q_star, 0.0, 0.0]
    name = arch.name
    if name == "vanillaRNN":
        for p in (1, 2, 3, 4):
            M[p] = expect1(_prod_func(("sig",) * p), stats.mu("f"), stats.sigma2_pre("f"), order)
        return M
    if name in ("minimalRNN", "GRU"):
        x = "r" if name == "minimalRNN" else "r2"
        ex = [1.0] + [
            expect1(_prod_func(("tanh",) * m), stats.mu(x), stats.sigma2_pre(x), order)
            for m in (1, 2, 3, 4)
        ]

        def egam(j, m):
            prims = ("sig",) * j + ("omsig",) * m
            if not prims:
                return 1.0
            return expect1(_prod_func(prims), stats.mu("f"), stats.sigma2_pre("f"), order)

        for p in (3, 4):
            acc = 0.0
            for j in range(p):
                acc += math.comb(p, j) * egam(j, p - j) * M[j] * ex[p - j]
            denom = 1.0 - egam(p, 0)
            if denom <= 1e-15:
                raise ArithmeticError("stationary state power diverges (forget gate saturated)")
            M[p] = acc / denom
        return M
    if name == "peepholeLSTM":
        ew = [1.0] + [
            expect1(_prod_func(("sig",) * m), stats.mu("i"), stats.sigma2_pre("i"), order)
            * expect1(_prod_func(("tanh",) * m), stats.mu("r"), stats.sigma2_pre("r"), order)
            for m in (1, 2, 3, 4)
        ]
        eg = [1.0] + [
            expect1(_prod_func(("sig",) * p), stats.mu("f"), stats.sigma2_pre("f"), order)
            for p in (1, 2, 3, 4)
        ]
        for p in (3, 4):
            acc = 0.0
            for j in range(p):
                acc += math.comb(p, j) * eg[j] * M[j] * ew[p - j]
            denom = 1.0 - eg[p]
            if denom <= 1e-15:
                raise ArithmeticError("stationary state power diverges (forget gate saturated)")
            M[p] = acc / denom
        return M
    raise ValueError(f"no state-power recursion for {name!r}")


@dataclass(frozen=True)
class ContributionVector:
    """First and second moments of the per-unit contribution values.

    ea[k] = E[a_k]; eaa[(k, l)] = E[a_k a_l] with the shared gate variables
    of the two entries integrated jointly. Keys are 'a_0' plus gate labels.
    """

    labels: tuple
    ea: Mapping[str, float]
    eaa: Mapping[tuple, float]
    se_m1: Optional[float] = None

    def __post_init__(self):
        for k, v in self.ea.items():
            if v < -1e-10:
                raise ArithmeticError(f"contribution entry {k} = {v} < 0 (bug)")

    @property
    def a0(self) -> float:
        return self.ea["a_0"]

    def a(self, k: str) -> float:
        return self.ea[k]

    def cross(self, k: str, l: str) -> float:
        return self.eaa[(k, l)]

    def as_tuple(self) -> tuple:
        return tuple(max(self.ea[k], 0.0) for k in self.labels)


@dataclass(frozen=True)
class JacobianMoments:
    """Mean, second moment and variance of the squared singular values."""

    m1: float
    m2: float
    sigma: float
    m1_se: Optional[float] = None


@dataclass(frozen=True)
class IsometryGap:
    chi_gap: float
    m1_gap: float
    sigma_gap: float
    norm: float
    critical: bool


def _fixed_state(fixed) -> MomentState:
    if isinstance(fixed, MomentState):
        return MomentState(fixed.mu_s, fixed.q_s, 1.0)
    return MomentState(fixed.mu_star, fixed.q_star, 1.0)


def _fixed_inputs(fixed, inputs) -> InputStats:
    if inputs is not None:
        return inputs
    got = getattr(fixed, "inputs", None)
    if got is None:
        raise ValueError("pass inputs= (the fixed-point object does not carry them)")
    return got


def lstm_chi_frame(
    theta: Hyperparameters,
    stats: PreActivationStats,
    n_s: int = 200,
    n_iters: int = 200,
    seed: int = 0,
    init: Optional[CellStateEnsemble] = None,
):
    """Per-sample contribution values on a stationary coupled cell frame.

    Chains are equilibrated for n_iters - 1 steps at the gate correlations
    carried by stats, then one recorded update produces the fresh gate draws
    and updated cells entering the contribution formulas. Returns a dict of
    per-sample arrays keyed 'a_0', 'i', 'f', 'r', 'o'. With all C_k = 1 the
    two chains coincide and the arrays are the single-network contributions,
    whose mean is m1; at general C the mean of their sum is the correlation
    map slope chi. Same seed means the same frame for both uses.
    """

    if n_iters < 1:
        raise ValueError("n_iters >= 1 required (one recorded update)")
    pairs = correlated_cell_pairs(theta, stats, n_s=n_s, n_iters=n_iters - 1, seed=seed, init=init)
    ca, cb = pairs.samples, pairs.samples_b
    # recorded update: draw streams the same way advance_cell would,
    # with a fourth column for the output gate
    Z = _advance_streams(pairs.meta.seed, pairs.meta.step_index, n_s, (4, 2))
    labels = ("i", "f", "r", "o")
    mus = np.array([stats.mu(k) for k in labels])
    sigs = np.array([math.sqrt(stats.sigma2_pre(k)) for k in labels])
    cs = np.array([stats.pair_c(k) for k in labels])
    roots = np.sqrt(np.maximum(1.0 - cs * cs, 0.0))
    ua = mus + sigs * Z[:, :, 0]
    ub = mus + sigs * (cs * Z[:, :, 0] + roots * Z[:, :, 1])
    u_ia, u_fa, u_ra, u_oa = ua.T
    u_ib, u_fb, u_rb, u_ob = ub.T
    cna = sigmoid(u_fa) * ca + sigmoid(u_ia) * np.tanh(u_ra)
    cnb = sigmoid(u_fb) * cb + sigmoid(u_ib) * np.tanh(u_rb)
    oo = sigmoid(u_oa) * sigmoid(u_ob)
    dth = dtanh(cna) * dtanh(cnb)
    out = {
        "a_0": sigmoid(u_fa) * sigmoid(u_fb),
        "i": theta.sigma2("i") * oo * dth * dsigmoid(u_ia) * dsigmoid(u_ib) * np.tanh(u_ra) * np.tanh(u_rb),
        "f": theta.sigma2("f") * oo * dth * ca * cb * dsigmoid(u_fa) * dsigmoid(u_fb),
        "r": theta.sigma2("r") * oo * dth * sigmoid(u_ia) * sigmoid(u_ib) * dtanh(u_ra) * dtanh(u_rb),
        "o": theta.sigma2("o") * dsigmoid(u_oa) * dsigmoid(u_ob) * np.tanh(cna) * np.tanh(cnb),
    }
    return out


def _lstm_contribution(theta, fixed_state, inputs, order, n_s, n_iters, seed, cell):
    inputs_m1 = InputStats(inputs.R, 1.0)  # m1/sigma are single-network quantities
    stats = preactivation_stats(theta, _LSTM_ARCH(), fixed_state, inputs_m1, order)
    init = None
    if cell is not None:
        if cell.paired:
            init = cell
        else:
            init = CellStateEnsemble(samples=cell.samples, meta=cell.meta, samples_b=cell.samples.copy())
        if init.meta.n_s != n_s:
            n_s = init.meta.n_s
    frame = lstm_chi_frame(theta, stats, n_s=n_s, n_iters=n_iters, seed=seed, init=init)
    labels = _ENTRY_ORDER["LSTM"]
    ea = {k: float(np.mean(frame[k])) for k in labels}
    eaa = {}
    for k in labels:
        for l in labels:
            eaa[(k, l)] = float(np.mean(frame[k] * frame[l]))
    total = sum(frame[k] for k in labels)
    se_m1 = float(np.std(total, ddof=1) / math.sqrt(len(total)))
    return ContributionVector(labels=labels, ea=ea, eaa=eaa, se_m1=se_m1)


def _LSTM_ARCH():
    from .core import get_architecture

    return get_architecture("LSTM")


def contribution_vector(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    fixed,
    cell: Optional[CellStateEnsemble] = None,
    inputs: Optional[InputStats] = None,
    order: int = DEFAULT_ORDER,
    n_s: int = 200,
    n_iters: int = 200,
    seed: int = 0,
) -> ContributionVector:
    """E[a_k] and E[a_k a_l] of the per-unit contributions at the fixed point.

    `fixed` is a converged fixed-point report (or a MomentState); inputs are
    taken from it when it carries them. The quadrature architectures are
    exact; the LSTM samples a stationary cell frame (seeded, CRN-friendly),
    warm-started from `cell` when given.
    """

    state = _fixed_state(fixed)
    inp = _fixed_inputs(fixed, inputs)
    if arch.name == "LSTM":
        return _lstm_contribution(theta, state, inp, order, n_s, n_iters, seed, cell)
    if arch.name not in _ENTRY_BUILDERS:
        raise ValueError(f"no contribution vector for {arch.name!r}")
    stats = preactivation_stats(theta, arch, state, inp, order)
    powers = _stationary_state_powers(theta, arch, stats, state.mu_s, state.q_s, order)
    ctx = _EvalCtx(stats, powers, order)
    entries = _ENTRY_BUILDERS[arch.name](theta)
    labels = _ENTRY_ORDER[arch.name]
    ea = {k: ctx.terms(entries[k]) for k in labels}
    eaa = {}
    for k in labels:
        for l in labels:
            eaa[(k, l)] = ctx.terms([_tmul(t1, t2) for t1 in entries[k] for t2 in entries[l]])
    return ContributionVector(labels=labels, ea=ea, eaa=eaa)


def moments(
    theta: Hyperparameters,
    arch: ArchitectureSpec,
    fixed,
    cell: Optional[CellStateEnsemble] = None,
    inputs: Optional[InputStats] = None,
    order: int = DEFAULT_ORDER,
    n_s: int = 200,
    n_iters: int = 200,
    seed: int = 0,
) -> JacobianMoments:
    """(m1, m2, sigma) of the squared singular values of the Jacobian."""

    cv = contribution_vector(theta, arch, fixed, cell, inputs, order, n_s, n_iters, seed)
    m1 = sum(cv.ea.values())
    e_sum2 = sum(cv.eaa.values())
    sigma = e_sum2 - cv.ea["a_0"] ** 2
    if sigma < 0.0:
        if sigma < -1e-8:
            raise ArithmeticError(f"sigma = {sigma} strongly negative (bug)")
        warnings.warn(f"clamping slightly negative sigma = {sigma:.3e} to 0", stacklevel=2)
        sigma = 0.0
    return JacobianMoments(m1=m1, m2=sigma + m1 * m1, sigma=sigma, m1_se=cv.se_m1)


def isometry_gap(mom: JacobianMoments, chi: float) -> IsometryGap:
    """Residuals of the dynamical isometry conditions chi = 1, m1 = 1,
    sigma = 0, with an aggregate norm and a criticality flag."""

    gaps = (chi - 1.0, mom.m1 - 1.0, mom.sigma - 0.0)
    norm = math.sqrt(sum(g * g for g in gaps))
    critical = all(abs(g) < CRITICAL_TOL for g in gaps)
    return IsometryGap(gaps[0], gaps[1], gaps[2], norm, critical)


def jacobian_report_dict(mom: JacobianMoments, chi: float) -> dict:
    gap = isometry_gap(mom, chi)
    return {
        "m1": mom.m1,
        "m2": mom.m2,
        "sigma": mom.sigma,
        "chi": chi,
        "residuals": {"chi": gap.chi_gap, "m1": gap.m1_gap, "sigma": gap.sigma_gap, "norm": gap.norm},
        "critical": gap.critical,
    }
