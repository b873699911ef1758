"""Critical initializations: presets, residual search, phase-diagram sweeps.

Presets encode the published critical and standard initialization values.
search_critical hunts for hyperparameters satisfying the isometry conditions
(or hitting a requested timescale) along the zero-variance forget-gate
family, and sweep_phase_diagram maps chi/xi/m1/sigma over a one-parameter
hyperparameter ray for phase-diagram overlays.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from . import jacobian as _jacobian
from .core import (
    GateParams,
    Hyperparameters,
    InputStats,
    InvalidTheta,
    NegativeVariance,
    get_architecture,
    theta_from_json_dict,
    theta_to_json_dict,
    validate_theta,
)
from .fixed_point import NoConvergence, solve_correlation, solve_moments
from .jacobian import IsometryGap, isometry_gap
from .quadrature import DEFAULT_ORDER

__all__ = [
    "UnknownPreset",
    "SearchFailed",
    "SearchReport",
    "PRESET_NAMES",
    "SIGMA2_FLOOR",
    "SWEEP_COLUMNS",
    "preset_init",
    "preset_default_arch",
    "search_critical",
    "sweep_phase_diagram",
    "direction_from_json_dict",
]

SIGMA2_FLOOR = 1e-5  # small recurrent variance standing in for "exactly 0"
SWEEP_COLUMNS = ("alpha", "chi", "xi", "m1", "m2", "sigma", "status", "xi3", "xi6")

_FIELDS = ("sigma2", "nu2", "rho2", "mu")


class UnknownPreset(ValueError):
    pass


class SearchFailed(ArithmeticError):
    """Search could not reach the target; .best holds (theta, report)."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


def _build_peephole_critical(arch, N, input_dim):
    return Hyperparameters(
        {
            k: GateParams(sigma2=1e-5, nu2=0.0, rho2=0.0, mu=5.0 if k == "f" else 0.0)
            for k in arch.labels()
        }
    )


def _build_lstm_cifar_critical(arch, N, input_dim):
    gates = {}
    for k in arch.labels():
        gates[k] = GateParams(
            sigma2=1.0 if k == "o" else 1e-5,
            nu2=1.0 if k in ("i", "r") else 0.0,
            rho2=0.0,
            mu=1.0 if k == "f" else 0.0,
        )
    return Hyperparameters(gates)


def _build_standard(arch, N, input_dim):
    # recurrent variance 1/N (Gaussian stand-in for an orthogonal draw,
    # which has no variance parameterization); input variance Glorot-style
    nu2 = 2.0 / (input_dim + N)
    return Hyperparameters(
        {
            k: GateParams(sigma2=1.0 / N, nu2=nu2, rho2=0.0, mu=1.0 if k == "f" else 0.0)
            for k in arch.labels()
        }
    )


_PRESETS = {
    "peephole_critical": ("peepholeLSTM", _build_peephole_critical),
    "lstm_cifar_critical": ("LSTM", _build_lstm_cifar_critical),
    "standard": ("LSTM", _build_standard),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset_default_arch(name: str) -> str:
    if name not in _PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    return _PRESETS[name][0]


def preset_init(
    name: str,
    arch_name: Optional[str] = None,
    N: int = 512,
    input_dim: Optional[int] = None,
) -> Hyperparameters:
    """Named initialization, resolved over the given architecture's gates.

    `standard` depends on the widths: recurrent variance 1/N and input
    variance 2/(input_dim + N), input_dim defaulting to N.
    """

    if name not in _PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    default_arch, builder = _PRESETS[name]
    arch = get_architecture(arch_name or default_arch)
    theta = builder(arch, N, input_dim if input_dim is not None else N)
    validate_theta(theta, arch)
    return theta


@dataclass(frozen=True)
class SearchReport:
    theta: Hyperparameters
    arch: str
    objective: float
    chi: float
    xi: float
    m1: float
    m2: float
    sigma: float
    gap: IsometryGap
    evaluations: int
    target_xi: Optional[float]
    source: str  # "search" or "preset"


def _apply_free(theta: Hyperparameters, free_keys, values) -> Hyperparameters:
    for (field, gate), v in zip(free_keys, values):
        theta = theta.replace(gate, **{field: v})
    return theta


def _parse_free_key(key: str):
    field, _, gate = key.partition(":")
    if field not in _FIELDS or not gate:
        raise ValueError(f"free parameter {key!r} is not of the form field:gate")
    return field, gate


def _golden_min(f, lo, hi, tol=1e-4, max_iter=80):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def _pipeline_eval(theta, arch, inputs, order, n_s, n_iters, seed):
    msol = solve_moments(theta, arch, inputs, order=order, n_s=n_s, n_iters=n_iters, seed=seed)
    rep = solve_correlation(
        theta, arch, inputs, msol, order=order, n_s=n_s, n_iters=n_iters, seed=seed
    )
    mom = _jacobian.moments(
        theta, arch, msol.state, cell=msol.cell, inputs=inputs,
        order=order, n_s=n_s, n_iters=n_iters, seed=seed,
    )
    return rep, mom, isometry_gap(mom, rep.chi)


def search_critical(
    arch_name: str,
    constraints: Optional[Mapping] = None,
    target_xi: Optional[float] = None,
    free: tuple = ("mu:f",),
    inputs: Optional[InputStats] = None,
    bounds: Optional[Mapping] = None,
    tol: float = 1e-4,
    order: int = DEFAULT_ORDER,
    n_s: int = 200,
    n_iters: int = 200,
    seed: int = 0,
):
    """Derivative-free search for a critical initialization.

    Works along the zero-variance family: every gate starts at
    (sigma2 = SIGMA2_FLOOR, nu2 = rho2 = 0, mu = 0), `constraints`
    ({gate: {field: value}}) pins entries, and the `free` parameters
    ("field:gate" strings, mu:f always among them, at most 3) are optimized
    by golden section (coordinate descent when several are free). The
    objective is |xi - target_xi| when a target is given, otherwise the
    isometry-gap norm. Matching presets are scored as candidates too, so an
    unconstrained search never does worse than the published values.
    Returns (theta, SearchReport); raises SearchFailed (best attached) if
    the objective never came out finite, or a target xi was missed by more
    than 10% relative.
    """

    arch = get_architecture(arch_name)
    inputs = inputs if inputs is not None else InputStats(1.0, 1.0)
    constraints = dict(constraints or {})
    free_keys = tuple(_parse_free_key(k) for k in free)
    if ("mu", "f") not in free_keys:
        raise ValueError("the forget-gate mean mu:f must be among the free parameters")
    if len(free_keys) > 3:
        raise ValueError("at most 3 free parameters are supported")
    labels = set(arch.labels())
    for gate, entry in constraints.items():
        if gate not in labels:
            raise ValueError(f"constraint on unknown gate {gate!r}")
        for field in entry:
            if field not in _FIELDS:
                raise ValueError(f"constraint on unknown field {field!r}")
            if (field, gate) in free_keys:
                raise ValueError(f"{field}:{gate} is both constrained and free")

    base_gates = {}
    for k in arch.labels():
        vals = {"sigma2": SIGMA2_FLOOR, "nu2": 0.0, "rho2": 0.0, "mu": 0.0}
        vals.update(constraints.get(k, {}))
        base_gates[k] = GateParams(**vals)
    base = Hyperparameters(base_gates)

    default_bounds = {"mu": (0.0, 10.0), "sigma2": (0.0, 2.0), "nu2": (0.0, 2.0), "rho2": (0.0, 2.0)}
    bnds = []
    for field, gate in free_keys:
        key = f"{field}:{gate}"
        bnds.append((bounds or {}).get(key, default_bounds[field]))

    evals = 0
    cache = {}

    def objective(values):
        nonlocal evals
        key = tuple(float(v) for v in values)
        if key in cache:
            return cache[key][0]
        evals += 1
        theta = _apply_free(base, free_keys, key)
        try:
            rep, mom, gap = _pipeline_eval(theta, arch, inputs, order, n_s, n_iters, seed)
            if target_xi is not None:
                obj = abs(rep.xi - target_xi)
                if math.isinf(rep.xi) and math.isinf(target_xi):
                    obj = 0.0
            else:
                obj = gap.norm
        except (NoConvergence, ArithmeticError):
            cache[key] = (math.inf, None)
            return math.inf
        cache[key] = (obj, (theta, rep, mom, gap))
        return obj

    current = [0.5 * (lo + hi) for lo, hi in bnds]
    sweeps = 1 if len(free_keys) == 1 else 3
    for _ in range(sweeps):
        for i, (lo, hi) in enumerate(bnds):

            def f1d(x, i=i):
                vals = list(current)
                vals[i] = x
                return objective(vals)

            x_best, _ = _golden_min(f1d, lo, hi, tol=tol)
            current[i] = x_best

    best_key = tuple(float(v) for v in current)
    best_obj = objective(current)
    source = "search"

    # score matching presets under the same objective
    for pname, (parch, _) in _PRESETS.items():
        if parch != arch.name or pname == "standard":
            continue
        ptheta = preset_init(pname, arch.name)
        ok = all(
            math.isclose(getattr(ptheta.gates[g], f), v, rel_tol=0, abs_tol=0)
            for g, entry in constraints.items()
            for f, v in entry.items()
        )
        if not ok:
            continue
        pkey = ("preset", pname)
        try:
            rep, mom, gap = _pipeline_eval(ptheta, arch, inputs, order, n_s, n_iters, seed)
            evals += 1
            obj = abs(rep.xi - target_xi) if target_xi is not None else gap.norm
            cache[pkey] = (obj, (ptheta, rep, mom, gap))
            if obj < best_obj:
                best_obj, best_key, source = obj, pkey, "preset"
        except (NoConvergence, ArithmeticError):
            pass

    def _report(key, obj, src):
        theta, rep, mom, gap = cache[key][1]
        # residuals re-evaluated above at theta itself, not cached search internals
        return theta, SearchReport(
            theta=theta, arch=arch.name, objective=obj, chi=rep.chi, xi=rep.xi,
            m1=mom.m1, m2=mom.m2, sigma=mom.sigma, gap=gap, evaluations=evals,
            target_xi=target_xi, source=src,
        )

    if not math.isfinite(best_obj) or cache[best_key][1] is None:
        raise SearchFailed("no feasible point found (every evaluation failed)", best=None)
    theta, report = _report(best_key, best_obj, source)
    if target_xi is not None and best_obj > 0.1 * max(1.0, abs(target_xi)):
        raise SearchFailed(
            f"best xi = {report.xi} misses target {target_xi} by more than 10%",
            best=(theta, report),
        )
    validate_theta(theta, get_architecture(arch.name))
    return theta, report


def direction_from_json_dict(obj: dict):
    """Parse a sweep direction: same shape as a theta document, but entries
    may be negative (it is a ray direction, not a valid initialization)."""

    if not isinstance(obj, dict) or "gates" not in obj:
        raise InvalidTheta('direction document needs a "gates" object')
    gates = {}
    for label, entry in obj["gates"].items():
        if not isinstance(entry, dict) or set(entry) - set(_FIELDS):
            raise InvalidTheta(f"direction gate {label!r}: expected keys {_FIELDS}")
        gates[label] = {f: float(entry.get(f, 0.0)) for f in _FIELDS}
    return obj.get("arch"), gates


def _combine(theta0: Hyperparameters, direction, alpha: float) -> Hyperparameters:
    gates = {}
    for k, p in theta0.gates.items():
        d = direction.get(k, {f: 0.0 for f in _FIELDS})
        gates[k] = GateParams(
            sigma2=p.sigma2 + alpha * d["sigma2"],
            nu2=p.nu2 + alpha * d["nu2"],
            rho2=p.rho2 + alpha * d["rho2"],
            mu=p.mu + alpha * d["mu"],
        )
    return Hyperparameters(gates)


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _sweep_point(payload):
    (index, arch_name, theta0_doc, direction, alpha, R, sigma_z, seed, order, n_s, n_iters) = payload
    row = {c: math.nan for c in SWEEP_COLUMNS}
    row["alpha"] = alpha
    arch = get_architecture(arch_name)
    _, theta0 = theta_from_json_dict(theta0_doc)
    try:
        theta = _combine(theta0, direction, alpha)
        validate_theta(theta, arch)
    except (NegativeVariance, InvalidTheta, ValueError):
        row["status"] = "invalid_theta"
        return index, row
    inputs = InputStats(R, sigma_z)
    pseed = _point_seed(seed, index)
    try:
        rep, mom, _gap = _pipeline_eval(theta, arch, inputs, order, n_s, n_iters, pseed)
    except NoConvergence:
        row["status"] = "no_convergence"
        return index, row
    except (ArithmeticError, ValueError) as e:
        row["status"] = f"error:{type(e).__name__}"
        return index, row
    row.update(
        chi=rep.chi, xi=rep.xi, m1=mom.m1, m2=mom.m2, sigma=mom.sigma,
        status="ok", xi3=3.0 * rep.xi, xi6=6.0 * rep.xi,
    )
    return index, row


def sweep_phase_diagram(
    arch_name: str,
    theta0: Hyperparameters,
    direction,
    alphas,
    inputs: InputStats,
    seed: int = 0,
    workers: Optional[int] = None,
    order: int = DEFAULT_ORDER,
    n_s: int = 200,
    n_iters: int = 200,
):
    """chi/xi/m1/m2/sigma along the ray theta0 + alpha * direction.

    Per-point failures are recorded in the row's status column and the sweep
    continues. Points get independent derived seeds, so the grid is
    deterministic for a given seed regardless of worker count. Returns rows
    sorted by alpha, each a dict over SWEEP_COLUMNS (xi3/xi6 are the 3 xi
    and 6 xi overlay columns).
    """

    arch = get_architecture(arch_name)
    validate_theta(theta0, arch)
    theta0_doc = theta_to_json_dict(theta0, arch.name)
    if isinstance(direction, Hyperparameters):
        direction = {k: {"sigma2": p.sigma2, "nu2": p.nu2, "rho2": p.rho2, "mu": p.mu}
                     for k, p in direction.gates.items()}
    payloads = [
        (i, arch.name, theta0_doc, dict(direction), float(a), inputs.R, inputs.sigma_z,
         seed, order, n_s, n_iters)
        for i, a in enumerate(alphas)
    ]
    if workers is not None and workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]
    rows = [row for _, row in sorted(results, key=lambda t: t[0])]
    rows.sort(key=lambda r: r["alpha"])
    return rows
