"""Command-line surface: JSON/CSV in, JSON/CSV out.

Exit codes: 0 success, 2 usage problems, 1 computation failures (a JSON
error object is printed to stderr). Every sampling subcommand is
deterministic given --seed; when --seed is omitted a fresh one is drawn and
printed to stderr so the run can be reproduced. CSV output uses '.' decimal,
comma separator, a header row, and 17-significant-digit floats.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile

import numpy as np

from .core import (
    ARCHITECTURES,
    GateParams,
    Hyperparameters,
    InputStats,
    SimulationConfig,
    get_architecture,
    theta_from_json_dict,
    theta_to_json_dict,
    validate_theta,
)
from .criticality import (
    SWEEP_COLUMNS,
    direction_from_json_dict,
    preset_default_arch,
    preset_init,
    search_critical,
    sweep_phase_diagram,
)
from .fixed_point import chi_at, solve_correlation, solve_moments
from .jacobian import jacobian_report_dict, moments
from .lstm_cell_sampler import sample_cell_distribution
from .moment_maps import moment_trajectory, preactivation_stats, step_correlation
from .quadrature import DEFAULT_ORDER, GaussianPairSpec, expect2
from .simulator import (
    assemble_jacobian,
    build_jacobian,
    jacobian_frame,
    simulate_cell_distribution,
    simulate_pair,
)

__all__ = ["run", "main"]


class _UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _resolve_seed(args) -> int:
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = int(np.random.SeedSequence().entropy) % (2**32)
        print(f"seed = {seed}", file=sys.stderr)
    return seed


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise _UsageError(f"cannot read {path}: {e}") from None


def _resolve_theta(args):
    obj = _load_json(args.theta)
    try:
        file_arch, theta = theta_from_json_dict(obj)
    except ValueError as e:
        raise _UsageError(f"bad theta file {args.theta}: {e}") from None
    arch_name = getattr(args, "arch", None) or file_arch
    if arch_name is None:
        raise _UsageError("no architecture: pass --arch or put an arch field in the theta file")
    if getattr(args, "arch", None) and file_arch and args.arch != file_arch:
        raise _UsageError(f"--arch {args.arch} contradicts the theta file's arch {file_arch}")
    try:
        arch = get_architecture(arch_name)
        validate_theta(theta, arch)
    except ValueError as e:
        raise _UsageError(f"bad theta file {args.theta}: {e}") from None
    return arch, theta


def _inputs(args) -> InputStats:
    return InputStats(args.R, args.sigma_z)


def _write_csv(columns, rows) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def _pipeline(args, arch, theta, inputs, seed):
    msol = solve_moments(
        theta, arch, inputs, order=args.order, tol=args.tol, max_iter=args.max_iter,
        n_s=args.n_s, n_iters=args.n_iters, seed=seed,
    )
    rep = solve_correlation(
        theta, arch, inputs, msol, c0=args.c0, order=args.order, tol=args.tol,
        max_iter=args.max_iter, n_s=args.n_s, n_iters=args.n_iters, seed=seed,
    )
    return msol, rep


def _cmd_fixed_point(args) -> int:
    arch, theta = _resolve_theta(args)
    seed = _resolve_seed(args)
    msol, rep = _pipeline(args, arch, theta, _inputs(args), seed)
    _print_json(rep.to_json_dict())
    if args.highlight:
        xi_s = "inf" if math.isinf(rep.xi) else f"{rep.xi:.6g}"
        print(
            f"xi = {xi_s} steps (chi = {rep.chi:.6g}, C* = {rep.c_star:.6g})",
            file=sys.stderr,
        )
    return 0


def _cmd_jacobian(args) -> int:
    arch, theta = _resolve_theta(args)
    seed = _resolve_seed(args)
    inputs = _inputs(args)
    msol, rep = _pipeline(args, arch, theta, inputs, seed)
    mom = moments(
        theta, arch, msol.state, cell=msol.cell, inputs=inputs,
        order=args.order, n_s=args.n_s, n_iters=args.n_iters, seed=seed,
    )
    _print_json(jacobian_report_dict(mom, rep.chi))
    return 0


def _cmd_critical_init(args) -> int:
    if args.preset is None and not args.search:
        raise _UsageError("pass --preset NAME or --search")
    if args.preset is not None and args.search:
        raise _UsageError("--preset and --search are mutually exclusive")
    if args.preset is not None:
        try:
            arch_name = args.arch or preset_default_arch(args.preset)
            theta = preset_init(args.preset, arch_name, N=args.N, input_dim=args.input_dim)
        except ValueError as e:
            raise _UsageError(str(e)) from None
        _print_json(theta_to_json_dict(theta, arch_name))
        return 0
    if not args.arch:
        raise _UsageError("--search needs --arch")
    seed = _resolve_seed(args)
    theta, report = search_critical(
        args.arch, target_xi=args.target_xi, order=args.order,
        n_s=args.n_s, n_iters=args.n_iters, seed=seed,
    )
    _print_json(theta_to_json_dict(theta, args.arch))
    xi_s = "inf" if math.isinf(report.xi) else f"{report.xi:.6g}"
    print(
        f"search: objective = {report.objective:.3e}, chi = {report.chi:.6g}, "
        f"xi = {xi_s}, evaluations = {report.evaluations}, source = {report.source}",
        file=sys.stderr,
    )
    return 0


def _parse_alphas(spec: str):
    parts = spec.split(":")
    if len(parts) != 3:
        raise _UsageError(f"--alphas must be a:b:n, got {spec!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as e:
        raise _UsageError(f"bad --alphas {spec!r}: {e}") from None
    if n < 1:
        raise _UsageError("--alphas needs n >= 1")
    return np.linspace(a, b, n)


def _cmd_sweep(args) -> int:
    try:
        file_arch, theta0 = theta_from_json_dict(_load_json(args.theta0))
        _, direction = direction_from_json_dict(_load_json(args.direction))
    except ValueError as e:
        raise _UsageError(str(e)) from None
    arch_name = args.arch or file_arch
    if args.arch and file_arch and args.arch != file_arch:
        raise _UsageError(f"--arch {args.arch} contradicts theta0's arch {file_arch}")
    alphas = _parse_alphas(args.alphas)
    seed = _resolve_seed(args)
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("RNNMF_WORKERS", os.cpu_count() or 1))
    rows = sweep_phase_diagram(
        arch_name, theta0, direction, alphas, _inputs(args), seed=seed,
        workers=workers, order=args.order, n_s=args.n_s, n_iters=args.n_iters,
    )
    _write_csv(SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in rows))
    return 0


def _cmd_simulate(args) -> int:
    arch, theta = _resolve_theta(args)
    seed = _resolve_seed(args)
    schedule = None
    if args.sigma_z_schedule:
        try:
            schedule = np.loadtxt(args.sigma_z_schedule, ndmin=1)
        except (OSError, ValueError) as e:
            raise _UsageError(f"cannot read schedule {args.sigma_z_schedule}: {e}") from None
        if schedule.size < args.T:
            raise _UsageError(
                f"schedule {args.sigma_z_schedule} has {schedule.size} entries < T = {args.T}"
            )
        if np.any(np.abs(schedule) > 1.0):
            raise _UsageError("schedule entries must lie in [-1, 1]")
    config = SimulationConfig(N=args.N, T=args.T, seed=seed)
    traj = simulate_pair(
        theta, arch, config, _inputs(args), tied=args.tied, seed=seed,
        sigma_z_schedule=schedule,
    )
    cols = ("t", "mu", "q", "c", "se_mu", "se_q", "se_c")
    _write_csv(cols, ([p.t, p.mu, p.q, p.c, p.se_mu, p.se_q, p.se_c] for p in traj))
    return 0


def _cmd_spectrum(args) -> int:
    arch, theta = _resolve_theta(args)
    seed = _resolve_seed(args)
    inputs = _inputs(args)
    config = SimulationConfig(N=args.N, T=args.burn_in, seed=seed)
    _, sr = build_jacobian(theta, arch, config, seed=seed, inputs=inputs, burn_in=args.burn_in)
    msol, rep = _pipeline(args, arch, theta, inputs, seed)
    mom = moments(
        theta, arch, msol.state, cell=msol.cell, inputs=inputs,
        order=args.order, n_s=args.n_s, n_iters=args.n_iters, seed=seed,
    )
    _write_csv(
        ("rank", "squared_singular_value"),
        ([i, v] for i, v in enumerate(sr.squared_singular_values, start=1)),
    )

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-300)

    print(
        f"empirical mean = {sr.mean:.6g}, predicted m1 = {mom.m1:.6g} "
        f"(rel err {rel(sr.mean, mom.m1):.3g})",
        file=sys.stderr,
    )
    print(
        f"empirical variance = {sr.variance:.6g}, predicted sigma = {mom.sigma:.6g} "
        f"(rel err {rel(sr.variance, mom.sigma):.3g})",
        file=sys.stderr,
    )
    return 0


def _cmd_cell_dist(args) -> int:
    arch, theta = _resolve_theta(args)
    seed = _resolve_seed(args)
    inputs = _inputs(args)
    if args.simulate:
        if arch.name not in ("LSTM", "peepholeLSTM"):
            raise _UsageError("--simulate needs a cell-carrying architecture")
        config = SimulationConfig(N=args.N, T=args.T, seed=seed)
        cells = simulate_cell_distribution(theta, arch, config, seed=seed, inputs=inputs)
    else:
        if arch.name != "LSTM":
            raise _UsageError("the stationary cell sampler applies to the LSTM only")
        msol = solve_moments(
            theta, arch, inputs, order=args.order, n_s=args.n_s, n_iters=args.n_iters, seed=seed
        )
        stats = preactivation_stats(theta, arch, msol.state, inputs, args.order)
        ens = sample_cell_distribution(theta, stats, n_s=args.n_s, n_iters=args.n_iters, seed=seed)
        cells = ens.samples
    _write_csv(("cell",), ([v] for v in cells))
    return 0


# ---------------------------------------------------------------------------
# verify: a fast built-in property battery


def _random_theta(arch, rng) -> Hyperparameters:
    gates = {}
    for k in arch.labels():
        gates[k] = GateParams(
            sigma2=float(rng.uniform(0.0, 1.0)),
            nu2=float(rng.uniform(0.0, 1.0)),
            rho2=float(rng.uniform(0.0, 1.0)),
            mu=float(rng.uniform(-2.0, 2.0)),
        )
    return Hyperparameters(gates)


def _vrf_slope_identity_quadrature():
    rng = np.random.default_rng(11)
    inputs = InputStats(1.0, 1.0)
    worst = 0.0
    for arch_name in ("vanillaRNN", "minimalRNN", "GRU", "peepholeLSTM"):
        arch = get_architecture(arch_name)
        for _ in range(2):
            theta = _random_theta(arch, rng)
            msol = solve_moments(theta, arch, inputs, order=128)
            chi = chi_at(theta, arch, inputs, msol.state, 1.0, order=128)
            m1 = moments(theta, arch, msol.state, inputs=inputs, order=128).m1
            worst = max(worst, abs(m1 - chi))
    return worst < 1e-6, f"max |m1 - chi(C=1)| = {worst:.3e}"


def _vrf_slope_identity_sampled():
    rng = np.random.default_rng(5)
    arch = get_architecture("LSTM")
    theta = _random_theta(arch, rng)
    inputs = InputStats(1.0, 1.0)
    msol = solve_moments(theta, arch, inputs, seed=3)
    mom = moments(theta, arch, msol.state, inputs=inputs, seed=9)
    chi = chi_at(theta, arch, inputs, msol.state, 1.0, seed=9)
    tol = 5.0 * math.sqrt(2.0) * (mom.m1_se or 0.0)
    return abs(mom.m1 - chi) <= tol, f"|m1 - chi| = {abs(mom.m1 - chi):.3e} (5 SE = {tol:.3e})"


def _vrf_pair_positivity():
    def odd_poly(x):
        return x**3 * np.exp(-(x**2))

    worst = math.inf
    for g in (np.tanh, odd_poly):
        for mu in (0.0, 0.7):
            for s2 in (0.25, 1.5):
                for c in (0.0, 0.4, 0.9, 1.0):
                    v = expect2(g, g, GaussianPairSpec(mu, s2, c))
                    worst = min(worst, v)
    return worst >= -1e-10, f"min pair expectation = {worst:.3e}"


def _vrf_convexity():
    rng = np.random.default_rng(23)
    arch = get_architecture("peepholeLSTM")
    inputs = InputStats(1.0, 1.0)
    worst = math.inf
    for _ in range(2):
        theta = _random_theta(arch, rng)
        msol = solve_moments(theta, arch, inputs)
        grid = np.linspace(0.0, 1.0, 21)
        vals = [step_correlation(theta, arch, msol.state, float(c), inputs) for c in grid]
        second = np.diff(vals, 2)
        worst = min(worst, float(np.min(second)))
    return worst >= -1e-6, f"min second difference = {worst:.3e}"


def _zero_variance_theta(arch, mu_f=1.0) -> Hyperparameters:
    gates = {}
    for k in arch.labels():
        mu = {"f": mu_f, "r": 0.3, "r2": 0.3, "i": 0.2, "o": 0.1}.get(k, 0.0)
        gates[k] = GateParams(sigma2=0.0, nu2=0.0, rho2=0.0, mu=mu)
    return Hyperparameters(gates)


def _vrf_zero_variance_exactness():
    worst = 0.0
    inputs = InputStats(1.0, 1.0)
    for arch_name in ARCHITECTURES:
        arch = get_architecture(arch_name)
        theta = _zero_variance_theta(arch)
        T = 50
        pred = moment_trajectory(theta, arch, inputs, T, n_s=16, seed=1)
        sim = simulate_pair(theta, arch, SimulationConfig(N=8, T=T, seed=2), inputs)
        for p, s in zip(pred, sim):
            worst = max(worst, abs(p.mu_s - s.mu), abs(p.q_s - s.q))
    return worst < 1e-12, f"max |mean-field - simulator| = {worst:.3e}"


def _benign_theta(arch) -> Hyperparameters:
    gates = {}
    for k in arch.labels():
        gates[k] = GateParams(sigma2=0.2, nu2=0.2, rho2=0.01, mu=1.0 if k == "f" else 0.0)
    return Hyperparameters(gates)


def _fd_jacobian_worst(arch_name: str, N: int, seed: int) -> float:
    arch = get_architecture(arch_name)
    theta = _benign_theta(arch)
    frame = jacobian_frame(theta, arch, SimulationConfig(N=N, T=1, seed=seed), seed=seed)
    J = assemble_jacobian(theta, frame)
    s = frame.state
    eps = 1e-5
    worst = 0.0
    for j in range(N):
        e = np.zeros(N)
        e[j] = eps
        col = (frame.one_step(s + e) - frame.one_step(s - e)) / (2.0 * eps)
        denom = max(float(np.linalg.norm(J[:, j])), 1e-12)
        worst = max(worst, float(np.linalg.norm(col - J[:, j])) / denom)
    return worst


def _vrf_jacobian_transcription():
    worst = max(_fd_jacobian_worst("GRU", 48, 7), _fd_jacobian_worst("LSTM", 48, 8))
    return worst < 1e-4, f"max column rel err = {worst:.3e}"


def _vrf_timescale_anchor():
    arch = get_architecture("peepholeLSTM")
    theta = Hyperparameters(
        {k: GateParams(0.0, 0.0, 0.0, 5.0 if k == "f" else 0.0) for k in arch.labels()}
    )
    inputs = InputStats(1.0, 1.0)
    msol = solve_moments(theta, arch, inputs)
    rep = solve_correlation(theta, arch, inputs, msol)
    s5 = 1.0 / (1.0 + math.exp(-5.0))
    xi_ref = -1.0 / math.log(s5 * s5)
    rel = abs(rep.xi - xi_ref) / xi_ref
    return rel < 1e-3, f"xi = {rep.xi:.4f} vs {xi_ref:.4f} (rel {rel:.2e})"


_VERIFY_CHECKS = (
    ("correlation-slope identity, quadrature architectures", _vrf_slope_identity_quadrature),
    ("correlation-slope identity, sampled LSTM", _vrf_slope_identity_sampled),
    ("pair-expectation positivity", _vrf_pair_positivity),
    ("correlation-map convexity (peephole)", _vrf_convexity),
    ("zero-variance mean-field vs simulator", _vrf_zero_variance_exactness),
    ("Jacobian assembly vs finite differences", _vrf_jacobian_transcription),
    ("critical peephole timescale anchor", _vrf_timescale_anchor),
)


def _cmd_verify(args) -> int:
    failures = 0
    for name, check in _VERIFY_CHECKS:
        try:
            ok, detail = check()
        except Exception as e:  # a crashed check is a failed check
            ok, detail = False, f"{type(e).__name__}: {e}"
        if not ok:
            failures += 1
        print(f"{'PASS' if ok else 'FAIL'}  {name:<50s} {detail}")
    total = len(_VERIFY_CHECKS)
    print(f"{total - failures}/{total} checks passed")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# parser


def _add_common(p, theta=True, arch_required=False):
    if theta:
        p.add_argument("--theta", required=True, help="theta JSON file")
    p.add_argument("--arch", required=arch_required, choices=sorted(ARCHITECTURES),
                   help="architecture name")
    p.add_argument("--R", type=float, default=1.0, help="input second moment (default 1)")
    p.add_argument("--sigma-z", dest="sigma_z", type=float, default=1.0,
                   help="input cross-correlation (default 1)")
    p.add_argument("--order", type=int, default=DEFAULT_ORDER, help="quadrature order")
    p.add_argument("--seed", type=int, default=None, help="seed (omitted: drawn and printed)")
    p.add_argument("--n-s", dest="n_s", type=int, default=200, help="cell ensemble size")
    p.add_argument("--n-iters", dest="n_iters", type=int, default=200,
                   help="cell equilibration steps")


def _add_solver(p):
    p.add_argument("--c0", type=float, default=0.0, help="correlation start (default 0)")
    p.add_argument("--tol", type=float, default=1e-9, help="fixed-point tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=10000)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rnnmf",
        description="Mean-field signal propagation and Jacobian spectra for gated RNNs",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("fixed-point", help="solve (mu*, Q*, C*), chi and xi; print report JSON")
    _add_common(p)
    _add_solver(p)
    p.set_defaults(func=_cmd_fixed_point, highlight=False)

    p = sub.add_parser("timescale", help="fixed-point report with xi highlighted")
    _add_common(p)
    _add_solver(p)
    p.set_defaults(func=_cmd_fixed_point, highlight=True)

    p = sub.add_parser("jacobian", help="squared-singular-value moments m1, m2, sigma")
    _add_common(p)
    _add_solver(p)
    p.set_defaults(func=_cmd_jacobian)

    p = sub.add_parser("critical-init", help="preset or searched critical initialization")
    p.add_argument("--preset", default=None, help="preset name")
    p.add_argument("--search", action="store_true", help="residual search along mu_f")
    p.add_argument("--arch", default=None, choices=sorted(ARCHITECTURES))
    p.add_argument("--target-xi", dest="target_xi", type=float, default=None)
    p.add_argument("--N", type=int, default=512, help="width for the standard preset")
    p.add_argument("--input-dim", dest="input_dim", type=int, default=None)
    p.add_argument("--order", type=int, default=DEFAULT_ORDER)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-s", dest="n_s", type=int, default=200)
    p.add_argument("--n-iters", dest="n_iters", type=int, default=200)
    p.set_defaults(func=_cmd_critical_init)

    p = sub.add_parser("sweep", help="chi/xi/m1/m2/sigma along theta0 + alpha * direction")
    p.add_argument("--theta0", required=True, help="base theta JSON file")
    p.add_argument("--direction", required=True, help="direction JSON file (same shape)")
    p.add_argument("--alphas", required=True, help="grid a:b:n (linspace)")
    p.add_argument("--arch", default=None, choices=sorted(ARCHITECTURES))
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--sigma-z", dest="sigma_z", type=float, default=1.0)
    p.add_argument("--order", type=int, default=DEFAULT_ORDER)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-s", dest="n_s", type=int, default=200)
    p.add_argument("--n-iters", dest="n_iters", type=int, default=200)
    p.add_argument("--workers", type=int, default=None,
                   help="parallel workers (default: RNNMF_WORKERS or all cores)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("simulate", help="coupled-pair trajectory CSV from the simulator")
    _add_common(p)
    p.add_argument("--N", type=int, required=True, help="width")
    p.add_argument("--T", type=int, required=True, help="steps")
    p.add_argument("--tied", action="store_true", help="reuse step-0 weights every step")
    p.add_argument("--sigma-z-schedule", dest="sigma_z_schedule", default=None,
                   help="file with one sigma_z per step")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("spectrum", help="empirical squared-SV spectrum + theory comparison")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=100)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("cell-dist", help="stationary cell samples (sampler or simulator)")
    _add_common(p)
    p.add_argument("--simulate", action="store_true", help="use the width-N simulator instead")
    p.add_argument("--N", type=int, default=200, help="simulator width")
    p.add_argument("--T", type=int, default=200, help="simulator steps")
    p.set_defaults(func=_cmd_cell_dist)

    p = sub.add_parser("verify", help="run the built-in property battery")
    p.set_defaults(func=_cmd_verify)

    return parser


def run(argv=None) -> int:
    if "RNNMF_TMPDIR" in os.environ:
        tempfile.tempdir = os.environ["RNNMF_TMPDIR"]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        raise
    except Exception as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
