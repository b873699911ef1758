import json
import math

import numpy as np
import pytest

import importlib.resources as ir
import jsonschema

from rnnmf import (
    GateParams,
    Hyperparameters,
    InputStats,
    MomentState,
    NoConvergence,
    ZERO_STATE,
    chi_at,
    get_architecture,
    moments,
    solve_correlation,
    solve_moments,
    step_correlation,
    step_moments,
)

from conftest import make_theta, random_theta
from test_moment_maps import PEEPHOLE_DRIVE_Q, peephole_drive_theta

UNIT = InputStats(1.0, 1.0)

# closed-form anchors (frozen): sigmoid(5)^2 and the matching timescale
SIG5_SQ = 0.9866590924049252
XI_ANCHOR = 74.45629974531285


def report_schema():
    path = ir.files("rnnmf") / "schemas" / "fixed_point_report.schema.json"
    return json.loads(path.read_text())


def test_solve_moments_matches_frozen_oracle():
    arch = get_architecture("peepholeLSTM")
    msol = solve_moments(peephole_drive_theta(), arch, UNIT)
    # plain iteration truncates at tol/(1 - contraction rate) from the limit
    assert abs(msol.q_star - PEEPHOLE_DRIVE_Q) < 1.5e-7
    assert abs(msol.mu_star) < 1e-12
    assert msol.converged


def test_solve_moments_agrees_with_direct_iteration(quadrature_arch):
    theta = make_theta(quadrature_arch)
    msol = solve_moments(theta, quadrature_arch, UNIT)
    state = ZERO_STATE
    for _ in range(3000):
        state = step_moments(theta, quadrature_arch, state, UNIT)
    assert msol.q_star == pytest.approx(state.q_s, abs=1e-7)
    assert msol.mu_star == pytest.approx(state.mu_s, abs=1e-7)


def test_no_convergence_has_monotone_trajectory():
    arch = get_architecture("peepholeLSTM")
    theta = Hyperparameters(
        {
            "i": GateParams(0.1, 1.0, 0.0, 0.0),
            "f": GateParams(0.0, 0.0, 0.0, 10.0),
            "r": GateParams(0.1, 1.0, 0.0, 0.0),
            "o": GateParams(0.1, 1.0, 0.0, 0.0),
        }
    )
    with pytest.raises(NoConvergence) as exc:
        solve_moments(theta, arch, UNIT)
    traj = exc.value.trajectory
    q = np.array([s.q_s for s in traj])
    assert len(traj) == 10001
    assert np.all(np.diff(q) >= 0.0)


def test_lstm_solver_rejects_start():
    arch = get_architecture("LSTM")
    with pytest.raises(ValueError):
        solve_moments(make_theta(arch), arch, UNIT, start=MomentState(0.0, 0.5, 0.0))


def test_full_correlation_is_fixed_point_and_classified(quadrature_arch):
    rng = np.random.default_rng(31)
    theta = random_theta(quadrature_arch, rng)
    msol = solve_moments(theta, quadrature_arch, UNIT)
    rep = solve_correlation(theta, quadrature_arch, UNIT, msol)
    assert rep.c_star == pytest.approx(1.0, abs=1e-6)
    assert rep.stable == (rep.chi <= 1.0)
    assert rep.converged


def test_correlation_starts_converge_to_same_point():
    arch = get_architecture("peepholeLSTM")
    theta = make_theta(arch, sigma2=0.4, nu2=0.4, rho2=0.02)
    msol = solve_moments(theta, arch, UNIT)
    r0 = solve_correlation(theta, arch, UNIT, msol, c0=0.0)
    r9 = solve_correlation(theta, arch, UNIT, msol, c0=0.9)
    assert abs(r0.c_star - r9.c_star) < 1e-8


def test_timescale_anchor_exact_at_zero_variance():
    arch = get_architecture("peepholeLSTM")
    theta = Hyperparameters(
        {k: GateParams(0.0, 0.0, 0.0, 5.0 if k == "f" else 0.0) for k in arch.labels()}
    )
    msol = solve_moments(theta, arch, UNIT)
    rep = solve_correlation(theta, arch, UNIT, msol)
    assert rep.chi == pytest.approx(SIG5_SQ, abs=1e-12)
    assert rep.xi == pytest.approx(XI_ANCHOR, rel=1e-12)
    assert rep.c_star == 1.0 and rep.iterations == 0


def test_unstable_point_reports_infinite_timescale():
    arch = get_architecture("minimalRNN")
    theta = Hyperparameters(
        {"f": GateParams(0.0, 0.0, 0.0, -5.0), "r": GateParams(25.0, 0.0, 0.0, 0.0)}
    )
    inputs = InputStats(1.0, 0.5)
    msol = solve_moments(theta, arch, inputs)
    rep = solve_correlation(theta, arch, inputs, msol)
    assert rep.chi > 1.0
    assert math.isinf(rep.xi)
    assert not rep.stable
    assert rep.to_json_dict()["xi"] == "inf"


def test_chaotic_phase_has_interior_fixed_point():
    arch = get_architecture("minimalRNN")
    theta = Hyperparameters(
        {"f": GateParams(0.0, 0.0, 0.0, -5.0), "r": GateParams(25.0, 0.5, 0.0, 0.0)}
    )
    inputs = InputStats(1.0, 0.5)
    msol = solve_moments(theta, arch, inputs)
    rep = solve_correlation(theta, arch, inputs, msol)
    assert rep.c_star < 0.5  # memory of common input mostly destroyed
    # the slope at C* = 1 exceeds one (that fixed point repels) while the
    # interior fixed point attracts
    assert chi_at(theta, arch, inputs, msol.state, 1.0) > 1.0
    assert rep.chi < 1.0


def test_chi_matches_numpy_gradient_at_interior_point():
    arch = get_architecture("minimalRNN")
    theta = Hyperparameters(
        {"f": GateParams(0.0, 0.0, 0.0, -5.0), "r": GateParams(25.0, 0.5, 0.0, 0.0)}
    )
    inputs = InputStats(1.0, 0.5)
    msol = solve_moments(theta, arch, inputs)
    rep = solve_correlation(theta, arch, inputs, msol)
    h = 1e-5
    grid = [rep.c_star - h, rep.c_star, rep.c_star + h]
    vals = [step_correlation(theta, arch, msol.state, c, inputs) for c in grid]
    fd = (vals[2] - vals[0]) / (2.0 * h)
    assert rep.chi == pytest.approx(fd, rel=1e-5)


def test_chi_equals_mean_contribution_at_full_correlation(quadrature_arch):
    # order 128: the identity tolerance is tighter than what 64 nodes give
    # for wide saturating-derivative integrands (error ~1e-5 near variance 1.7)
    rng = np.random.default_rng(43)
    theta = random_theta(quadrature_arch, rng)
    msol = solve_moments(theta, quadrature_arch, UNIT, order=128)
    chi = chi_at(theta, quadrature_arch, UNIT, msol.state, 1.0, order=128)
    m1 = moments(theta, quadrature_arch, msol.state, inputs=UNIT, order=128).m1
    assert abs(m1 - chi) < 1e-6


def test_lstm_chi_and_m1_share_every_bit():
    arch = get_architecture("LSTM")
    theta = make_theta(arch)
    msol = solve_moments(theta, arch, UNIT, seed=3)
    chi = chi_at(theta, arch, UNIT, msol.state, 1.0, seed=9)
    m1 = moments(theta, arch, msol.state, inputs=UNIT, seed=9).m1
    assert m1 == chi  # common random numbers make the two estimators identical


def test_chi_at_rejects_out_of_range():
    arch = get_architecture("vanillaRNN")
    theta = make_theta(arch)
    with pytest.raises(ValueError):
        chi_at(theta, arch, UNIT, MomentState(0.0, 0.5, 0.0), 1.5)


def test_lstm_pipeline_report_validates():
    arch = get_architecture("LSTM")
    theta = make_theta(arch)
    msol = solve_moments(theta, arch, UNIT, seed=0)
    rep = solve_correlation(theta, arch, UNIT, msol, seed=0)
    doc = rep.to_json_dict()
    jsonschema.validate(doc, report_schema())
    assert doc["arch"] == "LSTM"
    assert 0.0 <= doc["c_star"] <= 1.0


def test_report_schema_accepts_all_architectures(any_arch):
    theta = make_theta(any_arch)
    msol = solve_moments(theta, any_arch, UNIT, seed=1)
    rep = solve_correlation(theta, any_arch, UNIT, msol, seed=1)
    jsonschema.validate(rep.to_json_dict(), report_schema())


def test_correlation_decay_is_log_linear():
    # |C_t - C*| decays like chi^t: fit the log slope over a window and
    # compare to log chi from the linearization
    arch = get_architecture("GRU")
    theta = make_theta(arch, sigma2=0.5, nu2=0.5, rho2=0.05, mu_f=1.0)
    msol = solve_moments(theta, arch, UNIT)
    rep = solve_correlation(theta, arch, UNIT, msol)
    c = 0.0
    gaps = []
    for _ in range(20):
        # the raw map can overshoot 1.0 by a residual-sized amount, so clamp
        # the iterate like the solver does
        c = min(max(step_correlation(theta, arch, msol.state, c, UNIT), -1.0), 1.0)
        gaps.append(abs(c - rep.c_star))
    gaps = np.array(gaps[5:18])  # geometric regime, above the residual floor
    assert gaps.min() > 0.0
    slope = np.polyfit(np.arange(gaps.size), np.log(gaps), 1)[0]
    assert slope == pytest.approx(math.log(rep.chi), rel=0.1)
