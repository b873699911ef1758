import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from rnnmf import (
    ARCHITECTURES,
    GateParams,
    Hyperparameters,
    InvalidTheta,
    MomentState,
    NegativeVariance,
    UnknownArchitecture,
    get_architecture,
    theta_from_json_dict,
    theta_to_json_dict,
    validate_theta,
)
from rnnmf.core import MissingGate, UnknownGate, theta_hash

from conftest import make_theta


def test_registry_contents():
    assert set(ARCHITECTURES) == {"vanillaRNN", "minimalRNN", "GRU", "peepholeLSTM", "LSTM"}
    assert get_architecture("GRU").labels() == ("f", "r", "r2")
    assert get_architecture("LSTM").needs_cell
    assert not get_architecture("peepholeLSTM").needs_cell
    assert get_architecture("peepholeLSTM").state_symbol == "c"
    assert get_architecture("LSTM").state_symbol == "h"


def test_unknown_architecture():
    with pytest.raises(UnknownArchitecture):
        get_architecture("transformer")


def test_gru_inner_gate_wiring():
    arch = get_architecture("GRU")
    (gated,) = [g for g in arch.gates if g.gated_by is not None]
    assert gated.label == "r2"
    assert gated.gated_by == "r"


def test_negative_variance_rejected():
    with pytest.raises(NegativeVariance):
        GateParams(sigma2=-1e-9, nu2=0.0, rho2=0.0, mu=0.0)
    with pytest.raises(NegativeVariance):
        GateParams(sigma2=0.0, nu2=-0.5, rho2=0.0, mu=0.0)


def test_validate_theta_gate_mismatch():
    arch = get_architecture("minimalRNN")
    with pytest.raises(MissingGate):
        validate_theta(Hyperparameters({"f": GateParams(0.1, 0.1, 0.0, 0.0)}), arch)
    extra = {
        "f": GateParams(0.1, 0.1, 0.0, 0.0),
        "r": GateParams(0.1, 0.1, 0.0, 0.0),
        "o": GateParams(0.1, 0.1, 0.0, 0.0),
    }
    with pytest.raises(UnknownGate):
        validate_theta(Hyperparameters(extra), arch)


def test_replace_returns_new_theta():
    arch = get_architecture("vanillaRNN")
    theta = make_theta(arch)
    theta2 = theta.replace("f", mu=3.0)
    assert theta2.mu("f") == 3.0
    assert theta.mu("f") == 1.0


def test_moment_state_sigma2():
    st_ = MomentState(0.5, 1.0, 0.3)
    assert math.isclose(st_.sigma2_s, 0.75)


def test_json_round_trip():
    arch = get_architecture("LSTM")
    theta = make_theta(arch, sigma2=0.25, nu2=0.5, rho2=0.125, mu_f=1.5)
    doc = theta_to_json_dict(theta, arch.name)
    name, back = theta_from_json_dict(json.loads(json.dumps(doc)))
    assert name == "LSTM"
    for k in arch.labels():
        assert back.sigma2(k) == theta.sigma2(k)
        assert back.nu2(k) == theta.nu2(k)
        assert back.rho2(k) == theta.rho2(k)
        assert back.mu(k) == theta.mu(k)


def test_json_rejects_malformed():
    with pytest.raises(InvalidTheta):
        theta_from_json_dict({"gates": "nope"})
    with pytest.raises(InvalidTheta):
        theta_from_json_dict({"gates": {"f": {"sigma2": 0.1}}})
    with pytest.raises(InvalidTheta):
        theta_from_json_dict(
            {"gates": {"f": {"sigma2": 0.1, "nu2": 0.1, "rho2": 0.0, "mu": 0.0, "junk": 1}}}
        )


finite = st.floats(min_value=0.0, max_value=4.0, allow_nan=False)
mus = st.floats(min_value=-4.0, max_value=4.0, allow_nan=False)


@settings(deadline=None, max_examples=50)
@given(s2=finite, n2=finite, r2=finite, m=mus)
def test_round_trip_preserves_exact_floats(s2, n2, r2, m):
    arch = get_architecture("vanillaRNN")
    theta = Hyperparameters({"f": GateParams(s2, n2, r2, m)})
    _, back = theta_from_json_dict(theta_to_json_dict(theta, arch.name))
    assert back.sigma2("f") == s2 and back.nu2("f") == n2
    assert back.rho2("f") == r2 and back.mu("f") == m


def test_theta_hash_stable_and_sensitive():
    arch = get_architecture("GRU")
    theta = make_theta(arch)
    h = theta_hash(theta)
    assert h == theta_hash(make_theta(arch))
    assert h != theta_hash(theta.replace("f", mu=1.0 + 1e-12))
    assert len(h) == 16
