"""Shared domain types: gate sets, hyperparameters, moment states, architectures.

Everything here is immutable after construction and safe to share across
worker processes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Optional

import numpy as np
from scipy.special import expit

__all__ = [
    "MissingGate",
    "NegativeVariance",
    "UnknownGate",
    "UnknownArchitecture",
    "InvalidTheta",
    "sigmoid",
    "dsigmoid",
    "dtanh",
    "GateId",
    "GateParams",
    "Hyperparameters",
    "InputStats",
    "MomentState",
    "ArchitectureSpec",
    "SimulationConfig",
    "ARCHITECTURES",
    "get_architecture",
    "validate_theta",
    "theta_to_json_dict",
    "theta_from_json_dict",
    "load_theta",
    "dump_theta",
    "theta_hash",
    "ZERO_STATE",
]


class MissingGate(ValueError):
    """Theta lacks an entry for a gate the architecture requires."""


class NegativeVariance(ValueError):
    """A variance hyperparameter is negative."""


class UnknownGate(ValueError):
    """Theta carries an entry for a gate the architecture does not define."""


class UnknownArchitecture(ValueError):
    """Architecture name not in the registry."""


class InvalidTheta(ValueError):
    """Malformed hyperparameter description (bad JSON shape, unknown keys)."""


def sigmoid(x):
    return expit(x)


def dsigmoid(x):
    s = expit(x)
    return s * (1.0 - s)


def dtanh(x):
    t = np.tanh(x)
    return 1.0 - t * t


@dataclass(frozen=True)
class GateId:
    """A gate label plus its pre-activation form.

    form is "linear" (u_k = W_k s + U_k z + b_k) or "gated"
    (u_k2 = W_k2 (g(u_k) o s) + U_k2 z + b_k2). Gated entries name the inner
    gate whose nonlinearity g does the gating.
    """

    label: str
    form: str = "linear"
    gated_by: Optional[str] = None
    g_name: Optional[str] = None  # nonlinearity applied to the inner gate

    def __post_init__(self):
        if self.form not in ("linear", "gated"):
            raise ValueError(f"unknown gate form {self.form!r}")
        if self.form == "gated" and (self.gated_by is None or self.g_name is None):
            raise ValueError("gated gate needs gated_by and g_name")


@dataclass(frozen=True)
class GateParams:
    """Per-gate weight and bias distribution parameters."""

    sigma2: float  # recurrent weight variance
    nu2: float  # input weight variance
    rho2: float  # bias variance
    mu: float  # bias mean

    def __post_init__(self):
        for name in ("sigma2", "nu2", "rho2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidTheta(f"{name} must be finite, got {v!r}")
            if v < 0:
                raise NegativeVariance(f"{name} = {v} < 0")
        if not math.isfinite(self.mu):
            raise InvalidTheta(f"mu must be finite, got {self.mu!r}")


class Hyperparameters:
    """Mapping from gate label to GateParams for one architecture."""

    def __init__(self, gates: Mapping[str, GateParams]):
        self._gates = MappingProxyType(dict(gates))

    @property
    def gates(self) -> Mapping[str, GateParams]:
        return self._gates

    def labels(self):
        return tuple(self._gates.keys())

    def __getitem__(self, label: str) -> GateParams:
        try:
            return self._gates[label]
        except KeyError:
            raise MissingGate(f"no hyperparameters for gate {label!r}") from None

    def __contains__(self, label: str) -> bool:
        return label in self._gates

    def sigma2(self, label: str) -> float:
        return self[label].sigma2

    def nu2(self, label: str) -> float:
        return self[label].nu2

    def rho2(self, label: str) -> float:
        return self[label].rho2

    def mu(self, label: str) -> float:
        return self[label].mu

    def replace(self, label: str, **changes) -> "Hyperparameters":
        d = dict(self._gates)
        cur = d[label]
        d[label] = GateParams(
            sigma2=changes.get("sigma2", cur.sigma2),
            nu2=changes.get("nu2", cur.nu2),
            rho2=changes.get("rho2", cur.rho2),
            mu=changes.get("mu", cur.mu),
        )
        return Hyperparameters(d)

    def __eq__(self, other):
        if not isinstance(other, Hyperparameters):
            return NotImplemented
        return dict(self._gates) == dict(other._gates)

    def __hash__(self):
        return hash(tuple(sorted((k, v.sigma2, v.nu2, v.rho2, v.mu) for k, v in self._gates.items())))

    def __repr__(self):
        inner = ", ".join(f"{k}={v}" for k, v in self._gates.items())
        return f"Hyperparameters({inner})"


@dataclass(frozen=True)
class InputStats:
    """Second moment R of the input coordinates and the inter-sequence
    correlation Sigma_z of the two driving input streams."""

    R: float
    sigma_z: float

    def __post_init__(self):
        if not (self.R >= 0):
            raise ValueError(f"R must be >= 0, got {self.R}")
        if not (abs(self.sigma_z) <= 1):
            raise ValueError(f"|sigma_z| must be <= 1, got {self.sigma_z}")


_Q_TOL = 1e-12


@dataclass(frozen=True)
class MomentState:
    """State moments (mu_s, Q_s, C_s) of a pair of coupled sequences.

    sigma2_s = Q_s - mu_s^2 is derived. For degenerate states (sigma2_s = 0)
    the correlation is undefined; the convention is to store c_s = 0, which
    is inert because downstream formulas only consume C * sigma2 products.
    """

    mu_s: float
    q_s: float
    c_s: float

    def __post_init__(self):
        if self.q_s < self.mu_s * self.mu_s - _Q_TOL * max(1.0, abs(self.q_s)):
            raise ValueError(f"Q_s = {self.q_s} < mu_s^2 = {self.mu_s ** 2}")
        if abs(self.c_s) > 1 + 1e-9:
            raise ValueError(f"|C_s| = {abs(self.c_s)} > 1")

    @property
    def sigma2_s(self) -> float:
        return max(self.q_s - self.mu_s * self.mu_s, 0.0)


ZERO_STATE = MomentState(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ArchitectureSpec:
    """A recurrent cell written as s^t = f(s^{t-1}, {u_k^t}).

    f is affine in s_prev and vectorizes over numpy arrays. d0 is df/ds_prev
    and dk[k] is df/du_k, both at fixed pre-activations. For the LSTM the
    tracked state is h and f takes the previous cell value c_prev as an
    extra argument; needs_cell marks that the moment maps require a sampled
    cell ensemble (the map is not closed in (mu, Q, C) alone).
    """

    name: str
    gates: tuple[GateId, ...]
    f: Callable = field(repr=False)
    d0: Callable = field(repr=False)
    dk: Mapping[str, Callable] = field(repr=False, default_factory=dict)
    needs_cell: bool = False
    state_symbol: str = "s"

    def gate(self, label: str) -> GateId:
        for g in self.gates:
            if g.label == label:
                return g
        raise UnknownGate(f"{self.name} has no gate {label!r}")

    def labels(self) -> tuple[str, ...]:
        return tuple(g.label for g in self.gates)

    def linear_gates(self) -> tuple[GateId, ...]:
        return tuple(g for g in self.gates if g.form == "linear")

    def gated_gates(self) -> tuple[GateId, ...]:
        return tuple(g for g in self.gates if g.form == "gated")


def _vanilla_f(s, u, c_prev=None):
    return sigmoid(u["f"])


def _vanilla_d0(s, u, c_prev=None):
    return np.zeros_like(np.asarray(s, dtype=float))


def _minimal_f(s, u, c_prev=None):
    g = sigmoid(u["f"])
    return g * s + (1.0 - g) * np.tanh(u["r"])


def _gru_f(s, u, c_prev=None):
    g = sigmoid(u["f"])
    return g * s + (1.0 - g) * np.tanh(u["r2"])


def _peephole_f(c, u, c_prev=None):
    return sigmoid(u["f"]) * c + sigmoid(u["i"]) * np.tanh(u["r"])


def _lstm_cell(u, c_prev):
    return sigmoid(u["f"]) * c_prev + sigmoid(u["i"]) * np.tanh(u["r"])


def _lstm_f(h, u, c_prev=0.0):
    return sigmoid(u["o"]) * np.tanh(_lstm_cell(u, c_prev))


def _lstm_d0(h, u, c_prev=0.0):
    # at fixed c_prev the update does not read h directly
    return np.zeros_like(np.asarray(h, dtype=float))


ARCHITECTURES: Mapping[str, ArchitectureSpec] = MappingProxyType(
    {
        "vanillaRNN": ArchitectureSpec(
            name="vanillaRNN",
            gates=(GateId("f"),),
            f=_vanilla_f,
            d0=_vanilla_d0,
            dk={"f": lambda s, u, c_prev=None: dsigmoid(u["f"])},
        ),
        "minimalRNN": ArchitectureSpec(
            name="minimalRNN",
            gates=(GateId("f"), GateId("r")),
            f=_minimal_f,
            d0=lambda s, u, c_prev=None: sigmoid(u["f"]) * np.ones_like(np.asarray(s, dtype=float)),
            dk={
                "f": lambda s, u, c_prev=None: dsigmoid(u["f"]) * (s - np.tanh(u["r"])),
                "r": lambda s, u, c_prev=None: (1.0 - sigmoid(u["f"])) * dtanh(u["r"]),
            },
        ),
        "GRU": ArchitectureSpec(
            name="GRU",
            gates=(GateId("f"), GateId("r"), GateId("r2", form="gated", gated_by="r", g_name="sigmoid")),
            f=_gru_f,
            d0=lambda s, u, c_prev=None: sigmoid(u["f"]) * np.ones_like(np.asarray(s, dtype=float)),
            dk={
                "f": lambda s, u, c_prev=None: dsigmoid(u["f"]) * (s - np.tanh(u["r2"])),
                "r": lambda s, u, c_prev=None: np.zeros_like(np.asarray(s, dtype=float)),
                "r2": lambda s, u, c_prev=None: (1.0 - sigmoid(u["f"])) * dtanh(u["r2"]),
            },
        ),
        "peepholeLSTM": ArchitectureSpec(
            name="peepholeLSTM",
            gates=(GateId("i"), GateId("f"), GateId("r"), GateId("o")),
            f=_peephole_f,
            d0=lambda c, u, c_prev=None: sigmoid(u["f"]) * np.ones_like(np.asarray(c, dtype=float)),
            dk={
                "i": lambda c, u, c_prev=None: dsigmoid(u["i"]) * np.tanh(u["r"]),
                "f": lambda c, u, c_prev=None: dsigmoid(u["f"]) * c,
                "r": lambda c, u, c_prev=None: sigmoid(u["i"]) * dtanh(u["r"]),
                "o": lambda c, u, c_prev=None: np.zeros_like(np.asarray(c, dtype=float)),
            },
            state_symbol="c",
        ),
        "LSTM": ArchitectureSpec(
            name="LSTM",
            gates=(GateId("i"), GateId("f"), GateId("r"), GateId("o")),
            f=_lstm_f,
            d0=_lstm_d0,
            dk={
                "i": lambda h, u, c_prev=0.0: sigmoid(u["o"]) * dtanh(_lstm_cell(u, c_prev)) * dsigmoid(u["i"]) * np.tanh(u["r"]),
                "f": lambda h, u, c_prev=0.0: sigmoid(u["o"]) * dtanh(_lstm_cell(u, c_prev)) * dsigmoid(u["f"]) * c_prev,
                "r": lambda h, u, c_prev=0.0: sigmoid(u["o"]) * dtanh(_lstm_cell(u, c_prev)) * sigmoid(u["i"]) * dtanh(u["r"]),
                "o": lambda h, u, c_prev=0.0: dsigmoid(u["o"]) * np.tanh(_lstm_cell(u, c_prev)),
            },
            needs_cell=True,
            state_symbol="h",
        ),
    }
)


def get_architecture(name: str) -> ArchitectureSpec:
    try:
        return ARCHITECTURES[name]
    except KeyError:
        raise UnknownArchitecture(
            f"unknown architecture {name!r}; known: {sorted(ARCHITECTURES)}"
        ) from None


@dataclass(frozen=True)
class SimulationConfig:
    """Finite-width simulation settings: width, horizon, initial-state
    distribution parameters and the RNG seed."""

    N: int
    T: int
    d0_mean: float = 0.0
    d0_var: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N >= 1 required")
        if self.T < 1:
            raise ValueError("T >= 1 required")
        if self.d0_var < 0:
            raise ValueError("d0_var >= 0 required")


def validate_theta(theta: Hyperparameters, arch: ArchitectureSpec) -> None:
    """Checks that theta covers exactly the gates of arch with nonnegative
    variances. Raises MissingGate, UnknownGate or NegativeVariance."""

    want = set(arch.labels())
    have = set(theta.labels())
    missing = want - have
    if missing:
        raise MissingGate(f"{arch.name}: missing hyperparameters for {sorted(missing)}")
    extra = have - want
    if extra:
        raise UnknownGate(f"{arch.name}: unexpected gate entries {sorted(extra)}")
    for k in arch.labels():
        p = theta[k]
        for name in ("sigma2", "nu2", "rho2"):
            if getattr(p, name) < 0:
                raise NegativeVariance(f"gate {k!r}: {name} = {getattr(p, name)} < 0")


_GATE_KEYS = ("sigma2", "nu2", "rho2", "mu")


def theta_to_json_dict(theta: Hyperparameters, arch_name: str) -> dict:
    return {
        "arch": arch_name,
        "gates": {
            k: {"sigma2": p.sigma2, "nu2": p.nu2, "rho2": p.rho2, "mu": p.mu}
            for k, p in theta.gates.items()
        },
    }


def theta_from_json_dict(obj: dict) -> tuple[str, Hyperparameters]:
    """Parses {"arch": ..., "gates": {...}}; unknown keys are rejected."""

    if not isinstance(obj, dict):
        raise InvalidTheta("theta document must be a JSON object")
    extra = set(obj) - {"arch", "gates"}
    if extra:
        raise InvalidTheta(f"unknown top-level keys {sorted(extra)}")
    if "arch" not in obj or "gates" not in obj:
        raise InvalidTheta('theta document needs "arch" and "gates"')
    arch_name = obj["arch"]
    if not isinstance(arch_name, str):
        raise InvalidTheta('"arch" must be a string')
    gates_obj = obj["gates"]
    if not isinstance(gates_obj, dict):
        raise InvalidTheta('"gates" must be an object')
    gates = {}
    for label, entry in gates_obj.items():
        if not isinstance(entry, dict):
            raise InvalidTheta(f"gate {label!r} entry must be an object")
        bad = set(entry) - set(_GATE_KEYS)
        if bad:
            raise InvalidTheta(f"gate {label!r}: unknown keys {sorted(bad)}")
        missing = set(_GATE_KEYS) - set(entry)
        if missing:
            raise InvalidTheta(f"gate {label!r}: missing keys {sorted(missing)}")
        vals = {}
        for key in _GATE_KEYS:
            v = entry[key]
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise InvalidTheta(f"gate {label!r}: {key} must be a number")
            vals[key] = float(v)
        gates[label] = GateParams(**vals)
    theta = Hyperparameters(gates)
    arch = get_architecture(arch_name)
    validate_theta(theta, arch)
    return arch_name, theta


def load_theta(path) -> tuple[str, Hyperparameters]:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return theta_from_json_dict(obj)


def dump_theta(theta: Hyperparameters, arch_name: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(theta_to_json_dict(theta, arch_name), fh, indent=2, sort_keys=True)
        fh.write("\n")


def theta_hash(theta: Hyperparameters) -> str:
    """Stable short digest of the gate parameters, used in ensemble metadata."""

    doc = {
        k: [repr(p.sigma2), repr(p.nu2), repr(p.rho2), repr(p.mu)]
        for k, p in sorted(theta.gates.items())
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
