"""JSON configuration for circuits and operator pairs (schema version 1)."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError

from .circuits import AmplifierProblem, LeakyTransistorProblem
from .ops import (
    A_LIN,
    DEFAULT_ALPHA_F,
    DEFAULT_ALPHA_R,
    DEFAULT_BOX,
    LinearOp,
    NPNTransistor,
    OperatorSpecError,
    build_operator,
    compose,
    identity,
    ideal_diode,
    preconditioner,
    quartic_gradient,
    scale,
)

__all__ = [
    "ConfigError",
    "LeakyConfig",
    "AmplifierConfig",
    "load_circuit_config",
    "bundled_config",
    "PairSpec",
    "PAIR_PRESETS",
    "load_pair",
    "npn_kappa",
    "ANISO_GAMMA",
]

SCHEMA_VERSION = 1
ANISO_GAMMA = 0.1


class ConfigError(ValueError):
    """A configuration problem; ``field`` is a dotted path to the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


PositiveFloat = Annotated[float, Field(gt=0)]
Alpha = Annotated[float, Field(ge=0, lt=1)]


class TGrid(_Model):
    start: float = 0.0
    stop: float = 1.0
    samples: Annotated[int, Field(ge=1)] = 256
    endpoint: bool = False

    def grid(self):
        return np.linspace(self.start, self.stop, self.samples, endpoint=self.endpoint)


class SolverSpec(_Model):
    tol: PositiveFloat = 1e-13
    max_iters: Annotated[int, Field(ge=1)] = 1_000_000
    mode: Literal["batch", "warm"] = "batch"


class CurrentSource(_Model):
    """``i_k(t) = offset_k + amplitude_k sin(2π f t + phase_k)``."""

    amplitude: Tuple[float, float] = (1e-3, 1e-3)
    phase: Tuple[float, float] = (0.0, math.pi / 2)
    frequency: float = 1.0
    offset: Tuple[float, float] = (0.0, 0.0)

    def sample(self, t):
        a, ph, off = (np.asarray(v, dtype=float) for v in (self.amplitude, self.phase, self.offset))
        return off + a * np.sin(2 * np.pi * self.frequency * t[:, None] + ph)


class VoltageSource(_Model):
    """``v_in(t) = offset + amplitude * wave(2π f t + phase)``."""

    kind: Literal["cos", "sin", "constant"] = "cos"
    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0
    offset: float = 0.0

    def sample(self, t):
        arg = 2 * np.pi * self.frequency * t + self.phase
        if self.kind == "constant":
            return np.full(len(t), self.offset + self.amplitude)
        wave = np.cos(arg) if self.kind == "cos" else np.sin(arg)
        return self.offset + self.amplitude * wave


class LeakyParams(_Model):
    r: PositiveFloat
    gamma: PositiveFloat = 1.0
    alpha_f: Alpha = DEFAULT_ALPHA_F
    alpha_r: Alpha = DEFAULT_ALPHA_R
    diode: Literal["ideal", "shockley"] = "ideal"
    source: CurrentSource = CurrentSource()


class AmplifierParams(_Model):
    R_E: PositiveFloat
    R_C: PositiveFloat
    v_plus: float
    v_in: VoltageSource = VoltageSource()
    gamma: PositiveFloat = 1e-3
    tau: PositiveFloat = 100.0
    alpha_f: Alpha = DEFAULT_ALPHA_F
    alpha_r: Alpha = DEFAULT_ALPHA_R


class LeakyConfig(_Model):
    schema_version: Literal[1] = Field(alias="schema")
    circuit: Literal["leaky_transistor"]
    params: LeakyParams
    t_grid: TGrid = TGrid()
    solver: SolverSpec = SolverSpec()

    def problem(self) -> LeakyTransistorProblem:
        t = self.t_grid.grid()
        p = self.params
        return LeakyTransistorProblem(
            r=p.r, i_src=p.source.sample(t), gamma=p.gamma, alpha_f=p.alpha_f, alpha_r=p.alpha_r, diode=p.diode, t=t
        )


class AmplifierConfig(_Model):
    schema_version: Literal[1] = Field(alias="schema")
    circuit: Literal["amplifier"]
    params: AmplifierParams
    t_grid: TGrid = TGrid()
    solver: SolverSpec = SolverSpec()

    def problem(self) -> AmplifierProblem:
        t = self.t_grid.grid()
        p = self.params
        return AmplifierProblem(
            R_E=p.R_E,
            R_C=p.R_C,
            v_plus=p.v_plus,
            v_in=p.v_in.sample(t),
            gamma=p.gamma,
            tau=p.tau,
            alpha_f=p.alpha_f,
            alpha_r=p.alpha_r,
            t=t,
        )


_CIRCUIT = TypeAdapter(Annotated[Union[LeakyConfig, AmplifierConfig], Field(discriminator="circuit")])


def _read_json(source):
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _loc(err):
    parts = []
    for p in err["loc"]:
        if isinstance(p, int):
            parts.append(f"[{p}]")
        elif p in ("leaky_transistor", "amplifier"):
            continue  # discriminator branch, not a field
        else:
            parts.append(("." if parts else "") + ("schema" if p == "schema_version" else str(p)))
    return "".join(parts) or "<root>"


def load_circuit_config(source) -> Union[LeakyConfig, AmplifierConfig]:
    """Validate a circuit config given as a dict or a JSON file path."""
    data = _read_json(source)
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    try:
        return _CIRCUIT.validate_python(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(_loc(err), err["msg"]) from None


def bundled_config(name: str) -> dict:
    """One of the configs shipped with the package: ``leaky`` or ``amplifier``."""
    fname = name if name.endswith(".json") else f"{name}.json"
    try:
        text = resources.files("pairsrg").joinpath("data").joinpath(fname).read_text()
    except FileNotFoundError:
        raise ConfigError("config", f"no bundled config named {name!r}") from None
    return json.loads(text)


# ---------------------------------------------------------------------------
# Operator pairs
# ---------------------------------------------------------------------------


class PairSpec:
    """Two operators plus the sampling box for their SRG."""

    def __init__(self, name, A, B, box=DEFAULT_BOX):
        self.name, self.A, self.B, self.box = name, A, B, tuple(float(b) for b in box)

    def __repr__(self):
        return f"PairSpec({self.name!r}, {self.A.tag}, {self.B.tag})"


def npn_kappa(alpha_f=DEFAULT_ALPHA_F, alpha_r=DEFAULT_ALPHA_R):
    """``0.45 |λ|`` with ``λ`` the smallest-modulus eigenvalue of the transistor matrix ``R``."""
    R = NPNTransistor(alpha_f, alpha_r).M
    return 0.45 * float(np.min(np.abs(np.linalg.eigvals(R))))


def _aniso(kind):
    A = scale(ANISO_GAMMA, compose(preconditioner(kind, 2), quartic_gradient(2)))
    return A, identity(2) - A


def _preset(name):
    if name == "lin-id":
        return LinearOp(A_LIN, "A_lin"), identity(3)
    if name == "lin-shift":
        return LinearOp(A_LIN, "A_lin"), LinearOp(2 * np.linalg.inv(A_LIN).T, "2A_lin^-T")
    if name == "npn-id":
        return NPNTransistor(), identity(2)
    if name == "npn-partner":
        t = NPNTransistor()
        return t, t.B
    if name == "npn-shift":
        t = NPNTransistor()
        return t, t + (2 * npn_kappa()) * identity(2)
    if name == "diode-id":
        return ideal_diode(), identity(1)
    if name.startswith("aniso-"):
        kind = name[len("aniso-"):]
        if kind in ("identity", "clip", "arcsinh"):
            return _aniso(kind)
    return None


PAIR_PRESETS = (
    "lin-id",
    "lin-shift",
    "npn-id",
    "npn-partner",
    "npn-shift",
    "diode-id",
    "aniso-identity",
    "aniso-clip",
    "aniso-arcsinh",
)


def load_pair(source) -> PairSpec:
    """A preset name, a JSON file path or a dict ``{"schema": 1, "A": ..., "B": ..., "box": [lo, hi]}``."""
    if isinstance(source, str) and source in PAIR_PRESETS:
        A, B = _preset(source)
        return PairSpec(source, A, B)
    data = _read_json(source)
    if not isinstance(data, dict):
        raise ConfigError("<root>", "pair config must be a JSON object")
    if data.get("schema") != SCHEMA_VERSION:
        raise ConfigError("schema", f"expected schema {SCHEMA_VERSION}, got {data.get('schema')!r}")
    unknown = set(data) - {"schema", "name", "A", "B", "box", "preset"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    box = data.get("box", list(DEFAULT_BOX))
    if not (isinstance(box, list) and len(box) == 2 and all(isinstance(b, (int, float)) for b in box) and box[0] < box[1]):
        raise ConfigError("box", "expected [lo, hi] with lo < hi")
    if "preset" in data:
        if data["preset"] not in PAIR_PRESETS:
            raise ConfigError("preset", f"unknown preset {data['preset']!r}")
        A, B = _preset(data["preset"])
        return PairSpec(data.get("name", data["preset"]), A, B, box)
    try:
        A = build_operator(data.get("A"), "A")
        B = build_operator(data.get("B"), "B")
    except OperatorSpecError as exc:
        raise ConfigError(exc.field, str(exc).split(": ", 1)[-1]) from None
    if A.dim != B.dim:
        raise ConfigError("B", f"dimension mismatch: A has dim {A.dim}, B has dim {B.dim}")
    return PairSpec(data.get("name", "custom"), A, B, box)
