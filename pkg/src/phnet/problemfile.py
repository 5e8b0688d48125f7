"""Problem files: YAML documents validated against a JSON schema."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np
import yaml

from .boundary import MatrixForm
from .errors import DimensionError
from .evolve import ControlSignal, EvoProblem
from .network import HamiltonianField, Interval, NetworkSpec

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_vector = {"type": "array", "items": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "required": ["network", "matrices"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer"},
        "network": {
            "type": "object",
            "required": ["intervals"],
            "additionalProperties": False,
            "properties": {
                "intervals": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "properties": {"a": {"type": "number"}, "b": {"type": "number"}},
                        "anyOf": [{"required": ["a"]}, {"required": ["b"]}],
                    },
                },
            },
        },
        "matrices": {
            "type": "object",
            "required": ["P1"],
            "additionalProperties": False,
            "properties": {"P1": _matrix, "P0": _matrix, "W_B": _matrix, "M": _matrix, "W_C": _matrix},
        },
        "hamiltonian": {
            "type": "object",
            "required": ["type"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["identity", "constant", "piecewise_constant", "tabulated"]},
                "value": _matrix,
                "breakpoints": _vector,
                "nodes": _vector,
                "values": {"type": "array", "items": _matrix},
            },
        },
        "evolution": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M0": _matrix, "M1": _matrix,
                "rho0": {"type": "number", "exclusiveMinimum": 0},
                "rho": {"type": "number", "exclusiveMinimum": 0},
                "T": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "scheme": {"enum": ["implicit_euler", "cfl"]},
                "initial": {
                    "type": "object", "required": ["type"], "additionalProperties": False,
                    "properties": {
                        "type": {"enum": ["zero", "constant", "bump", "cosine"]},
                        "value": _vector, "center": {"type": "number"},
                        "width": {"type": "number", "exclusiveMinimum": 0},
                        "amplitude": _vector, "mean": _vector, "frequency": {"type": "number"},
                    },
                },
            },
        },
        "control": {
            "type": "object", "required": ["type"], "additionalProperties": False,
            "properties": {
                "type": {"enum": ["constant", "piecewise_linear", "sinusoid"]},
                "value": _vector, "times": _vector, "values": _matrix,
                "amplitude": _vector, "frequency": _vector, "phase": _vector, "offset": _vector,
            },
        },
        "outputs": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "csv": {"type": "string"}, "svg": {"type": "string"},
                "certificate": {"type": "string"}, "plan": {"type": "string"},
                "stride": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ProblemFileError(ValueError):
    """Schema or consistency error; ``location`` points into the document."""

    def __init__(self, message, location=""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


@dataclass
class ProblemSpec:
    name: str
    net: NetworkSpec
    P1: np.ndarray
    P0: Optional[np.ndarray]
    W_B: Optional[np.ndarray]
    M: Optional[np.ndarray]
    W_C: Optional[np.ndarray]
    H: HamiltonianField
    evolution: dict
    initial: Optional[dict]
    control: Optional[ControlSignal]
    outputs: dict
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def N(self):
        return self.net.N

    @property
    def bc(self):
        return MatrixForm(self.W_B) if self.W_B is not None else self.M

    def evo_problem(self, h=None, dt=None, rho0=None):
        ev = self.evolution
        return EvoProblem(
            self.net, self.P1, self.bc, H=self.H, P0=self.P0,
            M0=None if ev.get("M0") is None else np.array(ev["M0"], dtype=float),
            M1=None if ev.get("M1") is None else np.array(ev["M1"], dtype=float),
            rho0=rho0 if rho0 is not None else ev.get("rho0", 1.0),
            T=ev.get("T", 1.0), dt=dt if dt is not None else ev.get("dt", 1e-3),
            h=h if h is not None else ev.get("h", 1e-2),
            W_C=self.W_C, control=self.control,
        )

    def initial_function(self):
        spec = self.initial or {"type": "zero"}
        N = self.N
        kind = spec["type"]
        if kind == "zero":
            return None
        if kind == "constant":
            v = _per_channel(spec.get("value", [0.0]), N, "evolution.initial.value")
            return lambda k, x: v[k] * np.ones_like(x)
        if kind == "bump":
            c, w = spec.get("center", 0.0), spec.get("width", 0.25)
            amp = _per_channel(spec.get("amplitude", [1.0]), N, "evolution.initial.amplitude")
            return lambda k, x: amp[k] * np.where(np.abs(x - c) < w / 2,
                                                  np.sin(np.pi * (x - c + w / 2) / w) ** 2, 0.0)
        mean = _per_channel(spec.get("mean", [0.0]), N, "evolution.initial.mean")
        amp = _per_channel(spec.get("amplitude", [1.0]), N, "evolution.initial.amplitude")
        freq = spec.get("frequency", 1.0)
        return lambda k, x: mean[k] + amp[k] * np.cos(2 * np.pi * freq * x)


def _per_channel(values, N, where):
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return np.full(N, v.item())
    if v.size != N:
        raise ProblemFileError(f"expected 1 or {N} entries, got {v.size}", where)
    return v


def _matrix_of(doc, key, shape, where):
    if doc.get(key) is None:
        return None
    A = np.array(doc[key], dtype=float)
    if A.ndim != 2 or any(s is not None and s != d for s, d in zip(shape, A.shape)):
        raise ProblemFileError(f"expected shape {shape}, got {A.shape}", f"{where}.{key}")
    return A


def _hamiltonian(doc, N):
    if doc is None or doc["type"] == "identity":
        return HamiltonianField.identity(N)
    try:
        if doc["type"] == "constant":
            H = HamiltonianField.constant(doc["value"])
        elif doc["type"] == "piecewise_constant":
            H = HamiltonianField.piecewise_constant(doc["breakpoints"], doc["values"])
        else:
            H = HamiltonianField.tabulated(doc["nodes"], doc["values"])
    except KeyError as exc:
        raise ProblemFileError(f"missing key {exc}", "hamiltonian") from exc
    except (ValueError, DimensionError) as exc:
        raise ProblemFileError(str(exc), "hamiltonian") from exc
    if H.N != N:
        raise ProblemFileError(f"Hamiltonian is {H.N}x{H.N}, network has {N} channels", "hamiltonian")
    return H


def _control(doc, N):
    if doc is None:
        return None
    try:
        if doc["type"] == "constant":
            sig = ControlSignal.constant(_per_channel(doc["value"], N, "control.value"))
        elif doc["type"] == "piecewise_linear":
            sig = ControlSignal.piecewise_linear(doc["times"], doc["values"])
        else:
            sig = ControlSignal.sinusoid(doc["amplitude"], doc.get("frequency", [1.0]),
                                         doc.get("phase", [0.0]), doc.get("offset", [0.0]))
    except KeyError as exc:
        raise ProblemFileError(f"missing key {exc}", "control") from exc
    if sig.N == 1 and N > 1:
        base = sig
        sig = ControlSignal(lambda t: np.full(N, base(t)[0]), N, base.spec)
    if sig.N != N:
        raise ProblemFileError(f"control has {sig.N} components, network has {N}", "control")
    return sig


def parse_problem(doc):
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ProblemFileError(exc.message, loc) from exc
    try:
        net = NetworkSpec(tuple(Interval(iv.get("a"), iv.get("b")) for iv in doc["network"]["intervals"]))
    except ValueError as exc:
        raise ProblemFileError(str(exc), "network.intervals") from exc
    N = net.N
    mats = doc["matrices"]
    P1 = _matrix_of(mats, "P1", (N, N), "matrices")
    P0 = _matrix_of(mats, "P0", (N, N), "matrices")
    W_B = _matrix_of(mats, "W_B", (None, 2 * N), "matrices")
    M = _matrix_of(mats, "M", (None, None), "matrices")
    W_C = _matrix_of(mats, "W_C", (None, 2 * N), "matrices")
    if W_B is None and M is None:
        raise ProblemFileError("one of W_B or M is required", "matrices")
    if W_B is not None and M is not None:
        raise ProblemFileError("give either W_B or M, not both", "matrices")
    if W_B is not None and not net.all_bounded_equal:
        raise ProblemFileError("W_B needs all channels on one bounded interval", "matrices.W_B")
    ev = dict(doc.get("evolution", {}))
    for key in ("M0", "M1"):
        if ev.get(key) is not None:
            _matrix_of(ev, key, (N, N), "evolution")
    return ProblemSpec(
        name=doc.get("name", "problem"), net=net, P1=P1, P0=P0, W_B=W_B, M=M, W_C=W_C,
        H=_hamiltonian(doc.get("hamiltonian"), N), evolution=ev, initial=ev.pop("initial", None),
        control=_control(doc.get("control"), N), outputs=dict(doc.get("outputs", {})),
        seed=int(doc.get("seed", 0)), raw=doc,
    )


def load_problem(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ProblemFileError(f"not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemFileError("top level must be a mapping")
    return parse_problem(doc)


def bundled_problems():
    """Paths of the example problem files shipped with the package."""
    return sorted((Path(__file__).parent / "data").glob("*.yaml"))
