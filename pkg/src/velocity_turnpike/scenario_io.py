"""Scenario files and result bundles.

A scenario file is a flat ``key = value`` document::

    # parallel parking
    model = hovercraft
    T = 20
    N = 100
    q0 = [0, 1, 0]
    v0 = [0, 0, 0]
    qT = [0, 0, 0]
    vT = [0, 0, 0]
    cost.w_v = [1, 1, 1]
    cost.w_u = [1, 1]
    cost.scale = 1

A JSON object with the same keys (flat dotted or nested) is accepted too.
Numbers are written in the shortest representation that round-trips.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from .core import Scenario, StageCost, State, Trajectory
from .models import MODEL_IDS, make_model
from .nlp import SolverOptions
from .transcription import TranscriptionConfig


class ScenarioParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


REQUIRED = ("model", "T", "q0", "v0", "qT", "vT")
VECTOR_KEYS = {"q0", "v0", "qT", "vT", "cost.w_v", "cost.w_u", "cost.v_ref",
               "bounds.u_lo", "bounds.u_hi", "bounds.x_lo", "bounds.x_hi"}
SCALAR_KEYS = {"T", "cost.scale", "hovercraft.r", "hovercraft.m", "hovercraft.J"}
SOLVER_TYPES = {f.name: f.type for f in fields(SolverOptions)}
SOLVER_KEYS = {f"solver.{name}" for name in SOLVER_TYPES}
KNOWN_KEYS = set(REQUIRED) | VECTOR_KEYS | SCALAR_KEYS | {"N", "scheme"} | SOLVER_KEYS

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    transcription: TranscriptionConfig = TranscriptionConfig()
    solver: SolverOptions = SolverOptions()


def fmt(x) -> str:
    """Shortest round-trip text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _parse_scalar(text: str, line: int):
    text = text.strip()
    if not text:
        raise ScenarioParseError("missing value", line)
    if text in ("true", "false"):
        return text == "true"
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", text):
        return text
    raise ScenarioParseError(f"cannot read value {text!r}", line)


def _parse_value(text: str, line: int):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ScenarioParseError("unterminated array", line)
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(item, line) for item in inner.split(",")]
    return _parse_scalar(text, line)


def _flatten(obj: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _read_pairs(text: str):
    """Return ``{key: (value, line)}`` from either format."""
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioParseError(exc.msg, exc.lineno) from None
        if not isinstance(data, dict):
            raise ScenarioParseError("top level must be an object", 1)
        return {k: (v, None) for k, v in _flatten(data).items()}
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioParseError("expected 'key = value'", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise ScenarioParseError(f"invalid key {key!r}", lineno)
        if key in pairs:
            raise ScenarioParseError(f"duplicate key {key!r}", lineno)
        pairs[key] = (_parse_value(value, lineno), lineno)
    return pairs


def _vector(value, key, line):
    vals = value if isinstance(value, list) else [value]
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
        raise ScenarioParseError(f"{key} must be numeric", line)
    return [float(v) for v in vals]


def _number(value, key, line):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioParseError(f"{key} must be a number", line)
    return value


def parse_scenario_text(text: str) -> ScenarioFile:
    pairs = _read_pairs(text)
    for key, (_, line) in pairs.items():
        if key not in KNOWN_KEYS:
            raise ScenarioParseError(f"unknown key {key!r}", line)
    for key in REQUIRED:
        if key not in pairs:
            raise ScenarioParseError(f"missing required key {key!r}")

    def get(key, default=None):
        return pairs[key] if key in pairs else (default, None)

    model, mline = get("model")
    if model not in MODEL_IDS:
        raise ScenarioParseError(f"unknown model {model!r}", mline)
    vec = {k: _vector(pairs[k][0], k, pairs[k][1]) for k in VECTOR_KEYS if k in pairs}

    def number(key, default=None):
        value, line = get(key, default)
        return _number(value, key, line)

    params = {}
    for name in ("r", "m", "J"):
        key = f"hovercraft.{name}"
        if key in pairs:
            if model != "hovercraft":
                raise ScenarioParseError(f"{key} only applies to the hovercraft", pairs[key][1])
            params[name] = float(_number(pairs[key][0], key, pairs[key][1]))
    try:
        mdl = make_model(model, **params)
        n_q, n_u = mdl.n_q, mdl.n_u
        cost = StageCost(
            vec.get("cost.w_v", [1.0] * n_q),
            vec.get("cost.w_u", [1.0] * n_u),
            float(number("cost.scale", 0.5)),
            vec.get("cost.v_ref"),
        )
        for key in ("q0", "v0", "qT", "vT"):
            if len(vec[key]) != n_q:
                raise ScenarioParseError(f"{key} must have {n_q} entries", pairs[key][1])
        ubox = xbox = None
        if "bounds.u_lo" in vec or "bounds.u_hi" in vec:
            ubox = (vec.get("bounds.u_lo", [-np.inf] * n_u), vec.get("bounds.u_hi", [np.inf] * n_u))
        if "bounds.x_lo" in vec or "bounds.x_hi" in vec:
            xbox = (vec.get("bounds.x_lo", [-np.inf] * 2 * n_q), vec.get("bounds.x_hi", [np.inf] * 2 * n_q))
        scenario = Scenario(model, cost, State(vec["q0"], vec["v0"]), State(vec["qT"], vec["vT"]),
                            float(number("T")), ubox, xbox, params)
        N, nline = get("N", 200)
        if not isinstance(N, int) or isinstance(N, bool):
            raise ScenarioParseError("N must be an integer", nline)
        tcfg = TranscriptionConfig(N, get("scheme", "trapezoidal")[0])
        sopts = {}
        for key in SOLVER_KEYS & pairs.keys():
            name = key.split(".", 1)[1]
            value, line = pairs[key]
            kind = SOLVER_TYPES[name]
            if kind == "int" and not isinstance(value, int):
                raise ScenarioParseError(f"{key} must be an integer", line)
            if kind == "bool" and not isinstance(value, bool):
                raise ScenarioParseError(f"{key} must be true or false", line)
            if kind == "float":
                value = float(_number(value, key, line))
            sopts[name] = value
        solver = SolverOptions(**sopts)
    except ScenarioParseError:
        raise
    except ValueError as exc:
        raise ScenarioParseError(str(exc)) from None
    return ScenarioFile(scenario, tcfg, solver)


def parse_scenario(path) -> ScenarioFile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario_text(text)


def scenario_to_dict(sf: ScenarioFile) -> Dict[str, Any]:
    """Flat key/value view, the inverse of the parser."""
    sc = sf.scenario
    d: Dict[str, Any] = {
        "model": sc.model,
        "T": sc.T,
        "N": sf.transcription.N,
        "scheme": sf.transcription.scheme,
        "q0": list(sc.x0.q),
        "v0": list(sc.x0.v),
        "qT": list(sc.xT.q),
        "vT": list(sc.xT.v),
        "cost.w_v": list(sc.cost.w_v),
        "cost.w_u": list(sc.cost.w_u),
        "cost.scale": sc.cost.scale,
    }
    if sc.cost.v_ref is not None:
        d["cost.v_ref"] = list(sc.cost.v_ref)
    for name, value in sorted(sc.model_params.items()):
        d[f"hovercraft.{name}"] = value
    if sc.control_bounds is not None:
        d["bounds.u_lo"], d["bounds.u_hi"] = map(list, sc.control_bounds)
    if sc.state_bounds is not None:
        d["bounds.x_lo"], d["bounds.x_hi"] = map(list, sc.state_bounds)
    for name, value in sf.solver.to_dict().items():
        d[f"solver.{name}"] = value
    return d


def _fmt_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(fmt(v) for v in value) + "]"
    return fmt(value)


def serialize_scenario(sf: ScenarioFile) -> str:
    return "".join(f"{k} = {_fmt_value(v)}\n" for k, v in scenario_to_dict(sf).items())


# -- bundles ---------------------------------------------------------------
def trajectory_csv(traj: Trajectory, costates: bool = False) -> str:
    n_q, n_u = traj.q.shape[1], traj.u.shape[1]
    header = (["t"] + [f"q_{i + 1}" for i in range(n_q)] + [f"v_{i + 1}" for i in range(n_q)]
              + [f"u_{i + 1}" for i in range(n_u)])
    cols = [traj.times[:, None], traj.q, traj.v, traj.u]
    if costates:
        if traj.costates is None:
            raise ValueError("trajectory carries no costates")
        header += [f"lambda{i + 1}" for i in range(traj.costates.shape[1])]
        cols.append(traj.costates)
    table = np.hstack(cols)
    lines = [",".join(header)]
    lines += [",".join(repr(float(x) + 0.0) for x in row) for row in table]  # no "-0.0"
    return "\n".join(lines) + "\n"


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def write_text(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
