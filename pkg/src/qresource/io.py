"""JSON encodings of matrices, states, channels, tuples and free sets."""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .linalg import ValidationError, as_matrix, require_hermitian
from .quantum import ChoiChannel, density_matrix

FLOAT_DIGITS = 9


def _round(v: float) -> float | str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    r = round(float(v), FLOAT_DIGITS)
    return 0.0 if r == 0 else r


def _exact(obj: Any) -> Any:
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_exact(v) for v in obj]
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return int(obj)
    return float(obj)


def clean(obj: Any) -> Any:
    """Round floats to fixed precision and convert numpy scalars for stable JSON.

    Matrix payloads (``{"dim", "re", "im"}``) keep full precision so written
    objects reload exactly.
    """
    if isinstance(obj, dict):
        if set(obj) == {"dim", "re", "im"}:
            return {"dim": int(obj["dim"]), "re": _exact(obj["re"]), "im": _exact(obj["im"])}
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    return obj


def dumps(obj: Any) -> str:
    """Deterministic JSON text (sorted keys, rounded floats)."""
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"dim": int(m.shape[0]), "re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_json(doc: dict, hermitian: bool = True, where: str = "matrix") -> np.ndarray:
    if not isinstance(doc, dict) or "re" not in doc:
        raise ValidationError(f"{where}: expected an object with 're' (and optional 'im', 'dim')")
    try:
        re = np.asarray(doc["re"], dtype=float)
        im = np.asarray(doc.get("im", np.zeros_like(re)), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: entries must be numbers ({exc})") from exc
    if re.ndim != 2 or re.shape != im.shape:
        raise ValidationError(f"{where}: 're' and 'im' must be equally shaped 2-d arrays")
    m = re + 1j * im
    if "dim" in doc and int(doc["dim"]) != m.shape[0]:
        raise ValidationError(f"{where}: 'dim' {doc['dim']} does not match {m.shape[0]} rows")
    if hermitian:
        require_hermitian(m, 1e-12, where)
    return as_matrix(m)


def state_to_json(rho: np.ndarray) -> dict:
    return {"dim": int(rho.shape[0]), "rho": matrix_to_json(rho)}


def state_from_json(doc: dict, where: str = "state") -> np.ndarray:
    if "rho" not in doc:
        raise ValidationError(f"{where}: missing field 'rho'")
    rho = matrix_from_json(doc["rho"], True, f"{where}.rho")
    if "dim" in doc and int(doc["dim"]) != rho.shape[0]:
        raise ValidationError(f"{where}: 'dim' does not match rho")
    return density_matrix(rho)


def channel_to_json(ch: ChoiChannel) -> dict:
    return {"dim_in": ch.dim_in, "dim_out": ch.dim_out, "choi": matrix_to_json(ch.choi)}


def channel_from_json(doc: dict, where: str = "channel") -> ChoiChannel:
    for key in ("dim_in", "dim_out", "choi"):
        if key not in doc:
            raise ValidationError(f"{where}: missing field '{key}'")
    return ChoiChannel(int(doc["dim_in"]), int(doc["dim_out"]), matrix_from_json(doc["choi"], True, f"{where}.choi"))


def object_to_json(x) -> dict:
    if isinstance(x, (list, tuple)):
        return {"components": [object_to_json(c) for c in x]}
    if isinstance(x, ChoiChannel):
        return channel_to_json(x)
    return state_to_json(np.asarray(x))


def object_from_json(doc: dict, where: str = "object"):
    """State, channel or tuple ``{"components": [...]}``."""
    if not isinstance(doc, dict):
        raise ValidationError(f"{where}: expected a JSON object")
    if "components" in doc:
        comps = doc["components"]
        if not isinstance(comps, list) or not comps:
            raise ValidationError(f"{where}.components: expected a non-empty list")
        return [object_from_json(c, f"{where}.components[{i}]") for i, c in enumerate(comps)]
    if "choi" in doc:
        return channel_from_json(doc, where)
    if "rho" in doc:
        return state_from_json(doc, where)
    if "generator" in doc:
        return generated_object(doc, where)
    raise ValidationError(
        f"{where}: expected 'rho' (state), 'choi' (channel), 'components' (tuple) or 'generator'"
    )


GENERATORS = {
    "coherent": {"cutoff", "param"},
    "two_mode_squeezed": {"cutoff", "param"},
    "depolarizing": {"dim", "eta", "copies"},
    "bell": {"dim"},
    "plus": {"dim"},
    "maximally_mixed": {"dim"},
}


def _complex_param(v, where: str) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    raise ValidationError(f"{where}.param: expected a number or [re, im]")


def generated_object(doc: dict, where: str = "object"):
    """Objects given by generator parameters, e.g. ``{"generator": "coherent", "cutoff": 8, "param": 1}``."""
    from . import quantum as q

    gen = doc["generator"]
    if gen not in GENERATORS:
        raise ValidationError(f"{where}.generator: unknown generator {gen!r} (known: {sorted(GENERATORS)})")
    extra = set(doc) - GENERATORS[gen] - {"generator"}
    if extra:
        raise ValidationError(f"{where}: unknown field(s) {sorted(extra)} for generator {gen!r}")
    try:
        if gen in ("coherent", "two_mode_squeezed"):
            return q.truncated_cv_state(gen, int(doc.get("cutoff", 8)), _complex_param(doc.get("param", 0.0), where))
        dim = int(doc.get("dim", 2))
        if gen == "bell":
            return q.bell_state(dim)
        if gen == "plus":
            return q.plus_state(dim)
        if gen == "maximally_mixed":
            return q.maximally_mixed(dim)
        if "eta" not in doc:
            raise ValidationError(f"{where}: depolarizing generator needs 'eta'")
        ch = q.depolarizing_channel(dim, float(doc["eta"]))
        copies = int(doc.get("copies", 1))
        return [ch] * copies if copies > 1 else ch
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{where}: malformed generator parameters ({exc})") from exc


def freeset_from_json(doc: dict, where: str = "free_set"):
    from . import freesets as fs

    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValidationError(f"{where}: expected an object with a 'kind' field")
    kind = doc["kind"]
    allowed = {
        "incoherent": {"dim"},
        "ppt_separable": {"dims"},
        "group_symmetric": {"dim", "generators"},
        "entanglement_breaking_ppt": {"dim_in", "dim_out"},
        "compatible_tuple": {"dim_in", "dims_out"},
        "marginal_compatible": {"shared", "envs"},
    }
    if kind not in allowed:
        raise ValidationError(f"{where}.kind: unknown free-set kind {kind!r}")
    extra = set(doc) - allowed[kind] - {"kind"}
    if extra:
        raise ValidationError(f"{where}: unknown field(s) {sorted(extra)} for kind {kind!r}")
    missing = allowed[kind] - set(doc) - ({"dim"} if kind == "group_symmetric" else set())
    if missing:
        raise ValidationError(f"{where}: missing field(s) {sorted(missing)}")
    try:
        if kind == "incoherent":
            return fs.Incoherent(int(doc["dim"]))
        if kind == "ppt_separable":
            da, db = (int(v) for v in doc["dims"])
            return fs.PptSeparable(da, db)
        if kind == "group_symmetric":
            gens = tuple(matrix_from_json(g, False, f"{where}.generators[{i}]")
                         for i, g in enumerate(doc["generators"]))
            out = fs.GroupSymmetric(gens)
            if "dim" in doc and int(doc["dim"]) != out.dim:
                raise ValidationError(f"{where}.dim does not match the generators")
            return out
        if kind == "entanglement_breaking_ppt":
            return fs.EntanglementBreakingPpt(int(doc["dim_in"]), int(doc["dim_out"]))
        if kind == "compatible_tuple":
            return fs.CompatibleTuple(int(doc["dim_in"]), tuple(int(d) for d in doc["dims_out"]))
        return fs.MarginalCompatible(int(doc["shared"]), tuple(int(d) for d in doc["envs"]))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{where}: malformed parameters ({exc})") from exc


def load_json(path: str) -> Any:
    """Read JSON, turning syntax errors into :class:`ValidationError` with a line number."""
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read file ({exc.strerror})") from exc
