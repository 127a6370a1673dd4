"""File formats for the command line: schema-checked JSON and numeric CSV.

JSON output is deterministic (sorted keys, fixed indentation, ``repr``
floats) so that identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

__all__ = [
    "SCHEMAS",
    "ConfigError",
    "validate",
    "read_json",
    "write_json",
    "dumps",
    "read_csv",
    "write_csv",
    "write_rows_csv",
]


class ConfigError(ValueError):
    """Malformed input file; the message names the offending path."""


_num = {"type": "number"}
_int = {"type": "integer"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}
_vec_or_mat = {"oneOf": [_vec, _mat]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_scheme_obj = {
    "oneOf": [
        _obj({"kind": {"const": "quadrature"}, "nodes_per_dim": _int}, ["kind"]),
        _obj({"kind": {"const": "monte_carlo"}, "samples": _int, "seed": _int}, ["kind"]),
        {"type": "null"},
    ]
}

_features = {
    "oneOf": [
        _obj({"kind": {"const": "polynomial"}, "degree": _int, "input_dim": _int}, ["kind", "degree"]),
        _obj(
            {"kind": {"const": "cosine"}, "frequencies": _mat, "phases": _vec, "scale": {"type": ["number", "null"]}},
            ["kind", "frequencies", "phases"],
        ),
        _obj(
            {"kind": {"const": "relu"}, "weights": _mat, "biases": _vec, "scale": {"type": ["number", "null"]}},
            ["kind", "weights", "biases"],
        ),
        _obj({"kind": {"const": "tabulated"}, "grid": _vec, "values": _mat}, ["kind", "grid", "values"]),
    ]
}

_measure = {
    "oneOf": [
        _obj({"kind": {"const": "box_lebesgue"}, "lower": _vec, "upper": _vec}, ["kind", "lower", "upper"]),
        _obj({"kind": {"const": "gaussian"}, "mean": _vec, "covariance": _mat}, ["kind", "mean", "covariance"]),
        _obj({"kind": {"const": "discrete"}, "points": _vec_or_mat, "weights": _vec}, ["kind", "points", "weights"]),
    ]
}

_kernel = _obj(
    {"matrix": _mat, "scheme": _scheme_obj, "error_estimate": _num, "min_eigenvalue": _num},
    ["matrix"],
)

_gspec = {
    "oneOf": [
        _obj({"kind": {"const": "exponential"}}, ["kind"]),
        _obj({"kind": {"enum": ["monomial", "pos_homogeneous"]}, "k": _num, "c": _num}, ["kind", "k"]),
    ]
}

_model = _obj(
    {
        "features": _features,
        "measure": _measure,
        "theta": _vec_or_mat,
        "kernel": {"oneOf": [{"type": "string"}, _kernel]},
        "scheme": {"type": "string"},
    },
    ["features", "measure"],
)

_fit_props = {
    "epsilon": _num,
    "R": _num,
    "sigma": _num,
    "max_iters": _int,
    "grad_tol": _num,
    "init": {"enum": ["canonical_e1", "supplied", "multistart"]},
    "theta0": _vec,
    "starts": _int,
    "init_seed": _int,
}
_fit = _obj({**_fit_props, "seed": _int})
_fit_cfg = _obj(_fit_props)

_target = _obj(
    {
        "kind": {"const": "truncated_gaussian_mixture"},
        "weights": _vec,
        "means": _vec,
        "sds": _vec,
        "lower": _num,
        "upper": _num,
    },
    ["kind", "weights", "means", "sds"],
)

_int_list = {"type": "array", "items": _int, "minItems": 1}

SCHEMAS: dict[str, dict] = {
    "model": _model,
    "kernel": _kernel,
    "gspec": _gspec,
    "fit": _fit,
    "target": _target,
    "sim_normality": _obj(
        {"seed": _int, "N_list": _int_list, "reps": _int, "model": _model, "fit": _fit_cfg}, ["seed"]
    ),
    "sim_misspec": _obj(
        {
            "seed": _int,
            "N_list": _int_list,
            "reps": _int,
            "target": _target,
            "model": _model,
            "fit": _fit_cfg,
            "grid_nodes": _int,
        },
        ["seed"],
    ),
    "sim_approx": _obj(
        {
            "target": _target,
            "n_list": _int_list,
            "feature_seeds": _int_list,
            "bandwidth": _num,
            "grid_nodes": _int,
            "fit": _fit_cfg,
        }
    ),
    "sim_suite": _obj(
        {"seed": _int, "suites": {"type": "array", "items": {"type": "string"}, "minItems": 1}}, ["seed"]
    ),
}


def _path(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


def _deepest(err: jsonschema.ValidationError) -> jsonschema.ValidationError:
    # oneOf failures hide the useful message in the closest matching branch
    return jsonschema.exceptions.best_match([err]) if not err.context else _deepest(
        jsonschema.exceptions.best_match(err.context)
    )


def validate(doc, schema: str, source: str = "<input>") -> None:
    """Check ``doc`` against ``SCHEMAS[schema]``; raise ``ConfigError`` naming the path."""
    try:
        jsonschema.validate(doc, SCHEMAS[schema])
    except jsonschema.ValidationError as exc:
        err = _deepest(exc)
        raise ConfigError(f"{source}: {_path(err)}: {err.message}") from None


def read_json(path, schema: str | None = None):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if schema is not None:
        validate(doc, schema, str(path))
    return doc


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text; non-finite floats become the strings ``inf``/``nan``."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(obj, path) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(dumps(obj))
    else:
        Path(path).write_text(dumps(obj))


def _is_numeric(row) -> bool:
    try:
        [float(c) for c in row]
    except ValueError:
        return False
    return True


def read_csv(path) -> tuple[np.ndarray, list[str] | None]:
    """Read a comma-separated numeric table; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    header = None
    if not _is_numeric(rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    width = len(rows[0]) if rows else 0
    for i, r in enumerate(rows):
        if len(r) != width or not _is_numeric(r):
            raise ConfigError(f"{path}: row {i + (2 if header else 1)} is not a numeric row of width {width}")
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    return np.array([[float(c) for c in r] for r in rows]), header


def write_csv(array, path, header=None) -> None:
    A = np.atleast_2d(np.asarray(array, dtype=float))
    if A.shape[0] == 1 and np.ndim(array) == 1:
        A = A.T
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in A:
        w.writerow([repr(float(v)) for v in row])
    if path is None or str(path) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue())


def write_rows_csv(rows: list[dict], path) -> None:
    """One CSV line per record; columns are the union of keys in first-seen order."""
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r.get(c) is None else _cell(r[c]) for c in cols])
    Path(path).write_text(buf.getvalue())


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
