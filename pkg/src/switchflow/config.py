"""Run configuration: a TOML file (JSON also accepted), schema version 1.

See ``docs/config.md`` for the full schema.  Validation errors carry the
dotted path of the offending key, e.g. ``system.fields[1]``.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .expr import FieldExpr, ParseError, parse_field
from .flow import IntegratorOptions, Manifold
from .lie import periodicity_defect
from .pdmp import ModelError, SwitchingSystem

SCHEMA_VERSION = 1
PERIODICITY_TOL = 1e-9


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class RunConfig:
    raw: dict
    source: str
    digest: str
    system: SwitchingSystem
    options: IntegratorOptions
    seed: int

    @property
    def manifold(self) -> Manifold:
        return self.system.manifold

    @property
    def fields(self) -> tuple[FieldExpr, ...]:
        return self.system.fields

    def section(self, name: str) -> dict:
        sec = self.raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(name, "must be a table")
        return sec


def _get(sec: dict, key: str, path: str, kind=None, default: Any = ..., check=None):
    if key not in sec:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required key")
        return default
    val = sec[key]
    where = f"{path}.{key}" if path else key
    if kind is not None:
        try:
            val = kind(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(where, f"invalid value {sec[key]!r} ({exc})") from None
    if check is not None:
        msg = check(val)
        if msg:
            raise ConfigError(where, msg)
    return val


def _positive(v):
    return None if v > 0 else "must be positive"


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _param(v):
    """Parameters are numbers or exact rationals written as strings, e.g. "8/3"."""
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, int) and not isinstance(v, bool):
        return Fraction(v)
    return _float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def vector(n: int):
    def conv(v):
        a = np.asarray(v, dtype=float)
        if a.shape != (n,):
            raise ValueError(f"expected {n} numbers")
        return a
    return conv


def box_of(n: int):
    def conv(v):
        a = np.asarray(v, dtype=float)
        if a.shape != (n, 2):
            raise ValueError(f"expected {n} [lo, hi] pairs")
        if np.any(a[:, 1] <= a[:, 0]):
            raise ValueError("each hi must exceed lo")
        return a
    return conv


def points_of(n: int):
    def conv(v):
        a = np.asarray(v, dtype=float)
        if a.ndim != 2 or a.shape[1] != n:
            raise ValueError(f"expected a list of {n}-dimensional points")
        return a
    return conv


def parse_text(text: str) -> dict:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc}") from None
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"invalid config syntax: {exc}") from None


def build_system(raw: dict) -> SwitchingSystem:
    sec = raw.get("system")
    if not isinstance(sec, dict):
        raise ConfigError("system", "missing or not a table")
    kind = _get(sec, "manifold", "system", str,
                check=lambda v: None if v in ("torus", "euclidean") else
                "must be 'torus' or 'euclidean'")
    n = _get(sec, "dim", "system", _int, check=_positive)
    params = sec.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("system.params", "must be a table of name = number")
    params = {name: _get(params, name, "system.params", _param) for name in params}
    texts = _get(sec, "fields", "system", list,
                 check=lambda v: None if v else "need at least one field")
    fields = []
    for j, text in enumerate(texts):
        if not isinstance(text, str):
            raise ConfigError(f"system.fields[{j}]", "must be a string")
        try:
            fields.append(parse_field(text, n, params))
        except (ParseError, ValueError) as exc:
            raise ConfigError(f"system.fields[{j}]", str(exc)) from None
    k = len(fields)
    manifold = Manifold(kind, n)
    rates = sec.get("rates", 1.0)
    if isinstance(rates, (int, float)) and not isinstance(rates, bool):
        rates = [float(rates)] * k
    rates = _get({"rates": rates}, "rates", "system", vector(k))
    if "jump" in sec:
        jump = _get(sec, "jump", "system", lambda v: np.asarray(v, dtype=float))
    else:
        jump = (np.ones((k, k)) - np.eye(k)) / max(k - 1, 1)
    try:
        system = SwitchingSystem(manifold, tuple(fields), rates, jump)
    except ModelError as exc:
        raise ConfigError("system", str(exc)) from None
    if manifold.is_torus:
        for j, f in enumerate(fields):
            defect = periodicity_defect(f)
            if defect > PERIODICITY_TOL:
                warnings.warn(f"system.fields[{j}] is not 1-periodic (defect {defect:.3g} on a "
                              f"5^{n} grid); torus results will be wrong", RuntimeWarning)
    return system


def build_options(raw: dict) -> IntegratorOptions:
    sec = raw.get("integrator", {})
    if not isinstance(sec, dict):
        raise ConfigError("integrator", "must be a table")
    kw = {}
    if "method" in sec:
        kw["method"] = _get(sec, "method", "integrator", str,
                            check=lambda v: None if v in ("rk45", "rk4") else
                            "must be 'rk45' or 'rk4'")
    for key in ("abs_tol", "rel_tol", "max_step", "dt"):
        if key in sec:
            kw[key] = _get(sec, key, "integrator", _float, check=_positive)
    return IntegratorOptions(**kw)


def load_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    return config_from_text(data.decode("utf-8"), str(path), seed_override)


def config_from_text(text: str, source: str = "<string>",
                     seed_override: int | None = None) -> RunConfig:
    raw = parse_text(text)
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version!r}")
    seed = raw.get("seed", 0) if seed_override is None else seed_override
    seed = _get({"seed": seed}, "seed", "", _int,
                check=lambda v: None if v >= 0 else "must be nonnegative")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return RunConfig(raw, source, digest, build_system(raw), build_options(raw), seed)
