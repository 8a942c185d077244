"""Run configuration and its flat ``key = value`` text format.

Grammar, one setting per line::

    # comment                    (also allowed after a value)
    key = value
    thetas_deg = 30, 32.5, 45    (lists are comma separated)
    infinite_sample = true       (booleans: true/false, yes/no, 1/0)
    input_dir = none             (``none`` clears an optional value)

Keys are the field names of :class:`RunConfig`.  Unknown keys, repeated keys
and unparsable values are validation errors.  Command-line flags override
file values, and every report embeds the fully resolved configuration.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass

from .errors import DomainError, ValidationError

TABLE_THETAS = (30.0, 32.5, 35.0, 37.5, 40.0, 42.5, 45.0)
DEFAULT_EPS_GRID = tuple(round(0.02 * k, 2) for k in range(10))


@dataclass(frozen=True)
class RunConfig:
    mode: str = "simulate"
    thetas_deg: tuple[float, ...] = TABLE_THETAS
    trials_per_setting: int = 500
    counting_mode: str = "multinomial"
    infinite_sample: bool = False
    depolarizing_p: float = 1.0
    offsets_a_deg: tuple[float, ...] = (0.0, 0.0)
    offsets_b_deg: tuple[float, ...] = (0.0, 0.0)
    xi_deg: float = 0.0
    seed: int = 0
    tol: float = 1e-7
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID
    robust_curves: bool = True
    aggregate_min_theta_deg: float = 35.0
    out_dir: str = "swapcert-out"
    input_dir: typing.Optional[str] = None
    workers: int = 1

    def __post_init__(self):
        if self.mode not in ("simulate", "ingest"):
            raise ValidationError(f"mode must be simulate or ingest, got {self.mode!r}")
        if self.mode == "simulate" and not self.thetas_deg:
            raise ValidationError("thetas_deg is empty")
        for t in self.thetas_deg:
            if not (0 < t <= 45):
                raise DomainError(f"theta {t} deg outside (0, 45]")
        if len(set(self.thetas_deg)) != len(self.thetas_deg):
            raise ValidationError("thetas_deg has duplicates")
        if self.trials_per_setting < 1:
            raise ValidationError("trials_per_setting must be at least 1")
        if self.counting_mode not in ("multinomial", "poisson"):
            raise ValidationError(f"unknown counting mode {self.counting_mode!r}")
        if not 0 <= self.depolarizing_p <= 1:
            raise DomainError("depolarizing_p must lie in [0, 1]")
        if len(self.offsets_a_deg) != 2 or len(self.offsets_b_deg) != 2:
            raise ValidationError("offsets need one value per setting (2)")
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ValidationError("tol must be positive")
        if any(e < 0 for e in self.eps_grid):
            raise DomainError("eps_grid values must be nonnegative")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")
        if self.mode == "ingest" and not self.input_dir:
            raise ValidationError("ingest mode needs input_dir")

    def as_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f in dataclasses.fields(self) for v in [getattr(self, f.name)]}

    def to_text(self) -> str:
        lines = []
        for key, value in self.as_dict().items():
            lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(_format(v) for v in value)
    return str(value)


_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def _convert(key: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == typing.Optional[str]:
            return None if raw.lower() == "none" else raw
        if kind == tuple[float, ...]:
            return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r}") from None
    raise ValidationError(f"config key {key!r} has an unsupported type")


def _field_types() -> dict:
    hints = typing.get_type_hints(RunConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(RunConfig)}


def parse_config(text: str) -> dict:
    """Parse config text into a dict of typed overrides (no defaults filled in)."""
    types = _field_types()
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValidationError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in types:
            raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValidationError(f"config line {lineno}: key {key!r} repeated")
        out[key] = _convert(key, types[key], raw)
    return out


def coerce_overrides(overrides: dict) -> dict:
    """Convert string-valued overrides (e.g. from CLI flags) to field types."""
    types = _field_types()
    out = {}
    for key, value in overrides.items():
        if key not in types:
            raise ValidationError(f"unknown config key {key!r}")
        out[key] = _convert(key, types[key], value) if isinstance(value, str) else value
    return out


def resolve_config(text: str | None = None, overrides: dict | None = None) -> RunConfig:
    values = parse_config(text) if text else {}
    values.update(coerce_overrides(overrides or {}))
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    text = None
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return resolve_config(text, overrides)
