"""Run configuration: flat ``key = value`` text with typed fields.

Resolution order is defaults, then a config file, then command-line
overrides.  ``RunConfig.parse(cfg.emit()) == cfg`` for every valid config.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .params import ParameterError, SlowdownParams


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


PARAM_KEYS = ("alpha", "mu", "r0", "chart_radius", "exploratory", "rtol", "atol")
MODES = ("approx", "exact")


@dataclass(frozen=True)
class RunConfig:
    # model parameters
    alpha: float = 0.2
    mu: float = 0.4
    r0: float = 1.5e-4
    chart_radius: float = 0.22
    exploratory: bool = False
    rtol: float = 1e-12
    atol: float = 1e-14
    # experiment
    experiment: str = ""
    seed: int = 0
    mode: str = "approx"
    samples: int = 10_000
    steps: int = 10_000
    orbit_length: int = 1 << 20
    replicas: int = 8
    max_lag: int = 1024
    count: int = 200
    n_min: float = 100.0
    n_max: float = 10_000.0
    n_cap: int = 100_000
    eps: float = 0.05
    output: str = "out"

    # -- text round trip ----------------------------------------------------
    def emit(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        values = {}
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {no}: expected 'key = value', got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
        return (base or cls()).with_values(values)

    def with_values(self, values: dict) -> "RunConfig":
        """Copy with ``values`` (strings or typed) applied and validated."""
        types = {f.name: f.type for f in fields(self)}
        changes = {}
        for key, val in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, val, types[key])
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    # -- checks -------------------------------------------------------------
    def validate(self) -> None:
        positive_ints = ("samples", "steps", "orbit_length", "replicas", "max_lag", "count",
                         "n_cap")
        for key in positive_ints:
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(self, key)}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if not 0 < self.n_min < self.n_max:
            raise ConfigError("need 0 < n_min < n_max")
        try:
            self.params().validate()
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc

    def params(self) -> SlowdownParams:
        return SlowdownParams(**{k: getattr(self, k) for k in PARAM_KEYS})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key, val, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    if not isinstance(val, str):
        val = _format(val)
    try:
        if typ == "bool":
            low = val.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return low in ("true", "1", "yes")
        if typ == "int":
            try:
                return int(val)
            except ValueError:
                f = float(val)  # accept "1e6"
                if f != int(f):
                    raise
                return int(f)
        if typ == "float":
            return float(val)
        return val
    except ValueError:
        raise ConfigError(f"{key}: cannot read {val!r} as {typ}") from None


def load(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides``."""
    cfg = RunConfig()
    if path:
        try:
            with open(path) as fh:
                cfg = RunConfig.parse(fh.read(), cfg)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    if overrides:
        cfg = cfg.with_values(overrides)
    return cfg


__all__ = ["ConfigError", "RunConfig", "load"]
