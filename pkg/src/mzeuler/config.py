"""Run configuration: defaults, presets, validation and key = value files."""

from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

MODELS = ("galerkin-full", "galerkin-resolved", "t-model", "order-0", "order-1", "order-2")
INTEGRATORS = ("modified-euler", "rk4")
INITIAL = ("taylor-green", "random")
_HIER = re.compile(r"^hierarchy-(\d+)$")


class ConfigError(ValueError):
    pass


def model_order(model: str) -> int | None:
    """Memory order of an integral model or hierarchy depth; ``None`` otherwise."""
    if model.startswith("order-"):
        return int(model.split("-")[1])
    m = _HIER.match(model)
    return int(m.group(1)) if m else None


@dataclass
class RunConfig:
    model: str = "order-0"
    n: int = 8
    m: int | None = None
    dt: float = 1e-3
    t_end: float = 100.0
    t0: float | None = 2.0
    integrator: str = "modified-euler"
    quadrature: str = "trapezoid"
    memory_mode: str = "incremental"
    project_divergence: bool = False
    record_interval: int = 100
    fit_window: tuple[float, float] = (10.0, 100.0)
    output_dir: str | None = None
    threads: int = 1
    preset: str | None = None
    initial: str = "taylor-green"
    seed: int = 0
    rebase_interval: float | None = None
    blowup_factor: float = 1e3
    max_order: int = 4
    oracles: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def m_total(self) -> int:
        return 2 * self.n if self.m is None else self.m

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def uses_memory(self) -> bool:
        return self.model.startswith("order-")

    def validate(self) -> "RunConfig":
        if self.model not in MODELS and not _HIER.match(self.model):
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODELS} "
                              "or hierarchy-<n>")
        order = model_order(self.model)
        if order is not None and order > self.max_order:
            raise ConfigError(f"model order {order} exceeds max_order={self.max_order}")
        if self.n < 2 or self.n % 2:
            raise ConfigError(f"n must be an even integer >= 2, got {self.n}")
        if self.m_total % 2 or self.m_total < 2 * self.n:
            raise ConfigError(f"m must be even and >= 2n = {2 * self.n}, got {self.m_total}")
        if self.initial == "taylor-green" and self.n < 4:
            raise ConfigError("the Taylor-Green initial condition needs n >= 4")
        if self.initial not in INITIAL:
            raise ConfigError(f"initial must be one of {INITIAL}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive and finite")
        if self.t_end < 0:
            raise ConfigError("t_end must be nonnegative")
        if abs(self.n_steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ConfigError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        if self.integrator not in INTEGRATORS:
            raise ConfigError(f"integrator must be one of {INTEGRATORS}")
        if self.quadrature not in ("trapezoid", "simpson"):
            raise ConfigError("quadrature must be trapezoid or simpson")
        if self.memory_mode not in ("incremental", "direct"):
            raise ConfigError("memory_mode must be incremental or direct")
        if self.quadrature == "simpson" and self.memory_mode != "direct":
            raise ConfigError("simpson quadrature requires memory_mode=direct")
        if self.t0 is not None:
            if self.t0 <= 0:
                raise ConfigError("t0 must be positive (or 'inf' for no truncation)")
            w = round(self.t0 / self.dt)
            if w < 1 or abs(w * self.dt - self.t0) > 1e-9 * max(1.0, self.t0):
                raise ConfigError(f"t0={self.t0} is not an integer multiple of dt={self.dt}")
        if self.record_interval < 1:
            raise ConfigError("record_interval must be >= 1")
        a, b = self.fit_window
        if not (0 < a < b):
            raise ConfigError("fit window must satisfy 0 < t_a < t_b")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.blowup_factor <= 1:
            raise ConfigError("blowup_factor must exceed 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["fit_window"] = list(self.fit_window)
        d["m"] = self.m_total
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        d = dict(d)
        if "fit_window" in d:
            d["fit_window"] = tuple(float(x) for x in d["fit_window"])
        return cls(**d)


PRESETS: dict[str, dict] = {
    "paper-order0": dict(model="order-0", n=8, dt=1e-3, t_end=100.0, t0=2.0),
    "paper-order1": dict(model="order-1", n=8, dt=1e-3, t_end=100.0, t0=2.0),
    "paper-order2": dict(model="order-2", n=8, dt=1e-3, t_end=100.0, t0=1.0),
    "paper-tmodel-8": dict(model="t-model", n=8, dt=1e-3, t_end=100.0, t0=None),
    "desk-check": dict(model="order-0", n=4, dt=1e-3, t_end=1.0, t0=2.0,
                       record_interval=10, fit_window=(0.1, 1.0), oracles=True),
}


def preset(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    values = {**PRESETS[name], **overrides, "preset": name}
    return RunConfig(**values).validate()


# -- key = value files --------------------------------------------------------------

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def coerce(key: str, raw: str):
    """Convert a textual value to the type of ``RunConfig.<key>``."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown configuration key {key!r}")
    s = raw.strip()
    if key in ("t0", "m", "output_dir", "preset", "rebase_interval") and s.lower() in (
            "none", "", "inf", "infinity"):
        if key != "t0" and s.lower() in ("inf", "infinity"):
            raise ConfigError(f"{key} cannot be infinite")
        return None
    try:
        if key in ("n", "m", "record_interval", "threads", "seed", "max_order"):
            return int(s)
        if key in ("dt", "t_end", "t0", "blowup_factor", "rebase_interval"):
            return float(s)
        if key in ("project_divergence", "oracles"):
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if key == "fit_window":
            a, b = (float(x) for x in s.replace(",", " ").split())
            return (a, b)
        if key == "extra":
            return json.loads(s)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return s


def read_config_file(path: str | Path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = coerce(key, val)
    return values


def write_config_file(config: RunConfig, path: str | Path) -> None:
    lines = []
    for k, v in config.to_dict().items():
        if k == "extra" and not v:
            continue
        if isinstance(v, (list, tuple)):
            v = " ".join(repr(x) for x in v)
        elif isinstance(v, dict):
            v = json.dumps(v)
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")
