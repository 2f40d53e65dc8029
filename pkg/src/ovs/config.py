"""Run configuration: defaults, TOML loading and overrides."""

from __future__ import annotations

import os
import re
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError, ParseError, UnknownKey

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class AffinityConfig:
    radius: int = 4
    sigma_color: float = 0.1
    sigma_edge: float = 0.2


@dataclass(frozen=True)
class PropagationConfig:
    lambda_cap: float = 0.99
    max_sweeps: int = 200
    tolerance_px: float = 0.01
    anchor_ratio: float = 0.9


@dataclass(frozen=True)
class CanvasConfig:
    pad: int | None = None  # None: width / 8


@dataclass(frozen=True)
class CoarseConfig:
    grid_rows: int = 16
    grid_cols: int = 16
    max_points: int = 1000


@dataclass(frozen=True)
class ExpandConfig:
    iterations: int = 10
    mode: str = "full"


@dataclass(frozen=True)
class FlowConfig:
    estimator: str = "baseline"


@dataclass(frozen=True)
class StabilizerConfig:
    window: int = 31
    fill: str = "none"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    threads: int = 0


MODES = ("coarse_only", "fine_only", "full", "global")
FILLS = ("none", "nearest")


@dataclass(frozen=True)
class Config:
    affinity: AffinityConfig = field(default_factory=AffinityConfig)
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    canvas: CanvasConfig = field(default_factory=CanvasConfig)
    coarse: CoarseConfig = field(default_factory=CoarseConfig)
    expand: ExpandConfig = field(default_factory=ExpandConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    stabilizer: StabilizerConfig = field(default_factory=StabilizerConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if self.affinity.radius < 1:
            raise ConfigError("affinity.radius must be at least 1")
        if not 0 < self.propagation.lambda_cap < 1:
            raise ConfigError("propagation.lambda_cap must lie in (0, 1)")
        if not 0 <= self.propagation.anchor_ratio <= 1:
            raise ConfigError("propagation.anchor_ratio must lie in [0, 1]")
        if self.propagation.max_sweeps < 0:
            raise ConfigError("propagation.max_sweeps must be non-negative")
        if self.expand.iterations < 0:
            raise ConfigError("expand.iterations must be non-negative")
        if self.expand.mode not in MODES:
            raise ConfigError(f"expand.mode must be one of {', '.join(MODES)}")
        if self.stabilizer.fill not in FILLS:
            raise ConfigError("stabilizer.fill must be none or nearest")
        w = self.stabilizer.window
        if w < 3 or w % 2 == 0:
            raise ConfigError("stabilizer.window must be odd and at least 3")
        if self.canvas.pad is not None and self.canvas.pad < 0:
            raise ConfigError("canvas.pad must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)

    def flat(self) -> dict:
        return {f"{s}.{k}": v for s, sec in self.as_dict().items() for k, v in sec.items()}

    def with_overrides(self, values: dict) -> "Config":
        """Apply ``{"section.key": value}`` overrides; ``None`` values are ignored."""
        sections = {f.name: getattr(self, f.name) for f in fields(self)}
        for dotted, value in values.items():
            if value is None:
                continue
            section, key = _split(dotted)
            sec = sections[section]
            sections[section] = replace(sec, **{key: _coerce(sec, key, value, dotted)})
        return Config(**sections)

    def pad_for(self, width: int) -> int:
        from .core import default_pad

        return default_pad(width) if self.canvas.pad is None else self.canvas.pad


def _split(dotted):
    section, _, key = dotted.partition(".")
    sec = {f.name: f for f in fields(Config)}.get(section)
    if sec is None or not key or key not in {f.name for f in fields(sec.default_factory)}:
        raise UnknownKey(f"unknown configuration key {dotted!r}")
    return section, key


def _coerce(sec, key, value, dotted):
    current = getattr(sec, key)
    ftype = {f.name: f.type for f in fields(sec)}[key]
    try:
        if "int" in str(ftype) and not isinstance(value, bool):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if "float" in str(ftype) and not isinstance(value, bool):
            return float(value)
        if isinstance(current, str) or "str" in str(ftype):
            if not isinstance(value, str):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for {dotted}") from None
    return value


def _flatten(table, prefix=""):
    out = {}
    for k, v in table.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


def parse_config(text: str) -> Config:
    """Parse TOML text (sections or dotted keys) into a Config."""
    try:
        table = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc), int(m.group(1)) if m else None) from None
    return Config().with_overrides(_flatten(table))


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def thread_cap() -> int:
    """Worker count from OVS_THREADS (0 or unset means one per CPU)."""
    raw = os.environ.get("OVS_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"OVS_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("OVS_THREADS must be non-negative")
    return n or (os.cpu_count() or 1)
