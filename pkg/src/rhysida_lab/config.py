"""Lab configuration: flat ``key=value`` text.

Precedence is command-line flags, then the config file, then defaults.
The default file location can be moved with ``RHYSIDA_LAB_CONFIG``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .csprng import Arch, EntropyStrategy

CONFIG_ENV = "RHYSIDA_LAB_CONFIG"
ORACLE_MODES = ("known", "magic", "entropy")


def default_config_path() -> Path:
    env = os.environ.get(CONFIG_ENV)
    if env:
        return Path(env)
    return Path.home() / ".config" / "rhysida-lab" / "lab.conf"


@dataclass(frozen=True)
class LabConfig:
    processors: int | None = None  # None: take it from the manifest
    arch: Arch = Arch.X64
    stack_capacity: int = 16
    tick_us: int = 1
    clock_hz: int = 6_000_000_000
    key_schedule_cycles: int = 1400
    cycles_per_byte: int = 18
    window_span: int = 86_400
    interleave_seed: int = 0
    start_delay_us: int = 250_000
    jobs: int = 1
    oracle: str = "magic"
    entropy_threshold: float = 7.2
    entropy_strategy: EntropyStrategy = EntropyStrategy.LOW_BYTE
    known_dir: str | None = None
    magic_table: str | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("interleave_seed", "start_delay_us"):
                if v < 0:
                    raise ValueError(f"{f.name} must be non-negative")
            elif isinstance(v, (int, float)) and not isinstance(v, bool) and v <= 0:
                raise ValueError(f"{f.name} must be positive")
        if self.oracle not in ORACLE_MODES:
            raise ValueError(f"oracle must be one of {ORACLE_MODES}")

    def replace(self, **changes) -> "LabConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


def _parse_value(name: str, raw: str):
    if name == "arch":
        return Arch.parse(raw)
    if name == "entropy_strategy":
        return EntropyStrategy.parse(raw)
    if name == "entropy_threshold":
        return float(raw)
    if name in ("oracle", "known_dir", "magic_table"):
        return raw
    return int(raw)


def _format_value(value) -> str:
    if isinstance(value, (Arch, EntropyStrategy)):
        return value.value
    return repr(value) if isinstance(value, float) else str(value)


def serialize(config: LabConfig) -> str:
    lines = ["# rhysida-lab configuration"]
    for f in fields(config):
        v = getattr(config, f.name)
        if v is not None:
            lines.append(f"{f.name}={_format_value(v)}")
    return "\n".join(lines) + "\n"


def parse(text: str, base: LabConfig = LabConfig()) -> LabConfig:
    names = {f.name for f in fields(LabConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in names:
            raise ValueError(f"config line {lineno}: unknown setting {line!r}")
        values[key] = _parse_value(key, value.strip())
    return dataclasses.replace(base, **values)


def load(path: str | os.PathLike | None = None) -> LabConfig:
    """Read the config file, or return defaults when none exists at the default path."""
    explicit = path is not None
    p = Path(path) if explicit else default_config_path()
    if not p.exists():
        if explicit:
            raise FileNotFoundError(f"config file {p} not found")
        return LabConfig()
    return parse(p.read_text())
