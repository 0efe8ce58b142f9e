"""Run configuration files.

The format is one ``section.key = value`` entry per line. Blank lines and
text after ``#`` are ignored, and a later entry overrides an earlier
one. Lists are comma separated. Recognised keys and their defaults are in
:data:`DEFAULTS`; an unknown key is an error so that typos do not pass silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

DEFAULTS = {
    "data.path": "",
    "split.train_end": 0,
    "split.validation_days": (),
    "split.test_days": (),
    "basis.kind": "thinplate",
    "basis.region_knots": 10,
    "basis.shared_knots": 25,
    "basis.r": 500,
    "basis.neighbours": 10,
    "chain.iterations": 2000,
    "chain.burn_in": 1000,
    "chain.thin": 1,
    "chain.chains": 1,
    "chain.seed": 0,
    "link.mode": "identity",
    "link.min_observations": 10,
    "output.dir": "hgt-out",
    "sim.I": 1000,
    "sim.I1": 350,
    "sim.I2": 350,
    "sim.I3": 200,
    "sim.trials": 300,
    "sim.replicates": 20,
    "sim.hide_x2": True,
    "sim.methods": ("hgt-sme", "saturated"),
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _convert(key, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, tuple):
            items = tuple(s.strip() for s in raw.split(",") if s.strip())
            return tuple(int(s) for s in items) if key.startswith("split.") else items
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, raw):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        self.values[key] = _convert(key, raw, DEFAULTS[key]) if isinstance(raw, str) else raw

    @classmethod
    def parse(cls, text: str, source="<config>") -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
            try:
                cfg.set(key.strip(), value)
            except ConfigError as exc:
                raise ConfigError(f"{source}:{lineno}: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        return cls.parse(path.read_text(), str(path))

    def validate(self):
        if self["chain.iterations"] <= self["chain.burn_in"]:
            raise ConfigError("chain.iterations must exceed chain.burn_in")
        if self["basis.r"] < 1:
            raise ConfigError("basis.r must be at least 1")
        if self["basis.kind"] not in ("thinplate", "moran"):
            raise ConfigError("basis.kind must be thinplate or moran")
        if self["link.mode"] not in ("identity", "linear"):
            raise ConfigError("link.mode must be identity or linear")
        val, test = self["split.validation_days"], self["split.test_days"]
        end = self["split.train_end"]
        if val and min(val) <= end or test and min(test) <= max([end, *val]):
            raise ConfigError("split days must be ordered: train < validation < test")
        return self
