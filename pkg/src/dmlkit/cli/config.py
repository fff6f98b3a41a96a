"""Flat key-value run configuration.

The config grammar is one ``key = value`` pair per line, ``#`` starts a
comment, and list-valued keys use commas. The format is deliberately
code-free so a config file hashes to stable provenance.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..errors import ConfigError

ESTIMANDS = (
    "plm", "ate", "atet", "gate", "pliv", "late",
    "did_panel", "did_rcs", "did_canonical", "rct", "rdd",
    "cate-pipeline", "sensitivity", "weak_id",
)

# Column roles each estimand requires beyond outcome/treatment.
REQUIRED_ROLES = {
    "plm": ("outcome", "treatment", "controls"),
    "ate": ("outcome", "treatment", "controls"),
    "atet": ("outcome", "treatment", "controls"),
    "gate": ("outcome", "treatment", "controls", "group"),
    "pliv": ("outcome", "treatment", "instrument", "controls"),
    "late": ("outcome", "treatment", "instrument", "controls"),
    "did_panel": ("outcome", "outcome_pre", "treatment", "controls"),
    "did_rcs": ("outcome", "treatment", "time"),
    "did_canonical": ("outcome", "treatment", "time"),
    "rct": ("outcome", "treatment"),
    "rdd": ("outcome", "running"),
    "cate-pipeline": ("outcome", "treatment", "controls"),
    "sensitivity": ("outcome", "treatment", "controls"),
    "weak_id": ("outcome", "treatment", "instrument", "controls"),
}

LIST_KEYS = {"controls", "effect_covariates", "grid"}
FLOAT_KEYS = {"trim", "alpha", "cutoff", "bandwidth", "r2_y", "r2_d",
              "grid_lower", "grid_upper", "cost", "budget"}
INT_KEYS = {"folds", "seed", "n", "replications", "workers", "bins",
            "grid_points"}


@dataclass
class RunConfig:
    raw: dict[str, str]
    path: str | None = None

    def get(self, key: str, default=None):
        if key not in self.raw:
            return default
        value = self.raw[key]
        if key in LIST_KEYS:
            return [v.strip() for v in value.split(",") if v.strip()]
        try:
            if key in FLOAT_KEYS:
                return float(value)
            if key in INT_KEYS:
                return int(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
        return value

    def require(self, key: str):
        value = self.get(key)
        if value is None:
            raise ConfigError(f"missing required config key {key!r}")
        return value

    @property
    def estimand(self) -> str:
        return str(self.require("estimand"))

    @property
    def seed(self) -> int:
        return int(self.require("seed"))

    def canonical_text(self) -> str:
        return "\n".join(f"{k} = {self.raw[k]}" for k in sorted(self.raw))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def parse_config_text(text: str, path: str | None = None) -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return RunConfig(raw=raw, path=path)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), path=str(path))


def validate_config(config: RunConfig) -> None:
    """Check estimand/role consistency before any compute runs."""
    estimand = config.get("estimand")
    if estimand is None:
        raise ConfigError("missing required config key 'estimand'")
    if estimand not in ESTIMANDS:
        raise ConfigError(
            f"unknown estimand {estimand!r}; expected one of {', '.join(ESTIMANDS)}"
        )
    if config.get("seed") is None:
        raise ConfigError("config must set an explicit integer 'seed'")
    for role in REQUIRED_ROLES[estimand]:
        if config.get(role) in (None, []):
            raise ConfigError(
                f"estimand {estimand!r} requires the {role!r} role; add "
                f"'{role} = <column name(s)>' to the config"
            )
    for key in ("trim", "alpha"):
        value = config.get(key)
        if value is not None and not 0.0 < value < 0.5:
            raise ConfigError(f"{key} must lie in (0, 0.5), got {value}")
    folds = config.get("folds")
    if folds is not None and folds < 2:
        raise ConfigError("folds must be at least 2")
