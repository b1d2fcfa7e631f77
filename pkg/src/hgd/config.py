"""Run configuration with file and flag overrides.

Config files are flat ``key = value`` lines (a TOML-like subset:
comments start with #, strings may be quoted, booleans are true/false).
Precedence is defaults < file < explicit flags. The environment
variable HGD_WORKERS sets the extraction worker count when no flag
does.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError

__all__ = ["RunConfig", "load_config_file", "make_config", "WORKERS_ENV"]

WORKERS_ENV = "HGD_WORKERS"


@dataclass(frozen=True)
class RunConfig:
    """Extraction and fitting parameters.

    The defaults reproduce the reference setup: 128 x 48 images, seven
    32-row strips, 5 x 5 patches at stride 2, ridge eps0 = 1e-3, and a
    damped Karcher iteration (step 0.5, tolerance 1e-7, 50 iterations).
    """

    image_height: int = 128
    image_width: int = 48
    regions: int = 7
    strip_height: int = 32
    patch_size: int = 5
    patch_stride: int = 2
    eps0: float = 1e-3
    karcher_step: float = 0.5
    karcher_tol: float = 1e-7
    karcher_max_iters: int = 50
    variant: str = "gog"
    metric: str = "euclidean"
    protocol: str = "single"

    def validate(self) -> "RunConfig":
        if self.image_height < self.strip_height or self.image_width < self.patch_size:
            raise ConfigError(
                f"image {self.image_height}x{self.image_width} cannot hold "
                f"{self.regions} strips of {self.strip_height} rows with "
                f"{self.patch_size}x{self.patch_size} patches"
            )
        if self.patch_size < 2:
            raise ConfigError("patch_size must be at least 2 (covariance needs pixels)")
        if self.eps0 < 0:
            raise ConfigError("eps0 must be non-negative")
        if self.variant not in ("gog", "zoz", "hgd"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.metric not in ("euclidean", "cosine", "external"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.protocol not in ("single", "multi"):
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_scalar(raw: str, key: str) -> Any:
    text = raw.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a key = value config file into a plain dict."""
    values: dict[str, Any] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        values[key.strip()] = _parse_scalar(raw, key.strip())
    return values


def make_config(
    file: str | Path | None = None, **overrides: Any
) -> RunConfig:
    """Build a validated RunConfig from defaults, a file, and overrides."""
    values: dict[str, Any] = {}
    if file is not None:
        for key, val in load_config_file(file).items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val
    for key, val in overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if val is not None:
            values[key] = val
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    # Coerce numerics that arrived as the "wrong" scalar kind (e.g. 1 for 1.0).
    fixes: dict[str, Any] = {}
    for field in dataclasses.fields(RunConfig):
        val = getattr(cfg, field.name)
        if field.type == "int" and isinstance(val, bool):
            raise ConfigError(f"{field.name} must be an integer")
        if field.type == "int" and not isinstance(val, int):
            if float(val) != int(val):
                raise ConfigError(f"{field.name} must be an integer, got {val!r}")
            fixes[field.name] = int(val)
        if field.type == "float" and isinstance(val, int) and not isinstance(val, bool):
            fixes[field.name] = float(val)
        if field.type == "str" and not isinstance(val, str):
            raise ConfigError(f"{field.name} must be a string, got {val!r}")
    if fixes:
        cfg = dataclasses.replace(cfg, **fixes)
    return cfg.validate()
