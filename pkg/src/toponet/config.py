"""Network configuration: the parameter record, its validation, and file loading."""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from pathlib import Path
from typing import Any, Mapping

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as _toml

__all__ = [
    "Geometry",
    "NetworkConfig",
    "ConfigError",
    "DEFAULT_R_BS",
    "validate_mapping",
    "load_config",
]

DEFAULT_R_BS = math.sqrt(2.0) - 1.0


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``errors`` holds one human-readable message per violated field.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class Geometry(str, enum.Enum):
    TORUS = "Torus"
    CYLINDER = "Cylinder"
    PLANE = "Plane"

    @classmethod
    def parse(cls, value) -> "Geometry":
        if isinstance(value, cls):
            return value
        for g in cls:
            if str(value).lower() == g.value.lower():
                return g
        raise ConfigError([f"geometry: unknown value {value!r} (expected Torus, Cylinder or Plane)"])


@dataclasses.dataclass(frozen=True)
class NetworkConfig:
    """All physical and numerical parameters of one network instance.

    Lengths are in units of the fiber length ``L`` and the speed of light is 1.
    ``loss_eta`` is the intensity transmission of a single optical element, so
    each element traversal multiplies the amplitude by ``sqrt(loss_eta)``.
    """

    Nx: int
    Ny: int
    theta0: float = math.pi / 2
    L: float = 1.0
    geometry: Geometry = Geometry.CYLINDER
    r_bs: float = DEFAULT_R_BS
    chi: float = 0.0
    r_BM: float = 0.9
    loss_eta: float = 1.0
    disorder_delta: float = 0.0
    rng_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "geometry", Geometry.parse(self.geometry))
        errors = _check(dataclasses.asdict(self))
        if errors:
            raise ConfigError(errors)

    @property
    def t_BM(self) -> float:
        return math.sqrt(1.0 - self.r_BM**2)

    @property
    def lossless(self) -> bool:
        return self.loss_eta == 1.0

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["geometry"] = self.geometry.value
        return d


_REQUIRED = ("Nx", "Ny")


def _check(d: Mapping[str, Any]) -> list[str]:
    errors = []
    for name in ("Nx", "Ny"):
        v = d.get(name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            errors.append(f"{name}: must be an integer >= 1 (got {v!r})")
    for name in ("theta0", "L", "r_bs", "chi", "r_BM", "loss_eta", "disorder_delta"):
        v = d.get(name)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            errors.append(f"{name}: must be a finite number (got {v!r})")
    if errors:
        return errors
    if d["L"] <= 0:
        errors.append("L: must be > 0")
    if not 0.0 <= d["r_bs"] <= 1.0:
        errors.append("r_bs ∈ [0,1]")
    if not 0.0 <= d["r_BM"] <= 1.0:
        errors.append("r_BM ∈ [0,1]")
    if not 0.0 < d["loss_eta"] <= 1.0:
        errors.append("loss_eta ∈ (0,1]")
    if d["disorder_delta"] < 0:
        errors.append("disorder_delta: must be >= 0")
    seed = d.get("rng_seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64):
        errors.append("rng_seed: must be a 64-bit unsigned integer")
    if d["disorder_delta"] > 0 and seed is None:
        errors.append("rng_seed: required when disorder_delta > 0")
    return errors


def validate_mapping(raw: Mapping[str, Any]) -> NetworkConfig:
    """Validate a raw mapping (field names exactly as in :class:`NetworkConfig`).

    Every problem is collected and reported at once through :class:`ConfigError`.
    """
    if not isinstance(raw, Mapping) or not raw:
        raise ConfigError(["config: empty document"])
    fields = {f.name for f in dataclasses.fields(NetworkConfig)}
    errors = [f"{k}: unknown field" for k in raw if k not in fields]
    errors += [f"{k}: required field missing" for k in _REQUIRED if k not in raw]
    values = {k: v for k, v in raw.items() if k in fields}
    if "geometry" in values:
        try:
            values["geometry"] = Geometry.parse(values["geometry"])
        except ConfigError as exc:
            errors += exc.errors
            values.pop("geometry")
    if errors:
        raise ConfigError(errors)
    try:
        return NetworkConfig(**values)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError([str(exc)]) from None


def load_config(path) -> NetworkConfig:
    """Read a JSON or TOML document (chosen by suffix) and validate it."""
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        raise ConfigError(["config: empty document"])
    try:
        if path.suffix.lower() == ".toml":
            raw = _toml.loads(text)
        else:
            raw = json.loads(text)
    except (ValueError, _toml.TOMLDecodeError) as exc:
        raise ConfigError([f"config: cannot parse {path.name}: {exc}"]) from None
    return validate_mapping(raw)
