"""Plain-text ``key = value`` configuration with dotted section keys.

Example::

    experiment = shoot
    seed = 3
    model.alpha = 2.0
    shooting.delta0 = 2e-3
    perturbation.size = 1e-3

Lines starting with ``#`` are comments. Unknown or repeated keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .domain import ModelParams
from .dynamics import IntegratorConfig
from .errors import ConfigError
from .manifold import ShootingConfig

RECIPES = ("spectrum", "factorization", "linear_modes", "virial_audit", "shoot",
           "lipschitz", "decay", "sweep_alpha")


def _opt_float(text: str) -> float | None:
    return None if text.lower() in ("auto", "none", "") else float(text)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class WeightsConfig:
    """Explicit ``A``, ``B`` or ``None`` for the values derived from the tube size."""

    A: float | None = None
    B: float | None = None
    gamma: float = 0.05

    @property
    def auto(self) -> bool:
        return self.A is None or self.B is None


@dataclass(frozen=True)
class PerturbationConfig:
    kind: str = "random"
    size: float = 1e-3
    seeds: int = 5

    def __post_init__(self) -> None:
        if self.kind not in ("random", "zero", "y_minus"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.size < 0:
            raise ValueError("perturbation size must be non-negative")
        if self.seeds < 1:
            raise ValueError("seeds must be at least 1")


@dataclass(frozen=True)
class StudyConfig:
    """Parameters of the multi-run recipes."""

    alphas: tuple[float, ...] = (1.25, 1.5, 2.0, 3.0)
    spectrum_alphas: tuple[float, ...] = (0.5, 1.5, 2.0, 3.0)
    lipschitz_deltas: tuple[float, ...] = (1e-2, 1e-3)
    lipschitz_members: int = 7


@dataclass(frozen=True)
class LabConfig:
    model: ModelParams = field(default_factory=ModelParams)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    shooting: ShootingConfig = field(default_factory=ShootingConfig)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    study: StudyConfig = field(default_factory=StudyConfig)
    output_dir: Path = Path("runs")
    experiment: str = "spectrum"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.experiment not in RECIPES:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(RECIPES)}")

    def snapshot(self) -> dict:
        out = {}
        for section in ("model", "integrator", "weights", "shooting", "perturbation", "study"):
            out[section] = dataclasses.asdict(getattr(self, section))
        out.update(output_dir=str(self.output_dir), experiment=self.experiment, seed=self.seed)
        return out


_SECTIONS: dict[str, tuple[type, dict[str, Callable[[str], object]]]] = {
    "model": (ModelParams, {"alpha": float, "domain_half_length": float, "n_points": int}),
    "integrator": (IntegratorConfig, {"dt": float, "t_max": float, "record_stride": int,
                                      "boundary": str, "scheme": str, "ceiling": _opt_float,
                                      "boundary_layer": float}),
    "weights": (WeightsConfig, {"A": _opt_float, "B": _opt_float, "gamma": float}),
    "shooting": (ShootingConfig, {"delta0": float, "K": float, "bracket": _opt_float,
                                  "t_max": float, "bisection_tol": _opt_float, "max_iters": int,
                                  "probe_horizon": float, "check_every": int,
                                  "reshoot_deviation": float, "reshoot_iters": int}),
    "perturbation": (PerturbationConfig, {"kind": str, "size": float, "seeds": int}),
    "study": (StudyConfig, {"alphas": _floats, "spectrum_alphas": _floats,
                            "lipschitz_deltas": _floats, "lipschitz_members": int}),
}
_TOP = {"output_dir": Path, "experiment": str, "seed": int}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` strings, rejecting malformed lines and duplicates."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def build_config(entries: dict[str, str], overrides: dict[str, object] | None = None) -> LabConfig:
    """Typed :class:`LabConfig` from raw entries; ``overrides`` win over file values."""
    section_kwargs: dict[str, dict] = {name: {} for name in _SECTIONS}
    top: dict[str, object] = {}
    for key, value in entries.items():
        try:
            if "." in key:
                section, name = key.split(".", 1)
                if section not in _SECTIONS or name not in _SECTIONS[section][1]:
                    raise ConfigError(f"unknown key {key!r}")
                section_kwargs[section][name] = _SECTIONS[section][1][name](value)
            elif key in _TOP:
                top[key] = _TOP[key](value)
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            top[key] = value
    try:
        sections = {name: cls(**section_kwargs[name]) for name, (cls, _) in _SECTIONS.items()}
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return LabConfig(**sections, **top)


def load_config(path: Path | None, **overrides) -> LabConfig:
    if path is None:
        return build_config({}, overrides)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_text(text, str(path)), overrides)
