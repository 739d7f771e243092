"""Plain-text ``key = value`` run configuration with ``[section]`` headers.

Comments start with ``#`` or ``;``.  Unknown sections or keys are hard errors
that name the offending line; command-line flags override file values.  Value
lists accept either comma-separated numbers or the generator forms
``logspace:lo:hi:n`` and ``linspace:lo:hi:n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detection import DetectionSetup
from .dynamics import DEFAULT_LIFETIME_NS, AtomParams, PulseShape, PulseSpec
from .errors import ConfigError

_SHAPE_ALIASES = {
    "exp": PulseShape.RISING_EXP,
    "exponential": PulseShape.RISING_EXP,
    "square": PulseShape.SQUARE,
}


def _parse_float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None


def _parse_int(raw: str, where: str) -> int:
    try:
        return int(float(raw)) if float(raw) == int(float(raw)) else int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None


def _parse_shape(raw: str, where: str) -> PulseShape:
    try:
        return _SHAPE_ALIASES[raw.strip().lower()]
    except KeyError:
        raise ConfigError(
            f"{where}: shape must be one of {sorted(_SHAPE_ALIASES)}, got {raw!r}"
        ) from None


def _parse_values(raw: str, where: str) -> tuple[float, ...]:
    raw = raw.strip()
    for name, fn in (("logspace", np.geomspace), ("linspace", np.linspace)):
        if raw.startswith(name + ":"):
            parts = raw.split(":")
            if len(parts) != 4:
                raise ConfigError(f"{where}: expected {name}:lo:hi:n")
            lo = _parse_float(parts[1], where)
            hi = _parse_float(parts[2], where)
            n = _parse_int(parts[3], where)
            return tuple(float(x) for x in fn(lo, hi, n))
    return tuple(_parse_float(x, where) for x in raw.split(",") if x.strip())


# (section, key) -> (RunConfig attribute, parser)
_KEYS = {
    ("atom", "lifetime_ns"): ("lifetime_ns", _parse_float),
    ("atom", "eta_p"): ("eta_p", _parse_float),
    ("atom", "detuning"): ("detuning", _parse_float),
    ("pulse", "shape"): ("shape", _parse_shape),
    ("pulse", "tau_ns"): ("tau_ns", _parse_float),
    ("pulse", "nbar"): ("nbar", _parse_float),
    ("detection", "eta_r"): ("eta_r", _parse_float),
    ("detection", "eta_l"): ("eta_l", _parse_float),
    ("detection", "nd2_db"): ("nd2_db", _parse_float),
    ("detection", "dead_time_ns"): ("dead_time_ns", _parse_float),
    ("detection", "bin_width_ns"): ("bin_width_ns", _parse_float),
    ("detection", "pulse_period_ns"): ("pulse_period_ns", _parse_float),
    ("detection", "n_pulses"): ("n_pulses", _parse_int),
    ("sweep", "nbar_values"): ("sweep_nbar", _parse_values),
    ("sweep", "tau_values"): ("sweep_tau", _parse_values),
    ("sweep", "shape"): ("sweep_shape", _parse_shape),
    ("run", "seed"): ("seed", _parse_int),
    ("run", "out_dir"): ("out_dir", str),
}

_SECTIONS = {section for section, _ in _KEYS}


@dataclass
class RunConfig:
    """Validated run parameters with experiment-scale defaults."""

    lifetime_ns: float = DEFAULT_LIFETIME_NS
    eta_p: float = 0.03
    detuning: float = 0.0
    shape: PulseShape = PulseShape.RISING_EXP
    tau_ns: float = 15.0
    nbar: float = 110.0
    eta_r: float = 0.30
    eta_l: float = 0.30
    nd2_db: float = -43.0
    dead_time_ns: float = 3000.0
    bin_width_ns: float = 1.0
    pulse_period_ns: float = 12000.0
    n_pulses: int = 1_000_000
    sweep_nbar: tuple[float, ...] = field(default_factory=tuple)
    sweep_tau: tuple[float, ...] = field(default_factory=tuple)
    sweep_shape: PulseShape = PulseShape.RISING_EXP
    seed: int = 12345
    out_dir: str = "."

    def atom(self) -> AtomParams:
        return AtomParams.from_lifetime(self.lifetime_ns, self.eta_p, self.detuning)

    def pulse(self) -> PulseSpec:
        return PulseSpec(shape=self.shape, tau=self.tau_ns, mean_photons=self.nbar)

    def detection(self) -> DetectionSetup:
        return DetectionSetup(
            eta_r=self.eta_r, eta_l=self.eta_l, nd2_db=self.nd2_db,
            dead_time=self.dead_time_ns, bin_width=self.bin_width_ns,
            pulse_period=self.pulse_period_ns, n_pulses=self.n_pulses,
            seed=self.seed,
        )


def read_config_file(path: str | Path) -> dict[tuple[str, str], str]:
    """Parse the raw file into {(section, key): value}, validating key names."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[tuple[str, str], str] = {}
    section = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        if section is None:
            raise ConfigError(f"{path}:{lineno}: key outside any [section]")
        key, _, raw = stripped.partition("=")
        key = key.strip().lower()
        if (section, key) not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}' in [{section}]")
        values[(section, key)] = raw.strip()
    return values


def build_config(
    path: str | Path | None = None, overrides: dict[str, object] | None = None,
) -> RunConfig:
    """Config from defaults, then file values, then flag overrides (highest)."""
    cfg = RunConfig()
    if path is not None:
        for (section, key), raw in read_config_file(path).items():
            attr, parse = _KEYS[(section, key)]
            setattr(cfg, attr, parse(raw, f"[{section}] {key}"))
    for attr, value in (overrides or {}).items():
        if value is None:
            continue
        if not hasattr(cfg, attr):
            raise ConfigError(f"unknown configuration attribute {attr!r}")
        setattr(cfg, attr, value)
    # materialize the dataclasses once so invalid combinations fail up front
    cfg.atom()
    cfg.pulse()
    cfg.detection()
    return cfg
