"""config.py

Simulation configuration: physical rates (meV, hbar = 1), frame, truncations,
integrator and output controls. Files are flat YAML mappings; command-line
`key=value` overrides win over file values, which win over the defaults.
"""

import dataclasses
from dataclasses import dataclass
import hashlib
import logging
import math
from pathlib import Path

import yaml

FRAMES = ("lab", "rotating")

#: rates that must be finite and non-negative
RATE_KEYS = ("g_mev", "zeta_mev", "xi_mev", "kappa_mev", "pump_mev")
ENERGY_KEYS = ("omega0_mev", "omega_qd_mev")
TRUNC_KEYS = ("trunc0", "trunc1", "trunc2")


class ConfigError(Exception):
    def __init__(self, key, message):
        super().__init__("{}: {}".format(key, message))
        self.key = key


@dataclass(frozen=True)
class SimConfig:
    omega0_mev: float = 500.0
    omega_qd_mev: float = 500.0
    g_mev: float = 5.0
    zeta_mev: float = 3.0
    xi_mev: float = 1.0
    kappa_mev: float = 0.1
    pump_mev: float = 1.0e-4
    frame: str = "rotating"
    trunc0: int = 3
    trunc1: int = 9
    trunc2: int = 4
    #: RK4 step in 1/meV, None for the automatic choice
    dt: float = None
    t_final_kappa: float = 0.5
    #: steps between recorded points, None for about 200 records
    record_stride: int = None
    snapshots_kappa: tuple = (0.0, 0.216, 0.328)
    grid_max: float = 6.0
    grid_n: int = 201
    initial_state: str = "e,0,0,0"

    def __post_init__(self):
        # lists from YAML become tuples so the config stays hashable
        object.__setattr__(
            self, "snapshots_kappa", tuple(float(t) for t in self.snapshots_kappa)
        )
        validate(self)

    @property
    def detuning(self):
        """Delta = omega0 - omega_qd."""
        return self.omega0_mev - self.omega_qd_mev

    @property
    def truncations(self):
        return (self.trunc0, self.trunc1, self.trunc2)

    @property
    def time_scale(self):
        """Factor converting t [1/meV] into the reported time (t*kappa, or t if kappa = 0)."""
        return self.kappa_mev if self.kappa_mev > 0 else 1.0

    @property
    def time_unit(self):
        return "t*kappa" if self.kappa_mev > 0 else "t [1/meV]"

    def ratios(self):
        """Dimensionless ratios of the reference parameter set."""

        def ratio(a, b):
            return a / b if b > 0 else math.inf

        return {
            "g/kappa": ratio(self.g_mev, self.kappa_mev),
            "zeta/kappa": ratio(self.zeta_mev, self.kappa_mev),
            "xi/kappa": ratio(self.xi_mev, self.kappa_mev),
            "kappa/P": ratio(self.kappa_mev, self.pump_mev),
        }

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["snapshots_kappa"] = list(self.snapshots_kappa)
        return d

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def run_id(self):
        """Deterministic identifier of the resolved configuration."""
        return hashlib.sha1(self.to_yaml().encode("utf-8")).hexdigest()[:12]


KEYS = tuple(f.name for f in dataclasses.fields(SimConfig))


def validate(config):
    """Raise ConfigError naming the first offending key."""

    for key in ENERGY_KEYS + RATE_KEYS:
        value = getattr(config, key)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(key, "expected a number, got {!r}".format(value))
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite, got {}".format(value))
        if key in RATE_KEYS and value < 0:
            raise ConfigError(key, "rates must be >= 0, got {}".format(value))

    if config.frame not in FRAMES:
        raise ConfigError("frame", "must be one of {}, got {!r}".format(FRAMES, config.frame))

    for key in TRUNC_KEYS:
        value = getattr(config, key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ConfigError(key, "must be a non-negative integer, got {!r}".format(value))

    if config.dt is not None and not (
        isinstance(config.dt, (int, float)) and math.isfinite(config.dt) and config.dt > 0
    ):
        raise ConfigError("dt", "must be a positive number or null, got {!r}".format(config.dt))

    if not (math.isfinite(config.t_final_kappa) and config.t_final_kappa > 0):
        raise ConfigError("t_final_kappa", "must be > 0, got {!r}".format(config.t_final_kappa))

    if config.record_stride is not None and (
        not isinstance(config.record_stride, int) or config.record_stride < 1
    ):
        raise ConfigError(
            "record_stride", "must be a positive integer or null, got {!r}".format(config.record_stride)
        )

    for t in config.snapshots_kappa:
        if not (0 <= t <= config.t_final_kappa):
            raise ConfigError(
                "snapshots_kappa",
                "snapshot {} outside [0, t_final_kappa={}]".format(t, config.t_final_kappa),
            )

    if not (config.grid_max > 0):
        raise ConfigError("grid_max", "must be > 0, got {!r}".format(config.grid_max))
    if not isinstance(config.grid_n, int) or config.grid_n < 2:
        raise ConfigError("grid_n", "must be an integer >= 2, got {!r}".format(config.grid_n))


def _coerce(key, value):
    """Bring a raw YAML value to the type of the dataclass field."""

    default = SimConfig.__dataclass_fields__[key].default
    try:
        if key in TRUNC_KEYS or key in ("grid_n",):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            return value
        if key in ("dt", "record_stride") and value is None:
            return None
        if key == "record_stride":
            return int(value) if isinstance(value, float) and value.is_integer() else value
        if key == "snapshots_kappa":
            if isinstance(value, (int, float)):
                value = [value]
            return tuple(float(v) for v in value)
        if key in ("frame", "initial_state"):
            return str(value)
        if isinstance(default, float) or key == "dt":
            if isinstance(value, bool):
                raise TypeError("boolean")
            return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(key, "cannot interpret {!r}: {}".format(value, e))
    return value


def parse_overrides(items):
    """Turn ['key=value', ...] into a dict, parsing values as YAML scalars."""

    overrides = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, value = item.split("=", 1)
        try:
            overrides[key.strip()] = yaml.safe_load(value)
        except yaml.YAMLError as e:
            raise ConfigError(key.strip(), "cannot parse value {!r}: {}".format(value, e))
    return overrides


def parse_config(path=None, overrides=None):
    """Return a SimConfig from an optional YAML file plus overrides.

    The defaults are the reference parameter set: g = 5 meV,
    omega0 = omega_qd = 500 meV, zeta = 3 meV, xi = 1 meV, kappa = 0.1 meV,
    P = 0.1 ueV. overrides is a dict or a list of 'key=value' strings.
    """

    values = {}

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError("<file>", "configuration file not found: {}".format(path))
        try:
            loaded = yaml.safe_load(path.read_text())
        except yaml.YAMLError as e:
            raise ConfigError("<file>", "cannot parse {}: {}".format(path, e))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError("<file>", "{} must hold a flat key: value mapping".format(path))
        values.update(loaded)

    if overrides is not None:
        if not isinstance(overrides, dict):
            overrides = parse_overrides(overrides)
        values.update(overrides)

    for key in values:
        if key not in KEYS:
            raise ConfigError(key, "unknown configuration key")

    config = SimConfig(**{k: _coerce(k, v) for k, v in values.items()})

    logging.debug("Resolved configuration %s: %s", config.run_id(), config.to_dict())
    for name, value in config.ratios().items():
        logging.info("%s = %g", name, value)

    return config
