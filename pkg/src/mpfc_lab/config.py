"""Flat key=value run configuration parsing and validation.

The format is one ``key=value`` pair per line; everything after a ``#`` is a
comment.  Unknown keys are hard errors, and every validation error names the
offending key.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError
from .model import default_k_split

EXPERIMENTS = ("simulate", "decompose", "beta_sweep", "dissipativity", "convergence")

REQUIRED_KEYS = ("experiment", "beta", "epsilon")

# key -> (type, default); None default means required
_SCHEMA = {
    "experiment": (str, None),
    "beta": (float, None),
    "epsilon": (float, None),
    "k_split": (float, "auto"),
    "beta0": (float, "auto"),
    "dim": (int, 1),
    "n_points": (int, "auto"),
    "dt": (float, 1e-3),
    "horizon": (float, 1.0),
    "sample_stride": (int, 100),
    "seed": (int, 0),
    "output_dir": (str, "."),
    "mean_phi0": (float, 0.1),
    "mean_phi1": (float, 0.2),
    "amplitude": (float, 0.1),
    "init_kmax": (int, 8),
    "fit_transient": (float, 0.2),
}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    beta: float
    epsilon: float
    k_split: float
    beta0: float
    dim: int
    n_points: int
    dt: float
    horizon: float
    sample_stride: int
    seed: int
    output_dir: str
    mean_phi0: float
    mean_phi1: float
    amplitude: float
    init_kmax: int
    fit_transient: float
    defaulted: tuple  # keys that were filled in, echoed into the run log


def _convert(key: str, raw: str, typ):
    try:
        if typ is int:
            as_float = float(raw)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        return typ(raw)
    except ValueError:
        raise ConfigurationError(
            f"{key}: cannot parse {raw!r} as {typ.__name__}"
        ) from None


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a flat key=value configuration."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigurationError(f"{key}: unknown key")
        if key in values:
            raise ConfigurationError(f"{key}: duplicate key")
        values[key] = _convert(key, raw, _SCHEMA[key][0])

    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigurationError(f"{key}: missing required key")

    defaulted = []
    for key, (_, default) in _SCHEMA.items():
        if key in values:
            continue
        if default is None:
            raise ConfigurationError(f"{key}: missing required key")
        defaulted.append(key)
        values[key] = default

    if values["experiment"] not in EXPERIMENTS:
        raise ConfigurationError(
            f"experiment: must be one of {EXPERIMENTS}, got {values['experiment']!r}"
        )
    if values["beta"] < 0:
        raise ConfigurationError(f"beta: must be >= 0, got {values['beta']}")
    if values["k_split"] == "auto":
        values["k_split"] = default_k_split(values["epsilon"])
    if values["beta0"] == "auto":
        values["beta0"] = max(1.0, values["beta"])
    if values["n_points"] == "auto":
        values["n_points"] = 128 if values["dim"] == 1 else 64

    if values["beta0"] <= 0:
        raise ConfigurationError(f"beta0: must be > 0, got {values['beta0']}")
    if values["beta"] > values["beta0"]:
        raise ConfigurationError(
            f"beta: must be <= beta0={values['beta0']}, got {values['beta']}"
        )
    if values["k_split"] < 0 or values["k_split"] < values["epsilon"] - 1.0:
        raise ConfigurationError(
            f"k_split: must be >= max(0, epsilon-1), got {values['k_split']}"
        )
    if values["dim"] not in (1, 2, 3):
        raise ConfigurationError(f"dim: must be 1, 2 or 3, got {values['dim']}")
    n = values["n_points"]
    if n < 4 or (n & (n - 1)) != 0:
        raise ConfigurationError(f"n_points: must be a power of two >= 4, got {n}")
    if not values["dt"] > 0:
        raise ConfigurationError(f"dt: must be > 0, got {values['dt']}")
    if not values["horizon"] >= values["dt"]:
        raise ConfigurationError(
            f"horizon: must be >= dt, got {values['horizon']} < {values['dt']}"
        )
    if values["sample_stride"] < 1:
        raise ConfigurationError(
            f"sample_stride: must be >= 1, got {values['sample_stride']}"
        )
    if values["seed"] < 0:
        raise ConfigurationError(f"seed: must be >= 0, got {values['seed']}")
    if not values["output_dir"]:
        raise ConfigurationError("output_dir: must be non-empty")
    if values["amplitude"] < 0:
        raise ConfigurationError(
            f"amplitude: must be >= 0, got {values['amplitude']}"
        )
    if values["init_kmax"] < 1 or values["init_kmax"] > n / 3.0:
        raise ConfigurationError(
            f"init_kmax: must be in [1, n_points/3], got {values['init_kmax']}"
        )
    if values["fit_transient"] < 0:
        raise ConfigurationError(
            f"fit_transient: must be >= 0, got {values['fit_transient']}"
        )

    return RunConfig(defaulted=tuple(defaulted), **values)


def load_config(path) -> RunConfig:
    with open(path, "r") as fh:
        return parse_config(fh.read())
