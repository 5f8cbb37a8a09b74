"""Experiment configuration (TOML, with JSON accepted as well).

A config holds one ``[experiment]`` table, an optional ``[generator]``
table of ClusterGenConfig overrides, optional ``[validation]`` options and
one or more ``[[scenario]]`` entries describing the arrays and subcarriers.
"""

from dataclasses import dataclass, field, replace
from importlib import resources
import json
import math
import os
from pathlib import Path as FsPath

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel import ChannelConfig
from .errors import SchemaError
from .geometry import SPEED_OF_LIGHT, ArrayGeometry, make_frequency_grid, make_ula
from .paths import ClusterGenConfig

METHODS = ("joint", "sequential", "both")


@dataclass
class ArraySpec:
    n: int = 1
    spacing: float = 0.5  # wavelengths
    axis: tuple = (1.0, 0.0, 0.0)
    positions_m: list = None
    recenter: bool = True

    def build(self, wavelength):
        if self.positions_m is not None:
            return ArrayGeometry(self.positions_m, recenter=self.recenter)
        return make_ula(self.n, self.spacing, self.axis, wavelength)


@dataclass
class Scenario:
    name: str
    tx: ArraySpec
    rx: ArraySpec
    fc_hz: float = 28e9
    n_f: int = 1
    spacing_hz: float = 15e6
    paths_csv: str = None
    generator: dict = None

    def channel_config(self):
        lam = SPEED_OF_LIGHT / self.fc_hz
        grid = make_frequency_grid(self.fc_hz, self.n_f, self.spacing_hz)
        return ChannelConfig(self.tx.build(lam), self.rx.build(lam), grid)


@dataclass
class ValidationOptions:
    n_cases: int = 20
    n_paths: tuple = (1, 3)
    noise_var: float = 0.01
    n_random_matrices: int = 40
    inject_uncentered: bool = True
    inject_random_fat_m: bool = True
    fd_step: float = 1e-6


@dataclass
class ExperimentConfig:
    name: str
    scenarios: list
    p_values: list = field(default_factory=lambda: list(range(1, 21)))
    snr_db_values: list = field(default_factory=list)
    oversampling_values: list = field(default_factory=lambda: [6])
    n_trials: int = 100
    master_seed: int = 0
    method: str = "joint"
    order: tuple = ("delay", "dod", "doa")
    output_dir: str = "results"
    generator: ClusterGenConfig = field(default_factory=ClusterGenConfig)
    validation: ValidationOptions = field(default_factory=ValidationOptions)
    workers: int = 1

    def __post_init__(self):
        if self.n_trials < 1:
            raise SchemaError("n_trials must be >= 1")
        if not self.p_values:
            raise SchemaError("p_values must be non-empty")
        if any(b <= a for a, b in zip(self.p_values, self.p_values[1:])):
            raise SchemaError("p_values must be strictly increasing")
        if self.p_values[0] < 1:
            raise SchemaError("p_values must be >= 1")
        if self.method not in METHODS:
            raise SchemaError(f"method must be one of {METHODS}")
        if not self.scenarios:
            raise SchemaError("at least one [[scenario]] is required")

    def methods(self):
        return ("joint", "sequential") if self.method == "both" else (self.method,)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


def _array_spec(d, where):
    if d is None:
        return ArraySpec()
    allowed = {"n", "spacing", "axis", "positions_m", "recenter"}
    extra = set(d) - allowed
    if extra:
        raise SchemaError(f"{where}: unknown keys {sorted(extra)}")
    spec = ArraySpec(**d)
    spec.axis = tuple(spec.axis)
    return spec


def _parse_snr(v):
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        return float(v)
    return float(v)


def config_from_dict(data, base_dir=None):
    exp = dict(data.get("experiment", {}))
    if "name" not in exp:
        raise SchemaError("[experiment] needs a name")
    scen_list = data.get("scenario") or data.get("scenarios") or []
    scenarios = []
    for i, s in enumerate(scen_list):
        s = dict(s)
        name = s.pop("name", f"scenario{i}")
        tx = _array_spec(s.pop("tx", None), f"scenario {name}.tx")
        rx = _array_spec(s.pop("rx", None), f"scenario {name}.rx")
        csv_path = s.pop("paths_csv", None)
        if csv_path and base_dir and not os.path.isabs(csv_path):
            csv_path = os.path.join(base_dir, csv_path)
        try:
            scenarios.append(Scenario(name=name, tx=tx, rx=rx, paths_csv=csv_path, **s))
        except TypeError as exc:
            raise SchemaError(f"scenario {name}: {exc}") from None

    if "p_max" in exp:
        exp["p_values"] = list(range(1, int(exp.pop("p_max")) + 1))
    if "snr_db_values" in exp:
        exp["snr_db_values"] = [_parse_snr(v) for v in exp["snr_db_values"]]
    if "order" in exp:
        exp["order"] = tuple(exp["order"])
    gen = ClusterGenConfig.from_dict(data.get("generator", {}))
    val = ValidationOptions(**data.get("validation", {}))
    if isinstance(val.n_paths, list):
        val.n_paths = tuple(val.n_paths)
    try:
        return ExperimentConfig(scenarios=scenarios, generator=gen, validation=val, **exp)
    except TypeError as exc:
        raise SchemaError(f"[experiment]: {exc}") from None


def preset_names():
    return sorted(
        FsPath(p.name).stem
        for p in resources.files("chest_lab.presets").iterdir()
        if p.name.endswith(".toml")
    )


def load_config(source):
    """Load a config file (``.toml`` or ``.json``) or a bundled preset by name."""
    path = FsPath(source)
    if not path.exists():
        if str(source) in preset_names():
            text = resources.files("chest_lab.presets").joinpath(f"{source}.toml").read_text()
            return config_from_dict(tomllib.loads(text))
        raise FileNotFoundError(f"no config file or preset named {source!r}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError:
            data = json.loads(text)
    return config_from_dict(data, base_dir=str(path.parent))
