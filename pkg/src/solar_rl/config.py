"""Run configuration: one YAML document, every field optional except the seed."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .energy import HardwareConfig
from .experiments import DEFAULT_INTERVAL_CAP_HOURS, DYNAMIC_COMPARE
from .qlearn import EPISODE_START, ConvergenceCriterion, Hyperparameters
from .traces import Placement, PlacementArchetype, archetype

EXPERIMENTS = ("daybyday", "dynamic", "shared", "transfer")
EXPERIMENT_CHOICES = EXPERIMENTS + ("all",)

DEFAULT_CONFIG_TEXT = """\
# Every key is optional except `seed`. Command-line flags override these.
seed: 0
days: 90
experiment: all            # daybyday | dynamic | shared | transfer | all
output_dir: runs/default
utc_offset_hours: 0        # fixed offset used for day boundaries and weekends

# Either synthetic placements or CSV files (header `timestamp,lux`).
traces:
  - archetype: Window
  - archetype: Door
  - archetype: MiddleOffice
  - archetype: ConferenceRoom
  - archetype: StairAccess
# - path: data/node7.csv
#   node_id: node7

hardware:
  capacitance: 1.0
  v_max: 5.5
  v_min: 2.1
  v_restart: 3.0
  divider_resistance: 2.0e7
  sleep_power: 5.0e-6
  event_energy: 1.0e-2
  harvest_efficiency: 1.0e-6
  v_initial: 5.5

hyperparameters:
  gamma: 0.99
  epsilon_max: 1.0
  epsilon_min: 0.1
  epsilon_decrement: 0.0004
  alpha: 0.1

convergence:
  window: 50
  tolerance: 1.0e-3
  max_episodes: 20000
  episode_start: random    # reset | carry | random

dynamic:
  cap_hours: 168
  window_days: null        # null replays all data seen so far
  compare: rerun           # rerun | recorded

fleet:
  per_base_count: 200
  clusters: 5
  train_days: 7

transfer:
  pretrain_days: 7
"""


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class TraceSource:
    node_id: str
    path: Path | None = None
    archetype: PlacementArchetype | None = None

    @property
    def synthetic(self) -> bool:
        return self.archetype is not None


@dataclass(frozen=True)
class DynamicOptions:
    cap_hours: float = DEFAULT_INTERVAL_CAP_HOURS
    window_days: int | None = None
    compare: str = "rerun"


@dataclass(frozen=True)
class FleetOptions:
    per_base_count: int = 200
    clusters: int = 5
    train_days: int = 7


@dataclass(frozen=True)
class TransferOptions:
    pretrain_days: int = 7


@dataclass(frozen=True)
class RunConfig:
    seed: int
    hardware: HardwareConfig = field(default_factory=HardwareConfig)
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    convergence: ConvergenceCriterion = field(default_factory=ConvergenceCriterion)
    experiment: str = "all"
    traces: tuple[TraceSource, ...] = ()
    days: int = 90
    output_dir: Path = Path("runs/default")
    utc_offset_hours: float = 0.0
    dynamic: DynamicOptions = field(default_factory=DynamicOptions)
    fleet: FleetOptions = field(default_factory=FleetOptions)
    transfer: TransferOptions = field(default_factory=TransferOptions)

    @property
    def experiments(self) -> tuple[str, ...]:
        return EXPERIMENTS if self.experiment == "all" else (self.experiment,)

    def with_overrides(self, **overrides) -> "RunConfig":
        """Apply command-line overrides; ``None`` values are ignored."""
        given = {k: v for k, v in overrides.items() if v is not None}
        if "output_dir" in given:
            given["output_dir"] = Path(given["output_dir"])
        cfg = replace(self, **given)
        _check_run(cfg)
        return cfg

    def to_dict(self) -> dict:
        """Plain-data echo of the resolved configuration, stored with each run."""
        def section(obj):
            return {f.name: getattr(obj, f.name) for f in fields(obj)}

        traces = []
        for src in self.traces:
            if src.synthetic:
                traces.append({"node_id": src.node_id, "archetype": _archetype_dict(src.archetype)})
            else:
                traces.append({"node_id": src.node_id, "path": str(src.path)})
        return {
            "seed": self.seed,
            "days": self.days,
            "experiment": self.experiment,
            "utc_offset_hours": self.utc_offset_hours,
            "traces": traces,
            "hardware": section(self.hardware),
            "hyperparameters": section(self.hyperparameters),
            "convergence": section(self.convergence),
            "dynamic": section(self.dynamic),
            "fleet": section(self.fleet),
            "transfer": section(self.transfer),
        }


def _archetype_dict(arch: PlacementArchetype) -> dict:
    out = {f.name: getattr(arch, f.name) for f in fields(arch)}
    out["kind"] = arch.kind.value
    out["burst_minutes"] = list(arch.burst_minutes)
    return out


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(name, "expected a mapping")
    return value


def _build(cls, data: dict, path: str, **defaults):
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")
    try:
        return cls(**(defaults | data))
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _trace_source(entry: Any, index: int, base_dir: Path) -> TraceSource:
    path = f"traces[{index}]"
    if not isinstance(entry, dict):
        raise ConfigError(path, "expected a mapping with `archetype` or `path`")
    entry = dict(entry)
    node_id = entry.pop("node_id", None)
    if ("archetype" in entry) == ("path" in entry):
        raise ConfigError(path, "give exactly one of `archetype` or `path`")
    if "path" in entry:
        if entry.keys() - {"path"}:
            raise ConfigError(f"{path}.{sorted(entry.keys() - {'path'})[0]}", "unknown field")
        file = Path(entry["path"])
        if not file.is_absolute():
            file = base_dir / file
        if not file.is_file():
            raise ConfigError(f"{path}.path", f"trace file {file} does not exist")
        return TraceSource(str(node_id or file.stem), path=file)

    kind = entry.pop("archetype")
    try:
        placement = Placement(kind)
    except ValueError:
        names = ", ".join(p.value for p in Placement)
        raise ConfigError(f"{path}.archetype", f"unknown archetype {kind!r} (expected one of {names})") from None
    known = {f.name for f in fields(PlacementArchetype)} - {"kind"}
    for key in entry:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown archetype parameter")
    if "burst_minutes" in entry:
        entry["burst_minutes"] = tuple(entry["burst_minutes"])
    try:
        arch = archetype(placement, **entry)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None
    return TraceSource(str(node_id or placement.value), archetype=arch)


def _check_run(cfg: RunConfig) -> None:
    if cfg.experiment not in EXPERIMENT_CHOICES:
        raise ConfigError("experiment", f"expected one of {EXPERIMENT_CHOICES}, got {cfg.experiment!r}")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError("seed", "must be an integer")
    if not isinstance(cfg.days, int) or cfg.days < 1:
        raise ConfigError("days", "must be a positive integer")
    if cfg.dynamic.compare not in DYNAMIC_COMPARE:
        raise ConfigError("dynamic.compare", f"expected one of {DYNAMIC_COMPARE}")
    if cfg.dynamic.cap_hours < 1:
        raise ConfigError("dynamic.cap_hours", "must be >= 1")
    if cfg.fleet.per_base_count < 1 or cfg.fleet.clusters < 1 or cfg.fleet.train_days < 1:
        raise ConfigError("fleet", "counts must be >= 1")
    if cfg.transfer.pretrain_days < 1:
        raise ConfigError("transfer.pretrain_days", "must be >= 1")
    ids = [t.node_id for t in cfg.traces]
    if len(set(ids)) != len(ids):
        raise ConfigError("traces", "node ids must be unique")


def parse_config(raw: dict | None, base_dir: Path | str = ".", seed: int | None = None) -> RunConfig:
    """Validate a decoded YAML mapping. ``seed`` may come from the command line."""
    raw = dict(raw or {})
    base_dir = Path(base_dir)
    known = {f.name for f in fields(RunConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown field")
    if seed is None:
        seed = raw.get("seed")
    if seed is None:
        raise ConfigError("seed", "a seed is required")

    traces_raw = raw.get("traces")
    if traces_raw is None:
        traces_raw = [{"archetype": p.value} for p in Placement]
    if not isinstance(traces_raw, list) or not traces_raw:
        raise ConfigError("traces", "expected a non-empty list")

    convergence = _section(raw, "convergence")
    if "episode_start" in convergence and convergence["episode_start"] not in EPISODE_START:
        raise ConfigError("convergence.episode_start", f"expected one of {tuple(EPISODE_START)}")
    hardware = _section(raw, "hardware")
    for key in hardware:
        if key not in {f.name for f in fields(HardwareConfig)}:
            raise ConfigError(f"hardware.{key}", "unknown field")
    try:
        hw = HardwareConfig.from_dict(hardware)
    except (TypeError, ValueError) as exc:
        raise ConfigError("hardware", str(exc)) from None

    cfg = RunConfig(
        seed=seed,
        hardware=hw,
        hyperparameters=_build(Hyperparameters, _section(raw, "hyperparameters"), "hyperparameters"),
        convergence=_build(ConvergenceCriterion, convergence, "convergence"),
        experiment=raw.get("experiment", "all"),
        traces=tuple(_trace_source(e, i, base_dir) for i, e in enumerate(traces_raw)),
        days=raw.get("days", 90),
        output_dir=Path(raw.get("output_dir", "runs/default")),
        utc_offset_hours=float(raw.get("utc_offset_hours", 0.0)),
        dynamic=_build(DynamicOptions, _section(raw, "dynamic"), "dynamic"),
        fleet=_build(FleetOptions, _section(raw, "fleet"), "fleet"),
        transfer=_build(TransferOptions, _section(raw, "transfer"), "transfer"),
    )
    _check_run(cfg)
    return cfg


def load_config(path: Path | str | None, seed: int | None = None) -> RunConfig:
    """Read a YAML config file; ``None`` means all defaults."""
    if path is None:
        return parse_config({}, ".", seed)
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"{path} is not valid YAML: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("--config", f"{path} must contain a mapping")
    return parse_config(raw, path.parent, seed)
