"""Experiment configuration: dataclass defaults, INI files, and CLI overrides."""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass, field

from .core import FiberChannel, NoiseModel, PulseBank, TemporalGrid
from .recovery import Backtracking, ChannelContext, RecoveryConfig, ShrinkageKind, UnfoldedParams
from .unfolding import TrainConfig, config_hash

SCENARIOS = ("sparse", "qpsk", "validate")


class ConfigError(ValueError):
    pass


@dataclass
class BankSettings:
    n: int = 30
    t0: float = 1.0
    margin: float = 6.0
    spacing: float | None = None


@dataclass
class RecoverySettings:
    iterations: int = 30
    eta0: float = 0.01
    theta0: float = 0.001
    readout: str = "peak"
    backtracking: bool = False
    bt_tau: float = 0.5
    bt_sigma: float = 0.1
    bt_max_halvings: int = 20


@dataclass
class TrainingSettings:
    iterations: int = 100
    lr: float = 1e-4
    val_every: int = 10
    val_size: int = 20
    incremental: bool = False
    params: str | None = None  # pre-trained parameter JSON; trains when unset


@dataclass
class ExperimentConfig:
    scenario: str = "sparse"
    trials: int = 100
    seed: int = 0
    snr_db: float = 15.0
    snr_sweep: list = field(default_factory=lambda: [5.0, 10.0, 15.0, 20.0])
    k: int = 3
    out: str = "results"
    format: str = "csv"
    workers: int = 1
    grid: TemporalGrid = field(default_factory=TemporalGrid)
    channel: FiberChannel = field(default_factory=FiberChannel)
    bank: BankSettings = field(default_factory=BankSettings)
    recovery: RecoverySettings = field(default_factory=RecoverySettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        if not 0 <= self.k <= self.bank.n:
            raise ConfigError("k must lie in [0, n]")
        try:
            self.context()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    @property
    def shrinkage(self) -> ShrinkageKind:
        return ShrinkageKind.QPSK_TANH if self.scenario == "qpsk" else ShrinkageKind.SOFT

    def context(self) -> ChannelContext:
        b = self.bank
        bank = PulseBank.evenly_spaced(b.n, self.grid, b.t0, b.margin, b.spacing)
        return ChannelContext(self.grid, bank, self.channel)

    def noise(self) -> NoiseModel:
        return NoiseModel(self.snr_db)

    def init_params(self) -> UnfoldedParams:
        r = self.recovery
        return UnfoldedParams.constant(r.iterations, r.eta0, r.theta0)

    def recovery_config(self, params: UnfoldedParams) -> RecoveryConfig:
        r = self.recovery
        bt = Backtracking(r.bt_tau, r.bt_sigma, r.bt_max_halvings) if r.backtracking else None
        return RecoveryConfig(params, self.shrinkage, bt, r.readout)

    def train_config(self) -> TrainConfig:
        t, r = self.training, self.recovery
        return TrainConfig(
            iterations=t.iterations, layers=r.iterations, eta0=r.eta0, theta0=r.theta0,
            lr=t.lr, seed=self.seed, snr_db=self.snr_db, k=self.k, shrinkage=self.shrinkage,
            val_every=t.val_every, val_size=t.val_size, incremental=t.incremental,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())


def default_config(scenario: str = "sparse") -> ExperimentConfig:
    """Defaults for each scenario; qpsk uses n = 15 over L = 0.5."""
    cfg = ExperimentConfig(scenario=scenario)
    if scenario == "qpsk":
        cfg.channel = FiberChannel(length=0.5)
        cfg.bank = BankSettings(n=15)
        cfg.recovery = RecoverySettings(theta0=2.0)
        cfg.trials = 40
        cfg.training.val_every = 0
    return cfg


def _coerce(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return [float(v) for v in raw.split(",") if v.strip()]
        if default is None:
            if raw.lower() in ("", "none"):
                return None
            try:
                return float(raw)
            except ValueError:
                return raw
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _apply(obj, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(obj)}
    updates = {}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown key [{section}] {key}")
        updates[key] = _coerce(raw, getattr(obj, key), f"[{section}] {key}")
    return dataclasses.replace(obj, **updates)


def load_config(path, scenario: str | None = None) -> ExperimentConfig:
    """Read an INI file; ``[experiment]`` holds top-level keys, other sections sub-configs."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    top = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    scen = scenario or top.get("scenario", "sparse").strip()
    cfg = default_config(scen)
    sub = {f.name for f in dataclasses.fields(cfg) if dataclasses.is_dataclass(getattr(cfg, f.name))}
    for section in parser.sections():
        if section == "experiment":
            continue
        if section not in sub:
            raise ConfigError(f"unknown section [{section}]")
        try:
            setattr(cfg, section, _apply(getattr(cfg, section), dict(parser[section]), section))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    top.pop("scenario", None)
    cfg = _apply(cfg, top, "experiment")
    cfg.scenario = scen
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """INI text that ``load_config`` reads back to the same configuration."""
    parser = configparser.ConfigParser()
    top, sections = {}, {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            sections[f.name] = {k: _fmt(x) for k, x in dataclasses.asdict(v).items()}
        else:
            top[f.name] = _fmt(v)
    parser["experiment"] = top
    for name, vals in sections.items():
        parser[name] = vals
    from io import StringIO
    buf = StringIO()
    parser.write(buf)
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, list):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, (dict, tuple)):
        return json.dumps(v)
    return str(v)
