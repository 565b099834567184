"""Experiment configuration: a YAML tree validated into typed sections."""
import copy
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np
import yaml
from scipy import stats

from . import leasing, montecarlo
from .channel import ChannelParams
from .leasing import PriceModel, ScipyPrice, UniformPrice
from .traffic import TrafficModel
from .utility import UtilitySpec, from_config


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _section(raw, name, allowed):
    sec = raw.get(name, {})
    if sec is None:
        sec = {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a mapping")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}", "unknown key")
    return sec


def _num(sec, path, key, default, kind=float, check=None, why=""):
    where = f"{path}.{key}" if path else key
    val = sec.get(key, default)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(where, f"expected a number, got {val!r}")
    if kind is int:
        if float(val) != int(val):
            raise ConfigError(where, f"expected an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
        if not math.isfinite(val):
            raise ConfigError(where, "must be finite")
    if check is not None and not check(val):
        raise ConfigError(where, why or f"invalid value {val!r}")
    return val


@dataclass
class UtilityConfig:
    family: str = "alpha_fair"
    alpha: Optional[float] = 1.0

    def build(self) -> UtilitySpec:
        return from_config(self.family, self.alpha)


@dataclass
class PriceConfig:
    reservation_price: float = 1.0
    utility_scale: float = 5.0
    sc_cap: float = 1024.0
    on_demand: Dict[str, Any] = field(default_factory=lambda: {"law": "uniform", "low": 0.8, "high": 1.8})

    def build_law(self):
        od = self.on_demand
        if od["law"] == "uniform":
            if "mean" in od:
                return UniformPrice.from_mean_cv(od["mean"], od["cv"])
            return UniformPrice(od["low"], od["high"])
        dist = getattr(stats, od["name"])(*od.get("args", []), **od.get("kwargs", {}))
        return ScipyPrice(dist)

    def build(self) -> PriceModel:
        return PriceModel(self.reservation_price, self.build_law(), self.utility_scale, self.sc_cap)


@dataclass
class TrafficConfig:
    k_low: Optional[int] = 0
    k_up: Optional[int] = 16
    pmf: Optional[List[float]] = None
    mean: Optional[int] = None
    cv: Optional[float] = None

    def build(self) -> TrafficModel:
        if self.pmf is not None:
            return TrafficModel(self.k_low, np.array(self.pmf, dtype=float))
        if self.mean is not None:
            return TrafficModel.from_mean_cv(self.mean, self.cv)
        return TrafficModel.uniform(self.k_low, self.k_up)


@dataclass
class SgdConfig:
    iters: int = 20_000
    eta0: float = leasing.DEFAULT_ETA0
    pf_fast_path: bool = True


@dataclass
class GridConfig:
    variable: str = "xi_cs"
    points: List[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.4])
    sessions: int = 10_000
    schemes: List[str] = field(default_factory=lambda: list(montecarlo.SCHEMES))

    def build(self, seed: int) -> montecarlo.ExperimentGrid:
        return montecarlo.ExperimentGrid(self.variable, tuple(self.points), self.sessions, seed,
                                         tuple(self.schemes))


@dataclass
class ValidateConfig:
    fixed_point_sets: int = 5
    fixed_point_restarts: int = 10
    ergodic_sessions: int = 3
    ergodic_slots: int = 100_000
    ergodic_subchannels: int = 8
    ergodic_max_users: int = 8
    sessions: int = 20_000
    recomposition_cases: int = 200


@dataclass
class ExperimentConfig:
    seed: int = 0
    workers: int = 0
    output: str = "out"
    channel: ChannelParams = field(default_factory=ChannelParams)
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    prices: PriceConfig = field(default_factory=PriceConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["channel"] = {f.name: getattr(self.channel, f.name) for f in fields(ChannelParams)
                        if getattr(self.channel, f.name) is not None}
        d["traffic"] = {k: v for k, v in d["traffic"].items() if v is not None}
        if d["utility"]["alpha"] is None:
            del d["utility"]["alpha"]
        return d

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def scenario(self) -> montecarlo.Scenario:
        return montecarlo.Scenario(self.traffic.build(), self.utility.build(), self.channel,
                                   self.prices.build(), self.sgd.iters, self.sgd.eta0,
                                   self.sgd.pf_fast_path)


TOP_KEYS = ("seed", "workers", "output", "channel", "utility", "prices", "traffic", "sgd", "grid", "validate")


def from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    """Validate a raw config tree; every failure names its field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = set(raw) - set(TOP_KEYS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    raw = copy.deepcopy(raw)
    cfg = ExperimentConfig()
    cfg.seed = _num(raw, "", "seed", 0, int, lambda v: v >= 0, "must be non-negative")
    cfg.workers = _num(raw, "", "workers", 0, int, lambda v: v >= 0, "must be non-negative (0 = all cores)")
    out = raw.get("output", "out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output", "must be a non-empty path string")
    cfg.output = out

    ch_keys = [f.name for f in fields(ChannelParams)]
    ch = _section(raw, "channel", ch_keys)
    kwargs = {}
    for k in ch_keys:
        if k in ch:
            kwargs[k] = _num(ch, "channel", k, None)
    if (ch.get("tx_power") is not None or ch.get("noise_psd") is not None) and "reference_snr_edge_db" not in ch:
        kwargs["reference_snr_edge_db"] = None
    try:
        cfg.channel = ChannelParams(**kwargs)
    except ValueError as e:
        raise ConfigError("channel", str(e)) from None

    ut = _section(raw, "utility", ["family", "alpha"])
    family = ut.get("family", "alpha_fair")
    if family not in ("alpha_fair", "exponential", "diminishing_return"):
        raise ConfigError("utility.family", f"unknown family {family!r}")
    alpha = _num(ut, "utility", "alpha", 1.0 if family == "alpha_fair" else None,
                 check=lambda v: v >= 0, why="must be non-negative")
    cfg.utility = UtilityConfig(family, alpha)

    pr = _section(raw, "prices", ["reservation_price", "utility_scale", "sc_cap", "on_demand"])
    pc = PriceConfig()
    pc.reservation_price = _num(pr, "prices", "reservation_price", 1.0, check=lambda v: v > 0, why="must be positive")
    pc.utility_scale = _num(pr, "prices", "utility_scale", 5.0, check=lambda v: v > 0, why="must be positive")
    pc.sc_cap = _num(pr, "prices", "sc_cap", 1024.0, check=lambda v: v > 0, why="must be positive")
    od = pr.get("on_demand", pc.on_demand)
    if not isinstance(od, dict):
        raise ConfigError("prices.on_demand", "must be a mapping")
    law = od.get("law", "uniform")
    if law == "uniform":
        if "mean" in od or "cv" in od:
            extra = set(od) - {"law", "mean", "cv"}
            mean = _num(od, "prices.on_demand", "mean", None, check=lambda v: v > 0, why="must be positive")
            cv = _num(od, "prices.on_demand", "cv", 0.0, check=lambda v: v >= 0, why="must be non-negative")
            if mean is None:
                raise ConfigError("prices.on_demand.mean", "required with cv")
            pc.on_demand = {"law": "uniform", "mean": mean, "cv": cv}
        else:
            extra = set(od) - {"law", "low", "high"}
            low = _num(od, "prices.on_demand", "low", 0.8)
            high = _num(od, "prices.on_demand", "high", 1.8)
            pc.on_demand = {"law": "uniform", "low": low, "high": high}
    elif law == "scipy":
        extra = set(od) - {"law", "name", "args", "kwargs"}
        name = od.get("name")
        if not isinstance(name, str) or not hasattr(stats, name):
            raise ConfigError("prices.on_demand.name", f"not a scipy.stats distribution: {name!r}")
        pc.on_demand = {"law": "scipy", "name": name, "args": list(od.get("args", [])),
                        "kwargs": dict(od.get("kwargs", {}))}
    else:
        raise ConfigError("prices.on_demand.law", f"must be 'uniform' or 'scipy', got {law!r}")
    if extra:
        raise ConfigError(f"prices.on_demand.{sorted(extra)[0]}", "unknown key")
    try:
        pc.build()
    except (ValueError, TypeError) as e:
        raise ConfigError("prices.on_demand", str(e)) from None
    cfg.prices = pc

    tr = _section(raw, "traffic", ["k_low", "k_up", "pmf", "mean", "cv"])
    tc = TrafficConfig()
    if "pmf" in tr:
        tc = TrafficConfig(_num(tr, "traffic", "k_low", 0, int), None, [float(p) for p in tr["pmf"]])
    elif "mean" in tr:
        tc = TrafficConfig(None, None, None, _num(tr, "traffic", "mean", None, int),
                           _num(tr, "traffic", "cv", 0.0))
    else:
        tc = TrafficConfig(_num(tr, "traffic", "k_low", 0, int), _num(tr, "traffic", "k_up", 16, int))
    try:
        tc.build()
    except ValueError as e:
        raise ConfigError("traffic", str(e)) from None
    cfg.traffic = tc

    sg = _section(raw, "sgd", ["iters", "eta0", "pf_fast_path"])
    fast = sg.get("pf_fast_path", True)
    if not isinstance(fast, bool):
        raise ConfigError("sgd.pf_fast_path", "must be true or false")
    cfg.sgd = SgdConfig(_num(sg, "sgd", "iters", 20_000, int, lambda v: v >= 1, "must be at least 1"),
                        _num(sg, "sgd", "eta0", leasing.DEFAULT_ETA0, check=lambda v: v > 0, why="must be positive"),
                        fast)

    gr = _section(raw, "grid", ["variable", "points", "sessions", "schemes"])
    gc = GridConfig()
    gc.variable = gr.get("variable", gc.variable)
    points = gr.get("points", gc.points)
    if not isinstance(points, list) or not all(isinstance(p, (int, float)) and not isinstance(p, bool)
                                               for p in points):
        raise ConfigError("grid.points", "must be a list of numbers")
    gc.points = [float(p) for p in points]
    gc.sessions = _num(gr, "grid", "sessions", gc.sessions, int)
    schemes = gr.get("schemes", gc.schemes)
    if not isinstance(schemes, list):
        raise ConfigError("grid.schemes", "must be a list")
    gc.schemes = [str(s) for s in schemes]
    try:
        grid = gc.build(cfg.seed)
    except ValueError as e:
        raise ConfigError("grid", str(e)) from None
    base = cfg.scenario() if family == "alpha_fair" else None
    if base is not None:
        for v in grid.points:
            try:
                montecarlo.apply_point(base, grid.variable, v)
            except ValueError as e:
                raise ConfigError("grid.points", f"{grid.variable}={v:g}: {e}") from None
    cfg.grid = gc

    va = _section(raw, "validate", [f.name for f in fields(ValidateConfig)])
    vc = ValidateConfig()
    for f in fields(ValidateConfig):
        setattr(vc, f.name, _num(va, "validate", f.name, getattr(vc, f.name), int,
                                 lambda v: v >= 1, "must be at least 1"))
    cfg.validate = vc
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("<file>", f"not valid YAML: {e}") from None
    return from_dict(raw or {})


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError("<file>", str(e)) from None
    return loads(text)
