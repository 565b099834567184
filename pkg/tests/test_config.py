import copy
from pathlib import Path

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from spectrum_leasing.config import ConfigError, ExperimentConfig, from_dict, load, loads
from spectrum_leasing.leasing import ScipyPrice, UniformPrice

CONFIGS = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.yaml"))


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_bundled_configs_load_and_round_trip(path):
    cfg = load(path)
    again = loads(cfg.dump())
    assert again == cfg
    assert again.dump() == cfg.dump()


def test_defaults_fill_missing_sections():
    cfg = loads("seed: 3\n")
    assert cfg.seed == 3
    assert cfg.traffic.build().k_up == 16
    assert isinstance(cfg.prices.build().on_demand, UniformPrice)
    assert cfg == ExperimentConfig(seed=3)


@given(seed=st.integers(0, 2 ** 31), alpha=st.sampled_from([0.5, 1.0, 2.0]), mean=st.floats(1.05, 2.0),
       cv=st.floats(0.0, 0.5), k_mean=st.integers(4, 12), k_cv=st.floats(0.0, 0.4),
       sessions=st.integers(1000, 50_000))
def test_round_trip_is_lossless(seed, alpha, mean, cv, k_mean, k_cv, sessions):
    raw = {
        "seed": seed,
        "utility": {"family": "alpha_fair", "alpha": alpha},
        "prices": {"reservation_price": 1.0, "utility_scale": 5.0,
                   "on_demand": {"law": "uniform", "mean": mean, "cv": cv}},
        "traffic": {"mean": k_mean, "cv": k_cv},
        "grid": {"variable": "mu_cs", "points": [1.1, 1.5], "sessions": sessions},
    }
    cfg = from_dict(raw)
    assert loads(cfg.dump()) == cfg


def test_scipy_price_law():
    cfg = loads("prices: {on_demand: {law: scipy, name: gamma, args: [4.0], kwargs: {scale: 0.35}}}\n"
                "grid: {variable: xi_k, points: [0.2]}\ntraffic: {mean: 8, cv: 0.3}\n")
    law = cfg.prices.build().on_demand
    assert isinstance(law, ScipyPrice)
    assert law.mean == pytest.approx(1.4)
    assert loads(cfg.dump()) == cfg


BASE = {"grid": {"variable": "xi_cs", "points": [0.0, 0.2], "sessions": 1000}}


@pytest.mark.parametrize("patch,field", [
    ({"seed": -1}, "seed"),
    ({"seed": "x"}, "seed"),
    ({"colour": 1}, "colour"),
    ({"utility": {"family": "cubic"}}, "utility.family"),
    ({"utility": {"alpha": -1}}, "utility.alpha"),
    ({"prices": {"on_demand": {"law": "uniform", "low": 0.0, "high": 1.0}}}, "prices.on_demand"),
    ({"prices": {"on_demand": {"law": "uniform", "mean": 1.0, "cv": 0.7}}}, "prices.on_demand"),
    ({"prices": {"on_demand": {"law": "scipy", "name": "nope"}}}, "prices.on_demand.name"),
    ({"prices": {"on_demand": {"law": "pareto"}}}, "prices.on_demand.law"),
    ({"prices": {"reservation_price": 0}}, "prices"),
    ({"traffic": {"k_low": 5, "k_up": 2}}, "traffic"),
    ({"traffic": {"mean": 8, "cv": 3.0}}, "traffic"),
    ({"grid": {"points": []}}, "grid"),
    ({"grid": {"points": [0.0, 0.7]}}, "grid.points"),
    ({"grid": {"points": "0.1"}}, "grid.points"),
    ({"grid": {"sessions": 10}}, "grid"),
    ({"sgd": {"iters": 0}}, "sgd.iters"),
    ({"sgd": {"pf_fast_path": "yes"}}, "sgd.pf_fast_path"),
    ({"channel": {"capacity_margin": 0.5}}, "channel"),
    ({"validate": {"sessions": 0}}, "validate.sessions"),
])
def test_invalid_fields_are_named(patch, field):
    raw = copy.deepcopy(BASE)
    for k, v in patch.items():
        if isinstance(v, dict) and isinstance(raw.get(k), dict):
            raw[k].update(v)
        else:
            raw[k] = v
    with pytest.raises(ConfigError) as exc:
        from_dict(raw)
    assert exc.value.path.startswith(field)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [1,\n")
    with pytest.raises(ConfigError):
        load(bad)
    with pytest.raises(ConfigError):
        loads(yaml.safe_dump([1, 2]))
