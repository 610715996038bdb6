"""Unit conversions, parameter validation and config round-trips."""
from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, strategies as st

from ehdelay import (
    ConfigError,
    Deterministic,
    Exponential,
    GammaArrival,
    NonIntegerMultipleError,
    NonPositiveError,
    ProtocolParams,
    RayleighChannel,
    Tabulated,
    arrivals,
    dbm_to_watts,
    default_config,
    energy_from_power_mw,
    load_config,
    validate,
    watts_to_dbm,
)
from ehdelay.params import arrival_to_dict, config_to_dict


def test_dbm_spot_values():
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watts(-5.0) == pytest.approx(0.00031622776601683794, rel=1e-15)
    assert dbm_to_watts(-100.0) == pytest.approx(1e-13, rel=1e-12)
    assert watts_to_dbm(1e-3) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(min_value=-150.0, max_value=60.0))
def test_dbm_roundtrip(x):
    assert watts_to_dbm(dbm_to_watts(x)) == pytest.approx(x, abs=1e-9)


def test_energy_from_power():
    # 50 mW over a 5 ms block is 250 uJ; 40 mW is 200 uJ
    assert energy_from_power_mw(50.0, 0.005) == pytest.approx(250.0)
    assert energy_from_power_mw(40.0, 0.005) == pytest.approx(200.0)
    assert energy_from_power_mw(0.0, 0.005) == 0.0


def test_default_config_is_selfconsistent():
    cfg = default_config()
    assert cfg.protocol.w == 50
    assert cfg.protocol.e_sen == pytest.approx(250.0)
    assert cfg.protocol.e_tx == pytest.approx(200.0)
    assert cfg.protocol.block_seconds == pytest.approx(0.005)
    assert isinstance(cfg.arrival, Exponential)
    assert cfg.arrival.rho == pytest.approx(50.0)
    ch = cfg.channel
    assert isinstance(ch, RayleighChannel)
    assert ch.distance_m == pytest.approx(90.0)
    assert ch.path_loss_exp == pytest.approx(3.0)
    assert ch.noise_watts == pytest.approx(1e-13, rel=1e-9)
    assert ch.snr_threshold == pytest.approx(1e4)
    assert ch.rf_power_watts == pytest.approx(dbm_to_watts(-5.0))
    # revalidating the default must be a no-op
    validate(cfg.protocol, cfg.arrival, cfg.channel)


@pytest.mark.parametrize(
    "kw",
    [
        dict(w=0, e_sen=250.0, e_tx=200.0),
        dict(w=-3, e_sen=250.0, e_tx=200.0),
        dict(w=50, e_sen=-1.0, e_tx=200.0),
        dict(w=50, e_sen=250.0, e_tx=0.0),
        dict(w=50, e_sen=250.0, e_tx=200.0, block_seconds=0.0),
    ],
)
def test_protocol_validation_rejects(kw):
    with pytest.raises((NonPositiveError, ConfigError)):
        validate(ProtocolParams(**kw), Exponential(50.0))


def test_validate_rejects_bad_arrivals():
    p = ProtocolParams(w=50, e_sen=250.0, e_tx=200.0)
    with pytest.raises(NonPositiveError):
        validate(p, Exponential(0.0))
    with pytest.raises(NonPositiveError):
        validate(p, Deterministic(-5.0))
    with pytest.raises(NonPositiveError):
        validate(p, GammaArrival(0.0, 1000.0))
    # deterministic energy must divide both spend levels evenly, else the
    # battery walks off the lattice and the chain never empties exactly
    with pytest.raises(NonIntegerMultipleError):
        validate(p, Deterministic(33.0))


def test_validate_accepts_det_on_lattice():
    p = ProtocolParams(w=50, e_sen=250.0, e_tx=200.0)
    validate(p, Deterministic(50.0))
    validate(p, Deterministic(25.0))


def test_config_json_roundtrip(tmp_path):
    cfg = default_config()
    doc = config_to_dict(cfg)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    back = load_config(path)
    assert back.protocol == cfg.protocol
    assert back.arrival == cfg.arrival
    assert back.channel == cfg.channel


def test_config_roundtrip_all_models(tmp_path):
    models = [
        Deterministic(50.0),
        Exponential(50.0),
        GammaArrival(0.05, 1000.0),
    ]
    for i, m in enumerate(models):
        cfg = default_config()
        doc = config_to_dict(cfg)
        doc["arrival"] = arrival_to_dict(m)
        path = tmp_path / f"cfg{i}.json"
        path.write_text(json.dumps(doc))
        assert load_config(path).arrival == m


def test_load_config_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    path.write_text(json.dumps({"protocol": {"w": 50}}))
    with pytest.raises(ConfigError):
        load_config(path)


def test_mean_energy():
    assert arrivals.mean_energy(Deterministic(50.0)) == 50.0
    assert arrivals.mean_energy(Exponential(50.0)) == 50.0
    assert arrivals.mean_energy(GammaArrival(0.05, 1000.0)) == pytest.approx(50.0)


def test_tabulated_must_be_normalized():
    with pytest.raises(ConfigError):
        Tabulated(1.0, [0.5, 0.2])  # integrates to 0.7
    with pytest.raises((NonPositiveError, ConfigError)):
        Tabulated(0.0, [1.0])
    with pytest.raises(ConfigError):
        Tabulated(1.0, [0.5, -0.5, 1.0])
    # a valid table reports its discrete mean
    t = Tabulated(1.0, [0.0, 0.0, 1.0])  # all mass in the cell at 2 uJ
    assert arrivals.mean_energy(t) == pytest.approx(2.0)
    assert math.isclose(float(t.values.sum()) * t.step, 1.0)
