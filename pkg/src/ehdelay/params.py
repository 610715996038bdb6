"""Protocol and channel parameter sets, unit helpers, and config file I/O.

Energies are micro-joules, powers in the config surface are milliwatts or
dBm, and every duration is counted in blocks; ``block_seconds`` only matters
when converting a power-style input into a per-block energy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import arrivals
from .arrivals import (
    ArrivalModel,
    Deterministic,
    Exponential,
    GammaArrival,
    Tabulated,
    mean_energy,
)
from .errors import ConfigError, NonIntegerMultipleError, NonPositiveError

DEFAULT_BLOCK_SECONDS = 5e-3


def dbm_to_watts(x_dbm: float) -> float:
    if not math.isfinite(x_dbm):
        raise ConfigError("dBm value must be finite")
    return 10.0 ** (x_dbm / 10.0) / 1000.0


def watts_to_dbm(p_watts: float) -> float:
    if not (p_watts > 0 and math.isfinite(p_watts)):
        raise NonPositiveError("power must be positive and finite")
    return 10.0 * math.log10(p_watts * 1000.0)


def energy_from_power_mw(power_mw: float, block_seconds: float) -> float:
    """Per-block energy in micro-joules of a device drawing ``power_mw``."""
    if not (block_seconds > 0 and math.isfinite(block_seconds)):
        raise NonPositiveError("block duration must be positive")
    if not (power_mw >= 0 and math.isfinite(power_mw)):
        raise NonPositiveError("power must be >= 0 and finite")
    return power_mw * 1e-3 * block_seconds * 1e6


@dataclass(frozen=True)
class ProtocolParams:
    """Sensing/transmission energies and the retransmission window."""

    w: int                  # latest admissible transmission, blocks after sensing
    e_sen: float            # micro-joules consumed by a sensing block
    e_tx: float             # micro-joules consumed by each transmission
    block_seconds: float = DEFAULT_BLOCK_SECONDS


@dataclass(frozen=True)
class DirectChannel:
    """Outage probability given directly."""

    p_out: float


@dataclass(frozen=True)
class RayleighChannel:
    """Rayleigh block fading with distance-power path loss."""

    distance_m: float
    path_loss_exp: float
    noise_watts: float
    snr_threshold: float      # linear
    rf_power_watts: float
    path_loss_factor: float = 1.0


ChannelParams = Union[DirectChannel, RayleighChannel]


@dataclass(frozen=True)
class ValidatedConfig:
    protocol: ProtocolParams
    arrival: ArrivalModel
    channel: ChannelParams | None = None


def _require(cond: bool, msg: str, exc=NonPositiveError) -> None:
    if not cond:
        raise exc(msg)


def validate(protocol: ProtocolParams, arrival: ArrivalModel,
             channel: ChannelParams | None = None) -> ValidatedConfig:
    """Bounds-check a configuration; raises ConfigError subclasses."""
    _require(isinstance(protocol.w, (int, np.integer)) and protocol.w >= 1,
             f"window must be an integer >= 1, got {protocol.w!r}")
    _require(protocol.e_tx > 0 and math.isfinite(protocol.e_tx),
             "transmission energy must be positive")
    _require(protocol.e_sen >= 0 and math.isfinite(protocol.e_sen),
             "sensing energy must be >= 0")
    _require(protocol.block_seconds > 0 and math.isfinite(protocol.block_seconds),
             "block duration must be positive")

    if isinstance(arrival, (Deterministic, Exponential)):
        _require(arrival.rho > 0 and math.isfinite(arrival.rho),
                 "per-block harvest must be positive")
    elif isinstance(arrival, GammaArrival):
        _require(arrival.shape > 0 and math.isfinite(arrival.shape),
                 "gamma shape must be positive")
        _require(arrival.scale > 0 and math.isfinite(arrival.scale),
                 "gamma scale must be positive")
    elif isinstance(arrival, Tabulated):
        _require(mean_energy(arrival) > 0, "tabulated mean harvest must be positive")
    else:
        raise ConfigError(f"unknown arrival model {arrival!r}")

    if isinstance(arrival, Deterministic):
        # closed forms for this variant index everything in whole blocks
        for name, e in (("e_tx", protocol.e_tx), ("e_sen", protocol.e_sen)):
            ratio = e / arrival.rho
            if not math.isclose(ratio, round(ratio), rel_tol=0.0,
                                abs_tol=1e-9 * max(1.0, ratio)):
                raise NonIntegerMultipleError(
                    f"deterministic arrivals need {name}={e} to be an integer "
                    f"multiple of rho={arrival.rho}"
                )

    if isinstance(channel, DirectChannel):
        _require(0.0 <= channel.p_out <= 1.0,
                 f"outage probability must lie in [0, 1], got {channel.p_out!r}",
                 ConfigError)
    elif isinstance(channel, RayleighChannel):
        _require(channel.distance_m > 0, "distance must be positive")
        _require(channel.path_loss_exp > 0, "path-loss exponent must be positive")
        _require(channel.noise_watts > 0, "noise power must be positive")
        _require(channel.snr_threshold > 0, "SNR threshold must be positive")
        _require(channel.rf_power_watts > 0, "RF power must be positive")
        _require(channel.path_loss_factor > 0, "path-loss factor must be positive")
    elif channel is not None:
        raise ConfigError(f"unknown channel model {channel!r}")

    return ValidatedConfig(protocol, arrival, channel)


def default_config() -> ValidatedConfig:
    """Reference sensor: 5 ms blocks, 10 mW harvest, 40 mW transmit power,
    50 mW sensing power, 90 m Rayleigh link."""
    protocol = ProtocolParams(w=50, e_sen=250.0, e_tx=200.0,
                              block_seconds=DEFAULT_BLOCK_SECONDS)
    arrival = Exponential(rho=50.0)
    channel = RayleighChannel(
        distance_m=90.0,
        path_loss_exp=3.0,
        noise_watts=dbm_to_watts(-100.0),
        snr_threshold=10.0 ** (40.0 / 10.0),
        rf_power_watts=dbm_to_watts(-5.0),
        path_loss_factor=1.0,
    )
    return validate(protocol, arrival, channel)


def _arrival_from_dict(d: dict, base_dir) -> ArrivalModel:
    kind = str(d.get("kind", "")).lower()
    if kind in ("det", "deterministic"):
        return Deterministic(rho=float(d["rho"]))
    if kind in ("exp", "exponential"):
        return Exponential(rho=float(d["rho"]))
    if kind == "gamma":
        return GammaArrival(shape=float(d["shape"]), scale=float(d["scale"]))
    if kind in ("tab", "tabulated"):
        path = d["path"]
        if base_dir is not None and not str(path).startswith("/"):
            path = base_dir / path
        return arrivals.load_tabulated(path)
    raise ConfigError(f"unknown arrival kind {d.get('kind')!r}")


def _channel_from_dict(d: dict) -> ChannelParams:
    if "p_out" in d:
        extra = set(d) - {"p_out"}
        if extra:
            raise ConfigError(
                f"direct channel takes only p_out, got extra keys {sorted(extra)}"
            )
        return DirectChannel(p_out=float(d["p_out"]))
    known = {"distance_m", "path_loss_exp", "noise_dbm", "noise_watts",
             "rf_power_dbm", "rf_power_watts", "snr_threshold_db",
             "snr_threshold", "path_loss_factor"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown channel keys {sorted(extra)}")
    if "noise_dbm" in d and "noise_watts" in d:
        raise ConfigError("give noise_dbm or noise_watts, not both")
    if "rf_power_dbm" in d and "rf_power_watts" in d:
        raise ConfigError("give rf_power_dbm or rf_power_watts, not both")
    if "snr_threshold_db" in d and "snr_threshold" in d:
        raise ConfigError("give snr_threshold_db or snr_threshold, not both")
    noise = (dbm_to_watts(float(d["noise_dbm"])) if "noise_dbm" in d
             else float(d["noise_watts"]))
    power = (dbm_to_watts(float(d["rf_power_dbm"])) if "rf_power_dbm" in d
             else float(d["rf_power_watts"]))
    thresh = (10.0 ** (float(d["snr_threshold_db"]) / 10.0)
              if "snr_threshold_db" in d else float(d["snr_threshold"]))
    return RayleighChannel(
        distance_m=float(d["distance_m"]),
        path_loss_exp=float(d["path_loss_exp"]),
        noise_watts=noise,
        snr_threshold=thresh,
        rf_power_watts=power,
        path_loss_factor=float(d.get("path_loss_factor", 1.0)),
    )


def _protocol_from_dict(d: dict) -> ProtocolParams:
    block = float(d.get("block_seconds", DEFAULT_BLOCK_SECONDS))
    if "e_sen" in d and "p_sen_mw" in d:
        raise ConfigError("give e_sen or p_sen_mw, not both")
    if "e_tx" in d and "p_tx_mw" in d:
        raise ConfigError("give e_tx or p_tx_mw, not both")
    e_sen = (energy_from_power_mw(float(d["p_sen_mw"]), block)
             if "p_sen_mw" in d else float(d["e_sen"]))
    e_tx = (energy_from_power_mw(float(d["p_tx_mw"]), block)
            if "p_tx_mw" in d else float(d["e_tx"]))
    return ProtocolParams(w=int(d["w"]), e_sen=e_sen, e_tx=e_tx,
                          block_seconds=block)


def load_config(path) -> ValidatedConfig:
    """Read a JSON config with ``protocol``, ``arrival``, and optionally
    ``channel`` sections."""
    import pathlib

    p = pathlib.Path(path)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    try:
        protocol = _protocol_from_dict(raw["protocol"])
        arrival = _arrival_from_dict(raw["arrival"], p.parent)
        channel = _channel_from_dict(raw["channel"]) if "channel" in raw else None
    except KeyError as e:
        raise ConfigError(f"config {path} is missing key {e}") from None
    return validate(protocol, arrival, channel)


def arrival_to_dict(arrival: ArrivalModel) -> dict:
    if isinstance(arrival, Deterministic):
        return {"kind": "deterministic", "rho": arrival.rho}
    if isinstance(arrival, Exponential):
        return {"kind": "exponential", "rho": arrival.rho}
    if isinstance(arrival, GammaArrival):
        return {"kind": "gamma", "shape": arrival.shape, "scale": arrival.scale}
    if isinstance(arrival, Tabulated):
        return {"kind": "tabulated", "step": arrival.step,
                "cells": int(arrival.values.size)}
    raise ConfigError(f"unknown arrival model {arrival!r}")


def config_to_dict(cfg: ValidatedConfig) -> dict:
    """Plain-dict view used for provenance headers and JSON output."""
    out: dict = {
        "protocol": {
            "w": cfg.protocol.w,
            "e_sen": cfg.protocol.e_sen,
            "e_tx": cfg.protocol.e_tx,
            "block_seconds": cfg.protocol.block_seconds,
        },
        "arrival": arrival_to_dict(cfg.arrival),
    }
    if isinstance(cfg.channel, DirectChannel):
        out["channel"] = {"p_out": cfg.channel.p_out}
    elif isinstance(cfg.channel, RayleighChannel):
        out["channel"] = {
            "distance_m": cfg.channel.distance_m,
            "path_loss_exp": cfg.channel.path_loss_exp,
            "noise_watts": cfg.channel.noise_watts,
            "snr_threshold": cfg.channel.snr_threshold,
            "rf_power_watts": cfg.channel.rf_power_watts,
            "path_loss_factor": cfg.channel.path_loss_factor,
        }
    return out
