"""Outage probability of the reporting link.

A transmission is lost when the instantaneous SNR falls below the decoding
threshold.  Under Rayleigh block fading with distance-power path loss the
channel gain is exponential, so the outage probability has a one-line closed
form; a fixed per-transmission loss probability can be given directly
instead.
"""
from __future__ import annotations

import math

from .errors import ConfigError
from .params import ChannelParams, DirectChannel, RayleighChannel


def outage_probability(channel: ChannelParams) -> float:
    if isinstance(channel, DirectChannel):
        return channel.p_out
    if isinstance(channel, RayleighChannel):
        exponent = (
            channel.path_loss_factor
            * channel.distance_m ** channel.path_loss_exp
            * channel.noise_watts
            * channel.snr_threshold
            / channel.rf_power_watts
        )
        return -math.expm1(-exponent)
    raise ConfigError(f"unknown channel model {channel!r}")
