"""Timing advance from the position of the correlation peak."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelConfig, mean_channel_delay_samples
from .errors import EstimationError, LabelError
from .zc import PreambleConfig

SPEED_OF_LIGHT = 3e8
SCHEMES = ("exact", "tol1")


@dataclass(frozen=True)
class TaEstimate:
    ta_bins: int
    ta_time_samples: float
    ta_meters: float


@dataclass(frozen=True)
class TaGroundTruth:
    scheme: str
    value_bins: int

    def correct(self, estimate_bins: int) -> bool:
        tol = 1 if self.scheme == "tol1" else 0
        return abs(int(estimate_bins) - self.value_bins) <= tol


def ta_units(ta_bins: int, n_fft: int = 4096, l_ra: int = 139, scs_hz: float = 30e3) -> TaEstimate:
    samples = ta_bins * n_fft / l_ra
    meters = samples * SPEED_OF_LIGHT / (n_fft * scs_hz)
    return TaEstimate(int(ta_bins), samples, meters)


def peak_shift(power: np.ndarray) -> np.ndarray:
    """Bins between the peak and the rightmost bin, along the last axis.

    Ties resolve to the rightmost maximum (smallest shift).
    """
    power = np.asarray(power)
    return np.argmax(power[..., ::-1], axis=-1)


def estimate_ta(w, p: PreambleConfig | None = None) -> TaEstimate:
    """Peak-detection TA for a window judged to contain a user."""
    power = w.power_features()
    if not np.any(power > 0):
        raise EstimationError("window has no energy; cannot locate a peak")
    p = p or PreambleConfig(n_cs=len(power))
    return ta_units(int(peak_shift(power)), p.n_fft, p.l_ra, p.scs_hz)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def truth_bins(delay_samples: float, channel: ChannelConfig, p: PreambleConfig) -> int:
    """Distance delay plus the channel's mean excess delay, in whole bins."""
    total = delay_samples + mean_channel_delay_samples(channel, p)
    return round_half_up(total / p.samples_per_bin)


def make_ground_truth(delay_samples: float, channel: ChannelConfig, scheme: str = "exact",
                      p: PreambleConfig | None = None) -> TaGroundTruth:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; valid: {', '.join(SCHEMES)}")
    p = p or PreambleConfig()
    value = truth_bins(delay_samples, channel, p)
    if not 0 <= value <= p.n_cs - 1:
        raise LabelError(f"TA label {value} bins outside 0..{p.n_cs - 1}")
    return TaGroundTruth(scheme, value)
