"""Reception model: propagation delay, TDL fading, multi-antenna AWGN.

Per received antenna ``i`` and PRACH subcarrier ``k``::

    y_i(k) = h_i(k) * y_{u,v}(k) * exp(-2j*pi*k*delay/N) + w_i(k)

The delay ramp is applied per subcarrier (a constant phase could not move
the correlation peak).  The preamble is scaled to unit power per RE, so
``snr_db`` is the per-RE SNR on the PRACH subcarriers.

Random draws for one realization always happen in the same order (tap
gains, then noise) from one generator, so batched and single-instance
simulation produce identical bits for the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .zc import PreambleConfig, preamble_freq

CHANNEL_MODELS = ("awgn", "tdlc300")

# 3GPP TR 38.901 Table 7.7.2-3 (TDL-C), delays normalized to the RMS delay spread
TDL_C_DELAYS = np.array([
    0.0, 0.2099, 0.2219, 0.2329, 0.2176, 0.6366, 0.6448, 0.6560, 0.6584, 0.7935,
    0.8213, 0.9336, 1.2285, 1.3083, 2.1704, 2.7105, 4.2589, 4.6003, 5.4902, 5.6077,
    6.3065, 6.6374, 7.0427, 8.6523])
TDL_C_POWERS_DB = np.array([
    -4.4, -1.2, -3.5, -5.2, -2.5, 0.0, -2.2, -3.9, -7.4, -7.1, -10.7, -11.1, -5.1,
    -6.8, -8.7, -13.2, -13.9, -13.9, -15.8, -17.1, -16.0, -15.7, -21.6, -22.8])


def tdl_c_profile(delay_spread_s: float = 300e-9) -> tuple[np.ndarray, np.ndarray]:
    """Tap delays in seconds and linear tap powers summing to one."""
    powers = 10.0 ** (TDL_C_POWERS_DB / 10.0)
    return TDL_C_DELAYS * delay_spread_s, powers / powers.sum()


@dataclass(frozen=True)
class ChannelConfig:
    model: str = "awgn"
    num_rx: int = 1
    delay_spread_s: float = 300e-9
    snr_db: float = math.inf
    delay_samples: float = 0.0
    seed: int | tuple = 0

    def __post_init__(self):
        if self.model not in CHANNEL_MODELS:
            raise ConfigError(
                f"unknown channel model {self.model!r}; valid: {', '.join(CHANNEL_MODELS)}")
        if self.num_rx < 1:
            raise ConfigError(f"num_rx must be >= 1, got {self.num_rx}")
        if self.delay_samples < 0:
            raise ConfigError("delay_samples must be non-negative")
        if self.delay_spread_s < 0:
            raise ConfigError("delay_spread_s must be non-negative")

    def replace(self, **changes) -> "ChannelConfig":
        return replace(self, **changes)


@dataclass
class RxGrid:
    """Received PRACH REs, one row per antenna."""

    antennas: np.ndarray
    preamble: PreambleConfig | None = None
    channel: ChannelConfig | None = None
    user_present: bool | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.antennas = np.atleast_2d(np.asarray(self.antennas, dtype=complex))

    @property
    def num_rx(self) -> int:
        return self.antennas.shape[0]

    def scaled(self, factor: float) -> "RxGrid":
        return RxGrid(self.antennas * factor, self.preamble, self.channel,
                      self.user_present, dict(self.meta))


def mean_channel_delay_samples(ccfg: ChannelConfig, pcfg: PreambleConfig) -> float:
    """Power-weighted mean tap delay in time samples (0 for AWGN)."""
    if ccfg.model == "awgn":
        return 0.0
    delays, powers = tdl_c_profile(ccfg.delay_spread_s)
    return float(np.sum(delays * powers) * pcfg.n_fft * pcfg.scs_hz)


def apply_delay(y: np.ndarray, delay_samples: float, n_fft: int) -> np.ndarray:
    """Multiply RE ``k`` by ``exp(-2j*pi*k*delay_samples/n_fft)``."""
    if delay_samples < 0:
        raise ValueError("delay must be non-negative")
    y = np.asarray(y, dtype=complex)
    k = np.arange(y.shape[-1])
    return y * np.exp(-2j * np.pi * k * delay_samples / n_fft)


@lru_cache(maxsize=16)
def _tap_steering(model: str, delay_spread_s: float, l_ra: int, scs_hz: float):
    delays, powers = tdl_c_profile(delay_spread_s)
    k = np.arange(l_ra)
    steer = np.exp(-2j * np.pi * np.outer(delays, k) * scs_hz)  # (taps, L)
    steer.setflags(write=False)
    return np.sqrt(powers), steer


def draw_channel(cfg: ChannelConfig, l_ra: int, rng: np.random.Generator,
                 scs_hz: float = 30e3) -> np.ndarray:
    """Block-fading frequency response ``h_i(k)``, shape ``(num_rx, l_ra)``."""
    if cfg.model == "awgn":
        return np.ones((cfg.num_rx, l_ra), dtype=complex)
    if cfg.model == "tdlc300":
        amp, steer = _tap_steering(cfg.model, cfg.delay_spread_s, l_ra, scs_hz)
        g = rng.standard_normal((cfg.num_rx, amp.size, 2))
        taps = (g[..., 0] + 1j * g[..., 1]) * (amp / math.sqrt(2.0))
        return taps @ steer
    raise ConfigError(f"unknown channel model {cfg.model!r}; valid: {', '.join(CHANNEL_MODELS)}")


def noise_variance(snr_db: float) -> float:
    return 0.0 if math.isinf(snr_db) and snr_db > 0 else 10.0 ** (-snr_db / 10.0)


def draw_noise(num_rx: int, l_ra: int, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    var = noise_variance(snr_db)
    if var == 0.0:
        return np.zeros((num_rx, l_ra), dtype=complex)
    w = rng.standard_normal((num_rx, l_ra, 2))
    return (w[..., 0] + 1j * w[..., 1]) * math.sqrt(var / 2.0)


def add_awgn(grid: RxGrid, snr_db: float, rng: np.random.Generator) -> RxGrid:
    """Return a copy of ``grid`` with per-RE noise of variance 10**(-snr_db/10)."""
    n_rx, l_ra = grid.antennas.shape
    return RxGrid(grid.antennas + draw_noise(n_rx, l_ra, snr_db, rng), grid.preamble,
                  grid.channel, grid.user_present, dict(grid.meta))


def check_delay(ccfg: ChannelConfig, pcfg: PreambleConfig) -> None:
    limit = pcfg.n_cs * pcfg.samples_per_bin
    if not ccfg.delay_samples < limit:
        raise ConfigError(
            f"delay {ccfg.delay_samples} samples would leave the {pcfg.n_cs}-bin window "
            f"(limit {limit:.2f})")


def simulate_reception(p: PreambleConfig, c: ChannelConfig, user_present: bool = True) -> RxGrid:
    """One PRACH occasion; deterministic given ``c.seed``."""
    check_delay(c, p)
    rng = np.random.default_rng(c.seed)
    h = draw_channel(c, p.l_ra, rng, p.scs_hz)
    noise = draw_noise(c.num_rx, p.l_ra, c.snr_db, rng)
    if user_present:
        y = apply_delay(preamble_freq(p) / math.sqrt(p.l_ra), c.delay_samples, p.n_fft)
        rx = h * y + noise
    else:
        rx = noise
    return RxGrid(rx, p, c, user_present)


def simulate_superposition(users: Sequence[tuple[PreambleConfig, float]], c: ChannelConfig,
                           ) -> RxGrid:
    """Several non-colliding users, each with an independent channel.

    ``users`` holds ``(preamble, delay_samples)`` pairs.  Noise is drawn once
    after all channels.
    """
    rng = np.random.default_rng(c.seed)
    rx = None
    for p, delay in users:
        check_delay(c.replace(delay_samples=delay), p)
        h = draw_channel(c, p.l_ra, rng, p.scs_hz)
        y = apply_delay(preamble_freq(p) / math.sqrt(p.l_ra), delay, p.n_fft)
        rx = h * y if rx is None else rx + h * y
    p0 = users[0][0]
    rx = rx + draw_noise(c.num_rx, p0.l_ra, c.snr_db, rng)
    return RxGrid(rx, p0, c, True, {"users": [(p.u, p.v, d) for p, d in users]})
