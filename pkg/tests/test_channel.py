import math

import numpy as np
import pytest

from prach_hybrid.channel import (ChannelConfig, RxGrid, add_awgn, apply_delay, draw_channel,
                                  mean_channel_delay_samples, simulate_reception, tdl_c_profile)
from prach_hybrid.correlator import compute_pdp, window_bins
from prach_hybrid.errors import ConfigError
from prach_hybrid.zc import PreambleConfig, base_spectrum, preamble_freq

BIN = 4096 / 139


def peak_bin(grid, p):
    return int(np.argmax(compute_pdp(grid, base_spectrum(p)).values))


def test_zero_delay_is_identity(rng):
    y = rng.standard_normal(139) + 1j * rng.standard_normal(139)
    assert np.array_equal(apply_delay(y, 0.0, 4096), y)


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        apply_delay(np.ones(139), -1.0, 4096)


@pytest.mark.parametrize("bins", [1, 2, 5])
def test_delay_of_one_bin_moves_peak_one_position(bins):
    p = PreambleConfig(u=1, v=0)
    g0 = simulate_reception(p, ChannelConfig())
    g = simulate_reception(p, ChannelConfig(delay_samples=bins * BIN))
    assert peak_bin(g, p) - peak_bin(g0, p) == bins


def test_delay_composes_additively(rng):
    y = preamble_freq(PreambleConfig())
    a = apply_delay(apply_delay(y, 3.3, 4096), 11.9, 4096)
    assert np.max(np.abs(a - apply_delay(y, 15.2, 4096))) < 1e-9


def test_awgn_channel_is_exactly_one(rng):
    h = draw_channel(ChannelConfig("awgn", num_rx=3), 139, rng)
    assert h.shape == (3, 139)
    assert np.array_equal(h, np.ones((3, 139)))


def test_unknown_model_rejected():
    with pytest.raises(ConfigError, match="awgn"):
        ChannelConfig("foo")


def test_tap_profile_normalized():
    delays, powers = tdl_c_profile(300e-9)
    assert math.isclose(powers.sum(), 1.0, rel_tol=1e-12)
    mean = np.sum(delays * powers)
    rms = math.sqrt(np.sum(powers * (delays - mean) ** 2))
    # the standard's normalized table has unit RMS spread (to 4 decimals)
    assert rms == pytest.approx(300e-9, rel=1e-4)


def test_tdlc_mean_power_is_one():
    rng = np.random.default_rng(0)
    cfg = ChannelConfig("tdlc300", num_rx=1000)
    acc = 0.0
    for _ in range(100):
        acc += np.mean(np.abs(draw_channel(cfg, 139, rng)) ** 2)
    assert acc / 100 == pytest.approx(1.0, abs=0.02)


def test_tdlc_frequency_coherence():
    rng = np.random.default_rng(1)
    h = draw_channel(ChannelConfig("tdlc300", num_rx=20000), 139, rng)
    r1 = abs(np.mean(h[:, :-1] * np.conj(h[:, 1:])))
    r69 = abs(np.mean(h[:, :-69] * np.conj(h[:, 69:])))
    assert r1 > r69
    # analytic frequency correlation of the tap profile
    delays, powers = tdl_c_profile(300e-9)
    for lag, measured in ((1, r1), (69, r69)):
        expected = abs(np.sum(powers * np.exp(-2j * np.pi * lag * 30e3 * delays)))
        assert measured == pytest.approx(expected, abs=0.03)


def test_tdlc_antennas_independent():
    rng = np.random.default_rng(2)
    h = np.stack([draw_channel(ChannelConfig("tdlc300", num_rx=2), 139, rng)[:, 10]
                  for _ in range(10_000)])
    rho = np.mean(h[:, 0] * np.conj(h[:, 1])) / np.sqrt(
        np.mean(np.abs(h[:, 0]) ** 2) * np.mean(np.abs(h[:, 1]) ** 2))
    assert abs(rho) < 0.05


@pytest.mark.parametrize("snr_db,expected", [(0.0, 1.0), (-10.0, 10.0)])
def test_noise_power(snr_db, expected):
    grid = RxGrid(np.zeros((8, 125_000)))
    noisy = add_awgn(grid, snr_db, np.random.default_rng(3))
    assert np.mean(np.abs(noisy.antennas) ** 2) == pytest.approx(expected, rel=0.02)


def test_infinite_snr_leaves_grid_unchanged(rng):
    grid = RxGrid(rng.standard_normal((2, 139)) + 0j)
    assert np.array_equal(add_awgn(grid, math.inf, rng).antennas, grid.antennas)


def test_energy_preserved_without_fading_and_noise():
    p = PreambleConfig(u=3, v=4)
    g = simulate_reception(p, ChannelConfig(delay_samples=40.0))
    assert np.allclose(np.abs(g.antennas) ** 2, 1.0, atol=1e-12)


def test_reception_deterministic():
    p = PreambleConfig(u=2, v=1)
    c = ChannelConfig("tdlc300", 2, snr_db=-5.0, delay_samples=50.0, seed=[5, 9])
    a = simulate_reception(p, c)
    b = simulate_reception(p, c)
    assert a.antennas.tobytes() == b.antennas.tobytes()


def test_absent_user_is_noise_only():
    p = PreambleConfig()
    c = ChannelConfig("tdlc300", 1, snr_db=0.0, seed=4)
    g = simulate_reception(p, c, user_present=False)
    assert g.user_present is False
    assert np.mean(np.abs(g.antennas) ** 2) == pytest.approx(1.0, rel=0.35)
    silent = simulate_reception(p, c.replace(snr_db=math.inf), user_present=False)
    assert not np.any(silent.antennas)


def test_delay_beyond_window_rejected():
    with pytest.raises(ConfigError):
        simulate_reception(PreambleConfig(), ChannelConfig(delay_samples=13 * BIN))


def test_mean_channel_delay():
    p = PreambleConfig()
    assert mean_channel_delay_samples(ChannelConfig("awgn"), p) == 0.0
    # sum(p_l * tau_l) over the normalized table = 0.728855 (x 300 ns x 122.88 MHz)
    assert mean_channel_delay_samples(ChannelConfig("tdlc300"), p) == pytest.approx(
        0.728855 * 300e-9 * 4096 * 30e3, rel=1e-5)


def test_peak_position_of_high_snr_user_with_fading():
    p = PreambleConfig(u=1, v=2)
    g = simulate_reception(p, ChannelConfig("tdlc300", 8, snr_db=30.0, delay_samples=3 * BIN,
                                            seed=1))
    pdp = compute_pdp(g, base_spectrum(p)).values
    assert int(np.argmax(pdp)) in window_bins()[2]
