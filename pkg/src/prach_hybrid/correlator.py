"""Correlation against the root spectrum, equal-gain combining and windowing.

The delay profile follows the inverse-DFT convention of :mod:`prach_hybrid.zc`:
preamble ``v`` with zero delay peaks at bin ``(-C_v) mod L`` and each
``N/L`` time samples of delay move the peak one bin up.  Windows list their
bins in the opposite direction, so within a window the zero-delay bin is
always the last (rightmost) feature and larger delays move the peak left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .channel import RxGrid
from .zc import PreambleConfig, RootSet, base_spectrum, idft

PDP = "pdp"
CDP = "cdp"
INPUT_KINDS = (PDP, CDP)


@dataclass
class CorrelationProfile:
    values: np.ndarray
    kind: str
    num_rx_combined: int
    # mean per-bin power of the profile, used as the noise-floor normalizer
    mean_power: float = 0.0

    def __len__(self):
        return len(self.values)


@dataclass
class WindowInstance:
    """One preamble window cut from a delay profile."""

    features: np.ndarray
    base_index: int
    window_index: int
    rapid: int | None
    label: str | None = None            # "present" / "absent" / None
    true_delay_samples: float | None = None
    snr_db: float | None = None
    input_kind: str = PDP
    channel: str | None = None
    num_rx: int | None = None
    profile_power: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def is_present(self) -> bool | None:
        return None if self.label is None else self.label == "present"

    def normalized(self, mode: str = "profile_mean") -> np.ndarray:
        return normalize_features(self.features, self.profile_power, self.input_kind, mode)

    def power_features(self) -> np.ndarray:
        """Per-bin power of the window regardless of input kind."""
        if self.input_kind == PDP:
            return np.asarray(self.features, dtype=float)
        f = np.asarray(self.features, dtype=float)
        return f[0::2] ** 2 + f[1::2] ** 2


NORMALIZATIONS = ("profile_mean", "none")


def normalize_features(features, profile_power, input_kind: str, mode: str):
    """Divide by the profile's mean power (amplitude for complex windows)."""
    features = np.asarray(features, dtype=float)
    if mode == "none":
        return features
    if mode != "profile_mean":
        raise ValueError(f"unknown normalization {mode!r}")
    power = np.asarray(profile_power, dtype=float)
    power = np.where(power > 0, power, 1.0)
    scale = power if input_kind == PDP else np.sqrt(power)
    return features / (scale[..., None] if scale.ndim else scale)


def reference(X_u: np.ndarray) -> np.ndarray:
    """Root spectrum scaled to unit RMS modulus (unit-power REs correlate to a unit peak)."""
    X_u = np.asarray(X_u, dtype=complex)
    return X_u / np.sqrt(np.mean(np.abs(X_u) ** 2))


def per_antenna_correlation(rx: np.ndarray, X_u: np.ndarray) -> np.ndarray:
    """``IDFT[y_i(k) / X_u(k)]`` for every antenna; shape preserved."""
    rx = np.asarray(rx, dtype=complex)
    if rx.shape[-1] != len(X_u):
        raise ValueError(f"antenna length {rx.shape[-1]} != reference length {len(X_u)}")
    return idft(rx / reference(X_u))


def _antennas(grid) -> np.ndarray:
    return grid.antennas if isinstance(grid, RxGrid) else np.atleast_2d(grid)


def compute_cdp(grid, X_u: np.ndarray) -> CorrelationProfile:
    """Complex delay profile: antenna-mean of the per-antenna correlations."""
    corr = per_antenna_correlation(_antennas(grid), X_u)
    chi = corr.mean(axis=-2)
    return CorrelationProfile(chi, CDP, corr.shape[-2], float(np.mean(np.abs(chi) ** 2)))


def compute_pdp(grid, X_u: np.ndarray) -> CorrelationProfile:
    """Power delay profile: antenna-mean of the per-antenna squared magnitudes.

    Power is taken before combining, so it differs from ``|cdp|**2`` when
    more than one antenna is present.
    """
    corr = per_antenna_correlation(_antennas(grid), X_u)
    pdp = np.mean(corr.real ** 2 + corr.imag ** 2, axis=-2)
    return CorrelationProfile(pdp, PDP, corr.shape[-2], float(np.mean(pdp)))


def profile(grid, X_u, kind: str) -> CorrelationProfile:
    if kind == PDP:
        return compute_pdp(grid, X_u)
    if kind == CDP:
        return compute_cdp(grid, X_u)
    raise ValueError(f"unknown input kind {kind!r}; valid: {', '.join(INPUT_KINDS)}")


@lru_cache(maxsize=32)
def window_bins(l_ra: int = 139, n_cs: int = 13) -> np.ndarray:
    """Profile bin of every window feature, shape ``(L // n_cs, n_cs)``.

    Row ``v`` lists window ``v``'s bins left to right; the last entry is the
    zero-delay bin ``(-v*n_cs) mod L``.
    """
    v = np.arange(l_ra // n_cs)[:, None]
    i = np.arange(n_cs)[None, :]
    table = (-v * n_cs + (n_cs - 1 - i)) % l_ra
    table.setflags(write=False)
    return table


def guard_bins(l_ra: int = 139, n_cs: int = 13) -> np.ndarray:
    used = np.zeros(l_ra, dtype=bool)
    used[window_bins(l_ra, n_cs).ravel()] = True
    return np.flatnonzero(~used)


def window_features(values: np.ndarray, kind: str, l_ra: int, n_cs: int) -> np.ndarray:
    """Cut every window from profile values of shape ``(..., L)``.

    Returns ``(..., windows, n_cs)`` for PDP and ``(..., windows, 2*n_cs)``
    (re/im interleaved) for CDP.
    """
    cut = np.asarray(values)[..., window_bins(l_ra, n_cs)]
    if kind == PDP:
        return cut.real.astype(float) if np.iscomplexobj(cut) else cut
    out = np.empty(cut.shape[:-1] + (2 * n_cs,), dtype=float)
    out[..., 0::2] = cut.real
    out[..., 1::2] = cut.imag
    return out


def extract_windows(profile: CorrelationProfile, p: PreambleConfig, base_index: int = 0,
                    roots: RootSet | None = None, **fields) -> list[WindowInstance]:
    """All ``L // N_CS`` windows of one profile; guard bins are dropped."""
    if len(profile.values) != p.l_ra:
        raise ValueError(f"profile length {len(profile.values)} != {p.l_ra}")
    roots = roots or RootSet(l_ra=p.l_ra, n_cs=p.n_cs, n_fft=p.n_fft, scs_hz=p.scs_hz)
    feats = window_features(profile.values, profile.kind, p.l_ra, p.n_cs)
    return [
        WindowInstance(feats[v].copy(), base_index, v, roots.rapid(base_index, v),
                       input_kind=profile.kind, num_rx=profile.num_rx_combined,
                       profile_power=profile.mean_power, **fields)
        for v in range(p.windows_per_root)
    ]


def batch_profiles(rx: np.ndarray, p: PreambleConfig, kind: str):
    """Vectorized profiles for ``rx`` of shape ``(n, num_rx, L)``.

    Returns ``(values, mean_power)`` with shapes ``(n, L)`` and ``(n,)``.
    """
    corr = per_antenna_correlation(rx, base_spectrum(p))
    if kind == PDP:
        vals = np.mean(corr.real ** 2 + corr.imag ** 2, axis=-2)
        return vals, vals.mean(axis=-1)
    if kind == CDP:
        vals = corr.mean(axis=-2)
        return vals, np.mean(np.abs(vals) ** 2, axis=-1)
    raise ValueError(f"unknown input kind {kind!r}; valid: {', '.join(INPUT_KINDS)}")
