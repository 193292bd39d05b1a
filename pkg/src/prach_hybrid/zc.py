"""Zadoff-Chu PRACH preamble generation.

Sign conventions used throughout the package:

* forward DFT ``X(k) = sum_n x(n) exp(-2j*pi*n*k/L)`` (unnormalized);
* inverse DFT carries the ``1/L`` factor;
* a cyclic shift ``x_v(n) = x((n + C_v) mod L)`` therefore shows up in the
  spectrum as ``X(k) * exp(+2j*pi*k*C_v/L)`` (positive phasor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigError

SUPPORTED_LENGTHS = (139, 839)
DEFAULT_ROOTS = (1, 2, 3, 4, 5, 6, 7)
NUM_RAPIDS = 64


@dataclass(frozen=True)
class PreambleConfig:
    """One PRACH preamble: root ``u``, cyclic-shift index ``v`` and numerology."""

    u: int = 1
    v: int = 0
    l_ra: int = 139
    n_cs: int = 13
    n_fft: int = 4096
    scs_hz: float = 30e3

    def __post_init__(self):
        if self.l_ra not in SUPPORTED_LENGTHS:
            raise ConfigError(f"l_ra must be one of {SUPPORTED_LENGTHS}, got {self.l_ra}")
        if not 1 <= self.u <= self.l_ra - 1 or math.gcd(self.u, self.l_ra) != 1:
            raise ConfigError(f"root index u={self.u} is not coprime with l_ra={self.l_ra}")
        if self.n_cs < 1:
            raise ConfigError(f"n_cs must be positive, got {self.n_cs}")
        if not 0 <= self.v < self.windows_per_root:
            raise ConfigError(
                f"preamble index v={self.v} outside 0..{self.windows_per_root - 1}")
        if self.n_fft < 1 or self.scs_hz <= 0:
            raise ConfigError("n_fft and scs_hz must be positive")

    @property
    def windows_per_root(self) -> int:
        return self.l_ra // self.n_cs

    @property
    def cyclic_shift(self) -> int:
        return self.v * self.n_cs

    @property
    def samples_per_bin(self) -> float:
        """Time samples (at ``n_fft * scs_hz``) per correlation bin."""
        return self.n_fft / self.l_ra

    def with_v(self, v: int) -> "PreambleConfig":
        return PreambleConfig(self.u, v, self.l_ra, self.n_cs, self.n_fft, self.scs_hz)


@dataclass(frozen=True)
class RootSet:
    """Ordered root indices hosting the 64 RAPIDs, ``windows_per_root`` each."""

    roots: tuple = DEFAULT_ROOTS
    l_ra: int = 139
    n_cs: int = 13
    n_fft: int = 4096
    scs_hz: float = 30e3
    num_rapids: int = NUM_RAPIDS
    _per_root: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        per_root = self.l_ra // self.n_cs
        object.__setattr__(self, "_per_root", per_root)
        if len(self.roots) * per_root < self.num_rapids:
            raise ConfigError(
                f"{len(self.roots)} roots x {per_root} shifts cannot host {self.num_rapids} RAPIDs")
        for u in self.roots:
            PreambleConfig(u, 0, self.l_ra, self.n_cs, self.n_fft, self.scs_hz)

    @property
    def windows_per_root(self) -> int:
        return self._per_root

    def config(self, base_index: int, v: int = 0) -> PreambleConfig:
        return PreambleConfig(self.roots[base_index], v, self.l_ra, self.n_cs,
                              self.n_fft, self.scs_hz)

    def base_configs(self) -> list[PreambleConfig]:
        return [self.config(b) for b in range(len(self.roots))]

    def rapid(self, base_index: int, v: int):
        """RAPID of window ``v`` on base ``base_index``; None if not one of the 64."""
        r = self.windows_per_root * base_index + v
        return r if r < self.num_rapids else None

    def locate(self, rapid: int) -> tuple[int, int]:
        """Inverse of :meth:`rapid`: ``(base_index, v)``."""
        if not 0 <= rapid < self.num_rapids:
            raise ConfigError(f"RAPID {rapid} outside 0..{self.num_rapids - 1}")
        return divmod(rapid, self.windows_per_root)


def generate_base_sequence(cfg: PreambleConfig) -> np.ndarray:
    """Time-domain root sequence ``exp(-j*pi*u*n*(n+1)/L)``, n = 0..L-1."""
    n = np.arange(cfg.l_ra, dtype=np.int64)
    # reduce the exponent modulo 2L in integers to keep the phase exact
    phase_idx = (cfg.u * n * (n + 1)) % (2 * cfg.l_ra)
    return np.exp(-1j * np.pi * phase_idx / cfg.l_ra)


def apply_cyclic_shift(x: np.ndarray, cfg: PreambleConfig) -> np.ndarray:
    """``out[n] = x[(n + C_v) mod L]``."""
    x = np.asarray(x)
    if x.shape[-1] != cfg.l_ra:
        raise ValueError(f"expected length {cfg.l_ra}, got {x.shape[-1]}")
    return np.roll(x, -cfg.cyclic_shift, axis=-1)


@lru_cache(maxsize=8)
def _dft_matrix(n: int) -> np.ndarray:
    idx = np.arange(n, dtype=np.int64)
    m = np.exp(-2j * np.pi * (np.outer(idx, idx) % n) / n)
    m.setflags(write=False)
    return m


def dft(x: np.ndarray, length: int | None = None, method: str = "fft") -> np.ndarray:
    """Unnormalized forward DFT along the last axis.

    ``method="direct"`` is the O(L^2) reference summation; ``"fft"`` uses
    numpy's prime-size capable FFT and agrees with the direct sum to ~1e-13.
    """
    x = np.asarray(x, dtype=complex)
    if length is not None and x.shape[-1] != length:
        raise ValueError(f"expected length {length}, got {x.shape[-1]}")
    if method == "direct":
        return x @ _dft_matrix(x.shape[-1])
    if method == "fft":
        return np.fft.fft(x, axis=-1)
    raise ValueError(f"unknown DFT method {method!r}")


def idft(X: np.ndarray, length: int | None = None, method: str = "fft") -> np.ndarray:
    """Inverse of :func:`dft` (carries the 1/L factor)."""
    X = np.asarray(X, dtype=complex)
    if length is not None and X.shape[-1] != length:
        raise ValueError(f"expected length {length}, got {X.shape[-1]}")
    n = X.shape[-1]
    if method == "direct":
        return (X @ np.conj(_dft_matrix(n))) / n
    if method == "fft":
        return np.fft.ifft(X, axis=-1)
    raise ValueError(f"unknown DFT method {method!r}")


def base_spectrum(cfg: PreambleConfig) -> np.ndarray:
    """``X_u(k)``, the DFT of the unshifted root sequence."""
    return dft(generate_base_sequence(cfg))


def preamble_freq(cfg: PreambleConfig) -> np.ndarray:
    """Frequency-domain preamble ``y_{u,v}(k) = X_u(k) exp(+2j*pi*k*C_v/L)``.

    Computed by rotating the root spectrum; equals
    ``dft(apply_cyclic_shift(generate_base_sequence(cfg), cfg))``.
    """
    k = np.arange(cfg.l_ra, dtype=np.int64)
    rot = np.exp(2j * np.pi * ((k * cfg.cyclic_shift) % cfg.l_ra) / cfg.l_ra)
    return base_spectrum(cfg) * rot
