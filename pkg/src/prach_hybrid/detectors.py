"""Conventional threshold detector, hybrid NN detector and the full receiver."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .correlator import (CDP, PDP, CorrelationProfile, WindowInstance, compute_pdp,
                         normalize_features, per_antenna_correlation, profile, window_bins,
                         window_features)
from .mlp import MlpModel, forward
from .ta import TaEstimate, peak_shift, ta_units
from .zc import RootSet, base_spectrum

FALSE_ALARM_TARGET = 1e-3
CALIBRATION_PROFILES = 40_000
CALIBRATION_SEED = 20240917
LN2 = math.log(2.0)


@dataclass
class DetectionResult:
    decisions: list
    scores: list
    detected_rapids: list = field(default_factory=list)
    alpha: float | None = None


def noise_floor(pdp: np.ndarray) -> np.ndarray:
    """Mean noise power per bin estimated as median / ln 2 (exponential noise)."""
    return np.median(pdp, axis=-1) / LN2


def threshold_margins(pdp: np.ndarray, l_ra: int, n_cs: int) -> np.ndarray:
    """Peak-to-noise-floor ratio of every window, shape ``(..., windows)``."""
    wins = window_features(pdp, PDP, l_ra, n_cs)
    floor = noise_floor(pdp)
    floor = np.where(floor > 0, floor, np.finfo(float).tiny)
    return wins.max(axis=-1) / np.asarray(floor)[..., None]


@lru_cache(maxsize=32)
def calibrate_alpha(num_rx: int = 1, l_ra: int = 139, n_cs: int = 13,
                    target: float = FALSE_ALARM_TARGET, n_profiles: int = CALIBRATION_PROFILES,
                    seed: int = CALIBRATION_SEED) -> float:
    """Threshold multiplier giving a per-window false-alarm rate of ``target``
    on noise-only input, by Monte-Carlo quantile."""
    rng = np.random.default_rng(seed)
    ref = base_spectrum(RootSet(l_ra=l_ra, n_cs=n_cs).config(0))
    margins = []
    chunk = max(1, 40_000 // max(1, num_rx) // 4)
    done = 0
    while done < n_profiles:
        n = min(chunk, n_profiles - done)
        w = rng.standard_normal((n, num_rx, l_ra, 2))
        rx = (w[..., 0] + 1j * w[..., 1]) / math.sqrt(2.0)
        corr = per_antenna_correlation(rx, ref)
        pdp = np.mean(corr.real ** 2 + corr.imag ** 2, axis=-2)
        margins.append(threshold_margins(pdp, l_ra, n_cs).ravel())
        done += n
    return float(np.quantile(np.concatenate(margins), 1.0 - target))


def detect_conventional(prof: CorrelationProfile, alpha: float | None = None,
                        n_cs: int = 13, base_index: int = 0,
                        roots: RootSet | None = None) -> DetectionResult:
    """Declare window present iff its max bin exceeds ``alpha`` times the noise floor."""
    if prof.kind != PDP:
        raise ValueError("the conventional detector needs a PDP profile")
    l_ra = len(prof.values)
    if alpha is None:
        alpha = calibrate_alpha(prof.num_rx_combined, l_ra, n_cs)
    roots = roots or RootSet(l_ra=l_ra, n_cs=n_cs)
    margins = threshold_margins(prof.values, l_ra, n_cs) / alpha
    decisions = [bool(m > 1.0) for m in margins]
    rapids = [r for v, d in enumerate(decisions)
              if d and (r := roots.rapid(base_index, v)) is not None]
    return DetectionResult(decisions, [float(m) for m in margins], rapids, alpha)


def hybrid_probabilities(m: MlpModel, features: np.ndarray, profile_power: np.ndarray,
                         input_kind: str) -> np.ndarray:
    """p(present) for a batch of raw window features."""
    if input_kind != m.input_kind:
        raise ValueError(f"model expects {m.input_kind} windows, got {input_kind}")
    x = normalize_features(features, profile_power, input_kind, m.normalization)
    return forward(m, x)[..., 1]


def calibrate_decision_point(m: MlpModel, num_rx: int = 1, target: float = 1e-4,
                             n_profiles: int = CALIBRATION_PROFILES,
                             seed: int = CALIBRATION_SEED, l_ra: int = 139,
                             n_cs: int = 13) -> float:
    """Smallest p(present) cut (never below 0.5) with per-window false-alarm
    rate ``target`` on noise-only profiles."""
    rng = np.random.default_rng([seed, 1])
    ref = base_spectrum(RootSet(l_ra=l_ra, n_cs=n_cs).config(0))
    probs = []
    chunk = max(1, 40_000 // max(1, num_rx) // 4)
    done = 0
    while done < n_profiles:
        n = min(chunk, n_profiles - done)
        w = rng.standard_normal((n, num_rx, l_ra, 2))
        rx = (w[..., 0] + 1j * w[..., 1]) / math.sqrt(2.0)
        prof = profile(rx, ref, m.input_kind)
        feats = window_features(prof.values, prof.kind, l_ra, n_cs)
        mp = _mean_power(prof.values, prof.kind)
        probs.append(hybrid_probabilities(m, feats, np.repeat(mp[:, None], feats.shape[1], 1),
                                          prof.kind).ravel())
        done += n
    return max(0.5, float(np.quantile(np.concatenate(probs), 1.0 - target)))


_DECISION_CACHE: dict = {}


def _fingerprint(m: MlpModel) -> str:
    h = hashlib.sha1(m.input_kind.encode() + m.normalization.encode())
    for p in m.params():
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()


def _mean_power(values, kind):
    return np.mean(np.abs(values) ** 2 if kind == CDP else values, axis=-1)


def detect_hybrid(w: WindowInstance, m: MlpModel, decision_point: float = 0.5):
    """``(present, p_present)`` for one window."""
    if w.input_kind != m.input_kind:
        raise ValueError(f"model expects {m.input_kind} windows, got {w.input_kind}")
    prob = float(forward(m, w.normalized(m.normalization))[1])
    return prob >= decision_point, prob


def run_receiver(grid, roots: RootSet | None = None, m: MlpModel | None = None,
                 detector: str = "hybrid", alpha: float | None = None,
                 decision_point: float = 0.5,
                 fa_target: float | None = None) -> list[tuple[int, TaEstimate]]:
    """Detect RAPIDs across every root and estimate TA for each detection.

    Windows that are not detected are discarded.  Returns ``(rapid, ta)``
    sorted by RAPID.  With ``fa_target`` the threshold (conventional) or the
    decision point (hybrid) is calibrated to that per-window false-alarm
    rate, overriding ``alpha`` / ``decision_point``.
    """
    roots = roots or RootSet()
    if detector == "hybrid" and m is None:
        raise ValueError("hybrid detection needs a model")
    rx = grid.antennas if hasattr(grid, "antennas") else np.atleast_2d(grid)
    if fa_target is not None:
        if detector == "hybrid":
            key = (_fingerprint(m), rx.shape[0], fa_target, roots.l_ra, roots.n_cs)
            if key not in _DECISION_CACHE:
                _DECISION_CACHE[key] = calibrate_decision_point(
                    m, rx.shape[0], fa_target, l_ra=roots.l_ra, n_cs=roots.n_cs)
            decision_point = _DECISION_CACHE[key]
        else:
            alpha = calibrate_alpha(rx.shape[0], roots.l_ra, roots.n_cs, fa_target)
    out = []
    for b in range(len(roots.roots)):
        p = roots.config(b)
        ref = base_spectrum(p)
        pdp = compute_pdp(rx, ref)
        if detector == "hybrid":
            prof = pdp if m.input_kind == PDP else profile(rx, ref, CDP)
            feats = window_features(prof.values, prof.kind, p.l_ra, p.n_cs)
            probs = hybrid_probabilities(m, feats, np.full(len(feats), prof.mean_power),
                                         prof.kind)
            decisions = probs >= decision_point
        elif detector == "conventional":
            decisions = detect_conventional(pdp, alpha, p.n_cs, b, roots).decisions
        else:
            raise ValueError(f"unknown detector {detector!r}")
        power = pdp.values[window_bins(p.l_ra, p.n_cs)]
        for v, hit in enumerate(decisions):
            rapid = roots.rapid(b, v)
            if hit and rapid is not None:
                out.append((rapid, ta_units(int(peak_shift(power[v])), p.n_fft, p.l_ra, p.scs_hz)))
    return sorted(out, key=lambda t: t[0])
