"""Monte-Carlo sweeps producing detection-probability and TA-accuracy curves.

Metric definitions (also written into every CSV header):

* p_detect: fraction of user-present trials whose own window is declared present;
* p_false_alarm: fraction of noise-only trials whose window is declared present;
* ta_acc_exact / ta_acc_tol1: among detected present trials, fraction with
  peak-detection TA equal to / within one bin of the label
  round(distance delay + mean channel delay);
* SNR is per RE on the PRACH subcarriers.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .channel import ChannelConfig
from .dataset import simulate_windows
from .detectors import calibrate_alpha, hybrid_probabilities
from .ta import peak_shift, truth_bins
from .zc import DEFAULT_ROOTS, RootSet

CSV_COLUMNS = ("channel", "num_rx", "snr_db", "receiver", "detector_input", "n_trials",
               "p_detect", "p_false_alarm", "ta_acc_exact", "ta_acc_tol1")
CHANNEL_CODES = {"awgn": 1, "tdlc300": 2}


@dataclass
class EvalConfig:
    snr_list: tuple = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    channels: tuple = ("tdlc300",)
    num_rx: tuple = (1,)
    n_trials: int = 2000
    seed: int = 1
    conventional: bool = True
    decision_point: float = 0.5
    delay_spread_s: float = 300e-9
    roots: tuple = DEFAULT_ROOTS
    threads: int = 1

    def __post_init__(self):
        self.snr_list = tuple(float(s) for s in self.snr_list)
        self.channels = tuple(self.channels)
        self.num_rx = tuple(int(n) for n in self.num_rx)
        self.roots = tuple(int(r) for r in self.roots)
        if self.n_trials < 1:
            raise ValueError("n_trials must be positive")


@dataclass
class EvalRow:
    channel: str
    num_rx: int
    snr_db: float
    receiver: str
    detector_input: str
    n_trials: int
    p_detect: float
    p_false_alarm: float
    ta_acc_exact: float
    ta_acc_tol1: float
    extra: dict = field(default_factory=dict)

    def csv_values(self):
        return [self.channel, self.num_rx, _fmt(self.snr_db), self.receiver, self.detector_input,
                self.n_trials, _fmt(self.p_detect), _fmt(self.p_false_alarm),
                _fmt(self.ta_acc_exact), _fmt(self.ta_acc_tol1)]


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if x.is_integer():
            return str(int(x)) if abs(x) < 1e15 else repr(x)
        return f"{x:.6g}"
    return str(x)


def scenario_seed(seed: int, channel: str, num_rx: int, snr_index: int, present: bool) -> int:
    ss = np.random.SeedSequence([seed, CHANNEL_CODES.get(channel, 0), num_rx, snr_index,
                                 int(present)])
    return int(ss.generate_state(1)[0])


def pick_model(models, channel: str, num_rx: int, kind: str):
    """Model of the given input kind, preferring one trained on the same scenario."""
    candidates = [m for m in models if m.input_kind == kind]
    for m in candidates:
        ds = m.train_meta.get("dataset", {})
        if ds.get("channel") == channel and ds.get("num_rx") == num_rx:
            return m
    return candidates[0] if candidates else None


def ta_accuracy(est: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    if est.size == 0:
        return math.nan, math.nan
    err = np.abs(est - truth)
    return float(np.mean(err == 0)), float(np.mean(err <= 1))


def evaluate_point(channel: str, num_rx: int, snr_db: float, snr_index: int, models,
                   cfg: EvalConfig) -> list[EvalRow]:
    roots = RootSet(cfg.roots)
    kinds = sorted({m.input_kind for m in models})
    sims = {}
    for present in (True, False):
        sims[present] = simulate_windows(
            cfg.n_trials, channel, num_rx, snr_db, tuple(kinds) or ("pdp",),
            np.full(cfg.n_trials, present), scenario_seed(cfg.seed, channel, num_rx, snr_index,
                                                          present),
            0, roots, cfg.delay_spread_s)
    pos = sims[True]
    p0 = roots.config(0)
    ccfg = ChannelConfig(channel, num_rx, cfg.delay_spread_s, snr_db)
    truth = np.array([truth_bins(d, ccfg, p0) for d in pos["delay"]])
    est = peak_shift(pos["pdp_window"])

    def row(receiver, kind, det_pos, det_neg, **extra):
        exact, tol1 = ta_accuracy(est[det_pos], truth[det_pos])
        return EvalRow(channel, num_rx, snr_db, receiver, kind, cfg.n_trials,
                       float(np.mean(det_pos)), float(np.mean(det_neg)), exact, tol1, extra)

    rows = []
    if cfg.conventional:
        alpha = calibrate_alpha(num_rx, roots.l_ra, roots.n_cs)

        def conv(sim):
            return sim["pdp_window"].max(axis=1) / sim["pdp_floor"] > alpha
        rows.append(row("conventional", "pdp", conv(pos), conv(sims[False]), alpha=alpha))
    for kind in kinds:
        m = pick_model(models, channel, num_rx, kind)

        def hyb(sim):
            probs = hybrid_probabilities(m, sim["features"][kind], sim["profile_power"][kind], kind)
            return probs >= cfg.decision_point
        rows.append(row("hybrid", kind, hyb(pos), hyb(sims[False])))
    return rows


def run_eval(models, cfg: EvalConfig) -> list[EvalRow]:
    """Sweep every (channel, num_rx, snr); row order is independent of ``threads``."""
    tasks = [(ch, nrx, snr, si) for ch in cfg.channels for nrx in cfg.num_rx
             for si, snr in enumerate(cfg.snr_list)]
    # calibrate once up front so worker threads share the cached value
    if cfg.conventional:
        for nrx in cfg.num_rx:
            calibrate_alpha(nrx)

    def work(t):
        return evaluate_point(*t, models, cfg)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(work, tasks))
    else:
        parts = [work(t) for t in tasks]
    return [r for part in parts for r in part]


def write_eval_csv(rows, path, cfg: EvalConfig, models=()) -> None:
    header = {
        "tool": f"prach_hybrid {__version__}",
        "config": asdict(cfg),
        "models": [{"input_kind": m.input_kind, "dataset": m.train_meta.get("dataset")}
                   for m in models],
        "alpha": {str(n): calibrate_alpha(n) for n in cfg.num_rx} if cfg.conventional else {},
        "snr_definition": "per-RE SNR on the PRACH subcarriers (unit signal power per RE)",
        "p_detect": "fraction of user-present trials whose own window is declared present",
        "p_false_alarm": "fraction of noise-only trials whose window is declared present",
        "ta_accuracy": "over detected present trials; label = round(delay + mean channel delay)",
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in header.items():
            fh.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_COLUMNS)
        for r in rows:
            out.writerow(r.csv_values())


def read_eval_csv(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for rec in csv.DictReader(lines):
        for k in ("num_rx", "n_trials"):
            rec[k] = int(rec[k])
        for k in ("snr_db", "p_detect", "p_false_alarm", "ta_acc_exact", "ta_acc_tol1"):
            rec[k] = float(rec[k])
        out.append(rec)
    return out
