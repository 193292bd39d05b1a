"""Figure rendering for evaluation and explanation reports.

Figures go to PNG next to the CSV they were drawn from.  The Agg backend is
forced and the PNG ``Software`` tag dropped so repeated runs are
byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
    "savefig.dpi": 150,
}
PNG_METADATA = {"Software": None}


def size(scale=1.0, width_in=5.0):
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    return [width_in * scale, width_in * scale * golden]


def _save(fig, path):
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)


def _series(rows):
    groups = {}
    for r in rows:
        key = (r["channel"], r["num_rx"], r["receiver"], r["detector_input"])
        groups.setdefault(key, []).append(r)
    for key in groups:
        groups[key].sort(key=lambda r: r["snr_db"])
    return groups


def _label(key):
    channel, num_rx, receiver, kind = key
    name = "conventional" if receiver == "conventional" else f"hybrid ({kind.upper()})"
    return f"{name}, {channel.upper()}, {num_rx} RX"


def plot_detection(rows, path):
    """p_detect (solid) and p_false_alarm (dotted) against SNR."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=size())
        for key, grp in _series(rows).items():
            snr = [r["snr_db"] for r in grp]
            line, = ax.plot(snr, [r["p_detect"] for r in grp], marker="o", ms=3, label=_label(key))
            ax.plot(snr, [r["p_false_alarm"] for r in grp], ls=":", color=line.get_color(), lw=0.8)
        ax.set_xlabel("SNR per RE (dB)")
        ax.set_ylabel("probability of detection")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="lower right")
        fig.tight_layout()
        _save(fig, path)


def plot_ta(rows, path):
    """TA accuracy under the exact and the one-bin-tolerance labels (hybrid rows)."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=size())
        for key, grp in _series([r for r in rows if r["receiver"] == "hybrid"]).items():
            snr = [r["snr_db"] for r in grp]
            line, = ax.plot(snr, [r["ta_acc_tol1"] for r in grp], marker="s", ms=3,
                            label=_label(key) + ", +/-1 TA")
            ax.plot(snr, [r["ta_acc_exact"] for r in grp], marker="o", ms=3, ls="--",
                    color=line.get_color(), label=_label(key) + ", exact")
        ax.set_xlabel("SNR per RE (dB)")
        ax.set_ylabel("TA accuracy")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="lower right")
        fig.tight_layout()
        _save(fig, path)


def render_eval(rows, csv_path) -> list[Path]:
    """Draw the detection and TA figures beside ``csv_path``."""
    csv_path = Path(csv_path)
    det = csv_path.with_name(csv_path.stem + "_detection.png")
    ta = csv_path.with_name(csv_path.stem + "_ta.png")
    plot_detection(rows, det)
    plot_ta(rows, ta)
    return [det, ta]


def plot_attribution(features, attributions, path, title=None):
    """Window input (top) and its Shapley attributions (bottom)."""
    idx = np.arange(1, len(features) + 1)
    with plt.rc_context(RC):
        fig, (a0, a1) = plt.subplots(2, 1, figsize=size(1.0), sharex=True)
        a0.bar(idx, features, color="tab:blue")
        a0.set_ylabel("normalized PDP")
        colors = ["tab:red" if a > 0 else "tab:gray" for a in attributions]
        a1.bar(idx, attributions, color=colors)
        a1.set_ylabel("Shapley value")
        a1.set_xlabel("window bin")
        a1.set_xticks(idx)
        if title:
            a0.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def gnuplot_script(csv_path) -> str:
    """A gnuplot script plotting p_detect vs SNR for every row group in the CSV."""
    return "\n".join([
        "set datafile separator ','",
        "set key bottom right",
        "set xlabel 'SNR per RE (dB)'",
        "set ylabel 'probability of detection'",
        "set yrange [0:1]",
        "set grid",
        f"data = '{Path(csv_path).name}'",
        "# columns: 1 channel, 2 num_rx, 3 snr_db, 4 receiver, 5 detector_input, 7 p_detect",
        "plot for [r in 'conventional hybrid'] for [k in 'pdp cdp'] "
        "data skip 0 using ((strcol(4) eq r && strcol(5) eq k) ? $3 : 1/0):7 "
        "with linespoints title r.' '.k",
        "",
    ])
