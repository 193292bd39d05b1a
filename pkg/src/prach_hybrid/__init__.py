"""Link-level simulator and receivers for the 5G NR PRACH.

Two receivers are provided: a conventional correlation + threshold
detector and a hybrid receiver (small neural network per preamble window,
followed by peak-detection timing advance estimation).
"""

__version__ = "0.1.0"

from .zc import (PreambleConfig, RootSet, apply_cyclic_shift, dft, generate_base_sequence, idft,
                 preamble_freq)
from .channel import ChannelConfig, RxGrid, simulate_reception
from .correlator import compute_cdp, compute_pdp, extract_windows, WindowInstance
from .mlp import MlpModel, TrainConfig, train, load_model, save_model, count_flops
from .detectors import detect_conventional, detect_hybrid, run_receiver
from .ta import estimate_ta, ta_units, make_ground_truth

__all__ = [
    "PreambleConfig", "RootSet", "generate_base_sequence", "apply_cyclic_shift", "dft", "idft",
    "preamble_freq", "ChannelConfig", "RxGrid", "simulate_reception", "compute_cdp",
    "compute_pdp", "extract_windows", "WindowInstance", "MlpModel", "TrainConfig", "train",
    "load_model", "save_model", "count_flops", "detect_conventional", "detect_hybrid",
    "run_receiver", "estimate_ta", "ta_units", "make_ground_truth",
]
