"""Window datasets: simulation, JSON-lines persistence, splitting, capture import.

Seeding: instance ``i`` of a run with seed ``s`` draws its RAPID/delay from
``default_rng([s, i, 0])`` and its channel/noise from ``default_rng([s, i, 1])``.
Instances are independent substreams, so results do not depend on how a
run is chunked or ordered.
"""

from __future__ import annotations

import gzip
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import CHANNEL_MODELS, ChannelConfig, simulate_reception
from .correlator import INPUT_KINDS, batch_profiles, window_features, WindowInstance
from .errors import ConfigError, DataError, LabelError
from .ta import truth_bins
from .zc import DEFAULT_ROOTS, RootSet

GENERATOR = f"prach_hybrid {__version__}"
DEFAULT_SNRS = tuple(range(-20, 21, 5))
FULL_INSTANCES_PER_SNR = 10_000
DESK_INSTANCES_PER_SNR = 2_000
MAX_DELAY_BINS = 12.5
RECORD_FIELDS = ("snr_db", "channel", "num_rx", "input_kind", "base_index", "window_index",
                 "rapid", "label", "true_delay_samples", "features")


@dataclass
class DatasetSpec:
    snr_list: tuple = DEFAULT_SNRS
    instances_per_snr: int = FULL_INSTANCES_PER_SNR
    channel: str = "tdlc300"
    num_rx: int = 1
    input_kind: str = "pdp"
    present_ratio: float = 0.5
    seed: int = 0
    delay_spread_s: float = 300e-9
    roots: tuple = DEFAULT_ROOTS

    def __post_init__(self):
        self.snr_list = tuple(float(s) for s in self.snr_list)
        self.roots = tuple(int(r) for r in self.roots)
        if self.channel not in CHANNEL_MODELS:
            raise ConfigError(f"unknown channel {self.channel!r}; valid: {', '.join(CHANNEL_MODELS)}")
        if self.input_kind not in INPUT_KINDS:
            raise ConfigError(f"unknown input kind {self.input_kind!r}; valid: {', '.join(INPUT_KINDS)}")
        if self.instances_per_snr < 1 or self.num_rx < 1 or not self.snr_list:
            raise ConfigError("instances_per_snr, num_rx and snr_list must be non-empty/positive")
        if not 0.0 <= self.present_ratio <= 1.0:
            raise ConfigError("present_ratio must lie in [0, 1]")

    @property
    def root_set(self) -> RootSet:
        return RootSet(self.roots)


def _instance_draw(seed: int, index: int, roots: RootSet, ccfg: ChannelConfig):
    """RAPID and a delay whose TA label stays inside the window (redrawn otherwise)."""
    rng = np.random.default_rng([seed, index, 0])
    rapid = int(rng.integers(roots.num_rapids))
    base, v = roots.locate(rapid)
    p = roots.config(base, v)
    for _ in range(1000):
        delay = float(rng.uniform(0.0, MAX_DELAY_BINS * p.samples_per_bin))
        if truth_bins(delay, ccfg, p) <= p.n_cs - 1:
            return rapid, base, v, delay
    raise LabelError("could not draw a delay with an in-window TA label")


def simulate_windows(n: int, channel: str, num_rx: int, snr_db: float, input_kind,
                     present: np.ndarray, seed: int, index_offset: int = 0,
                     roots: RootSet | None = None, delay_spread_s: float = 300e-9):
    """Simulate ``n`` occasions and cut each user's own window.

    ``input_kind`` is one kind or a tuple of kinds.  Returns a dict of
    arrays: ``features[kind]``, ``profile_power[kind]``, rapid, base_index,
    window_index, delay (NaN when absent), present, ``pdp_window`` (window
    power, used for TA) and ``pdp_floor`` (median/ln2 noise floor of the
    full PDP, used by the conventional detector).
    """
    roots = roots or RootSet()
    kinds = (input_kind,) if isinstance(input_kind, str) else tuple(input_kind)
    present = np.asarray(present, dtype=bool)
    tmpl = ChannelConfig(channel, num_rx, delay_spread_s, snr_db)
    rx = np.empty((n, num_rx, roots.l_ra), dtype=complex)
    meta = np.empty((n, 3), dtype=int)
    delays = np.full(n, np.nan)
    for i in range(n):
        idx = index_offset + i
        rapid, base, v, delay = _instance_draw(seed, idx, roots, tmpl)
        p = roots.config(base, v)
        c = tmpl.replace(delay_samples=delay, seed=[seed, idx, 1])
        rx[i] = simulate_reception(p, c, bool(present[i])).antennas
        meta[i] = rapid, base, v
        if present[i]:
            delays[i] = delay
    feats = {k: np.empty((n, roots.n_cs if k == "pdp" else 2 * roots.n_cs)) for k in kinds}
    power = {k: np.empty(n) for k in kinds}
    pdp_win = np.empty((n, roots.n_cs))
    floor = np.empty(n)
    for b in np.unique(meta[:, 1]):
        sel = np.flatnonzero(meta[:, 1] == b)
        rows = np.arange(len(sel))
        p = roots.config(int(b))
        for k in set(kinds) | {"pdp"}:
            vals, mp = batch_profiles(rx[sel], p, k)
            wins = window_features(vals, k, p.l_ra, p.n_cs)[rows, meta[sel, 2]]
            if k in feats:
                feats[k][sel], power[k][sel] = wins, mp
            if k == "pdp":
                pdp_win[sel] = wins
                floor[sel] = np.median(vals, axis=-1) / math.log(2.0)
    return {"features": feats, "profile_power": power, "rapid": meta[:, 0],
            "base_index": meta[:, 1], "window_index": meta[:, 2], "delay": delays,
            "present": present, "pdp_window": pdp_win, "pdp_floor": floor}


def present_mask(n: int, ratio: float, seed: int, stratum: int) -> np.ndarray:
    """Exactly ``round(ratio * n)`` present instances at seeded positions."""
    k = int(math.floor(ratio * n + 0.5))
    mask = np.zeros(n, dtype=bool)
    mask[np.random.default_rng([seed, stratum, 2]).permutation(n)[:k]] = True
    return mask


def generate_instances(spec: DatasetSpec) -> list[WindowInstance]:
    roots = spec.root_set
    provenance = spec_dict(spec)
    out = []
    for si, snr in enumerate(spec.snr_list):
        n = spec.instances_per_snr
        offset = si * n
        sim = simulate_windows(n, spec.channel, spec.num_rx, snr, spec.input_kind,
                               present_mask(n, spec.present_ratio, spec.seed, si), spec.seed,
                               offset, roots, spec.delay_spread_s)
        for i in range(n):
            pres = bool(sim["present"][i])
            out.append(WindowInstance(
                features=sim["features"][spec.input_kind][i], base_index=int(sim["base_index"][i]),
                window_index=int(sim["window_index"][i]), rapid=int(sim["rapid"][i]),
                label="present" if pres else "absent",
                true_delay_samples=float(sim["delay"][i]) if pres else None,
                snr_db=snr, input_kind=spec.input_kind, channel=spec.channel,
                num_rx=spec.num_rx, profile_power=float(sim["profile_power"][spec.input_kind][i]),
                meta={"generator": GENERATOR, "seed": spec.seed, "instance": offset + i,
                      "spec": provenance}))
    return out


# --- persistence -------------------------------------------------------------

def _open_text(path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        if "w" in mode:
            raw = open(path, "wb")
            gz = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
            return _ClosingWrapper(io.TextIOWrapper(gz, encoding="utf-8", newline="\n"), raw)
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, mode, encoding="utf-8", newline="\n" if "w" in mode else None)


class _ClosingWrapper:
    def __init__(self, text, raw):
        self._text, self._raw = text, raw

    def write(self, s):
        return self._text.write(s)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self._text.close()
        self._raw.close()


def _num(x):
    if x is None:
        return None
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2 ** 53 else x


def to_record(w: WindowInstance) -> dict:
    rec = {
        "snr_db": _num(w.snr_db),
        "channel": w.channel,
        "num_rx": w.num_rx,
        "input_kind": w.input_kind,
        "base_index": w.base_index,
        "window_index": w.window_index,
        "rapid": w.rapid,
        "label": w.label,
        "true_delay_samples": w.true_delay_samples,
        "features": [float(f) for f in w.features],
        "profile_power": float(w.profile_power),
    }
    if w.meta:
        rec["meta"] = w.meta
    return rec


def from_record(rec: dict) -> WindowInstance:
    missing = [k for k in RECORD_FIELDS if k not in rec]
    if missing:
        raise DataError(f"record missing fields {missing}")
    return WindowInstance(
        features=np.asarray(rec["features"], dtype=float), base_index=int(rec["base_index"]),
        window_index=int(rec["window_index"]), rapid=rec["rapid"], label=rec["label"],
        true_delay_samples=rec["true_delay_samples"], snr_db=rec["snr_db"],
        input_kind=rec["input_kind"], channel=rec["channel"], num_rx=rec["num_rx"],
        profile_power=float(rec.get("profile_power", 1.0)), meta=rec.get("meta", {}))


def write_dataset(instances, path) -> None:
    with _open_text(path, "w") as fh:
        for w in instances:
            fh.write(json.dumps(to_record(w), separators=(",", ":")) + "\n")


def read_dataset(path) -> list[WindowInstance]:
    out = []
    with _open_text(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(from_record(json.loads(line)))
            except (json.JSONDecodeError, DataError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def generate(spec: DatasetSpec, path) -> int:
    """Write the dataset for ``spec``; returns the line count."""
    instances = generate_instances(spec)
    write_dataset(instances, path)
    return len(instances)


def split(instances, fraction: float = 0.75, seed: int = 0):
    """Seeded split stratified by (snr, label); original order kept in each part."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must lie in (0, 1), got {fraction}")
    strata: dict = {}
    for i, w in enumerate(instances):
        strata.setdefault((w.snr_db if w.snr_db is not None else math.nan, str(w.label)), []).append(i)
    if not strata:
        raise ValueError("cannot split an empty dataset")
    train_idx = []
    for si, key in enumerate(sorted(strata, key=lambda k: (repr(k[0]), k[1]))):
        idx = strata[key]
        k = int(math.floor(fraction * len(idx) + 0.5))
        perm = np.random.default_rng([seed, si]).permutation(len(idx))
        train_idx += [idx[j] for j in perm[:k]]
    chosen = np.zeros(len(instances), dtype=bool)
    chosen[train_idx] = True
    train = [w for w, c in zip(instances, chosen) if c]
    test = [w for w, c in zip(instances, chosen) if not c]
    return train, test


# --- capture import ------------------------------------------------------------

@dataclass
class CaptureMeta:
    """Side information for an RE capture; ``rapids`` holds the present
    RAPIDs of each occasion (None for an unlabeled capture)."""

    roots: tuple = DEFAULT_ROOTS
    input_kind: str = "pdp"
    snr_db: float | None = None
    channel: str | None = None
    rapids: list | None = None
    delays: list | None = None
    extra: dict = field(default_factory=dict)


def export_capture(grids, path, l_ra: int = 139, header: dict | None = None) -> None:
    """One line per occasion: ``re,im`` pairs for every RE, antenna after antenna.

    ``header`` entries become ``# key: json`` comment lines, which the reader skips.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# prach capture: l_ra={l_ra}; antenna-major re,im pairs per line\n")
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
        for g in grids:
            ant = g.antennas if hasattr(g, "antennas") else np.atleast_2d(g)
            if ant.shape[-1] != l_ra:
                raise DataError(f"antenna length {ant.shape[-1]} != {l_ra}")
            pairs = np.stack([ant.real, ant.imag], axis=-1).ravel()
            fh.write(",".join(repr(float(x)) for x in pairs) + "\n")


def read_capture(path, l_ra: int = 139) -> list[np.ndarray]:
    """Parse a capture file into per-occasion ``(num_rx, l_ra)`` arrays.

    The whole file is validated before anything is returned.
    """
    occasions = []
    num_rx = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals = np.array([float(t) for t in line.split(",")])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed number ({exc})") from exc
            if vals.size == 0 or vals.size % (2 * l_ra):
                raise DataError(f"{path}:{lineno}: {vals.size} values is not a whole number "
                                f"of {l_ra}-RE antennas")
            n = vals.size // (2 * l_ra)
            if num_rx is not None and n != num_rx:
                raise DataError(f"{path}:{lineno}: {n} antennas, earlier lines had {num_rx}")
            if not np.all(np.isfinite(vals)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            num_rx = n
            v = vals.reshape(n, l_ra, 2)
            occasions.append(v[..., 0] + 1j * v[..., 1])
    return occasions


def capture_windows(occasions, meta: CaptureMeta) -> list[WindowInstance]:
    """Correlate every occasion against every root and cut the valid RAPID windows."""
    roots = RootSet(tuple(meta.roots))
    if meta.rapids is not None and len(meta.rapids) != len(occasions):
        raise DataError(f"{len(meta.rapids)} label rows for {len(occasions)} occasions")
    out = []
    for oi, rx in enumerate(occasions):
        present = None if meta.rapids is None else set(meta.rapids[oi] or [])
        for b in range(len(roots.roots)):
            p = roots.config(b)
            vals, mp = batch_profiles(rx[None], p, meta.input_kind)
            wins = window_features(vals[0], meta.input_kind, p.l_ra, p.n_cs)
            for v in range(p.windows_per_root):
                rapid = roots.rapid(b, v)
                if rapid is None:
                    continue
                label = None if present is None else ("present" if rapid in present else "absent")
                delay = None
                if meta.delays is not None and label == "present":
                    delay = meta.delays[oi].get(rapid) if isinstance(meta.delays[oi], dict) \
                        else meta.delays[oi]
                out.append(WindowInstance(
                    wins[v].copy(), b, v, rapid, label, delay, meta.snr_db, meta.input_kind,
                    meta.channel, rx.shape[0], float(mp[0]),
                    {"generator": GENERATOR, "occasion": oi, **meta.extra}))
    return out


def import_capture(path, meta: CaptureMeta, out_path=None) -> list[WindowInstance]:
    windows = capture_windows(read_capture(path), meta)
    if out_path is not None:
        write_dataset(windows, out_path)
    return windows


def spec_dict(spec: DatasetSpec) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()}
