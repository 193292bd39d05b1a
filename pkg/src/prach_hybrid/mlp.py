"""Dense ReLU network with a softmax head, trained with Adam.

Everything here is plain numpy.  Class index 1 is "user present".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelFormatError, ModelVersionError, TrainingError

FORMAT_VERSION = 1
DEFAULT_HIDDEN = (128, 64, 64)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    lr_patience: int = 5
    lr_factor: float = 0.5
    val_fraction: float = 0.1
    seed: int = 0
    normalization: str = "profile_mean"
    hidden: tuple = DEFAULT_HIDDEN

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        positive = (self.learning_rate, self.batch_size, self.max_epochs, self.patience,
                    self.lr_patience, self.lr_factor, self.eps)
        if any(not v > 0 for v in positive) or not all(h > 0 for h in self.hidden):
            raise ValueError("training hyperparameters must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class MlpModel:
    weights: list
    biases: list
    input_kind: str = "pdp"
    normalization: str = "profile_mean"
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input {w.shape[0]} != previous output "
                                 f"{self.weights[i - 1].shape[1]}")

    @classmethod
    def init(cls, n_in: int, hidden=DEFAULT_HIDDEN, n_out: int = 2, seed: int = 0,
             **kwargs) -> "MlpModel":
        """Fan-in scaled uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        dims = (n_in, *hidden, n_out)
        weights, biases = [], []
        for a, b in zip(dims[:-1], dims[1:]):
            lim = math.sqrt(6.0 / a)
            weights.append(rng.uniform(-lim, lim, size=(a, b)))
            biases.append(np.zeros(b))
        return cls(weights, biases, **kwargs)

    @classmethod
    def zeros(cls, n_in: int, hidden=DEFAULT_HIDDEN, n_out: int = 2, **kwargs) -> "MlpModel":
        dims = (n_in, *hidden, n_out)
        return cls([np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
                   [np.zeros(b) for b in dims[1:]], **kwargs)

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.input_kind, self.normalization, json.loads(json.dumps(self.train_meta)))

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def predict_proba(self, x) -> np.ndarray:
        return forward(self, x)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(m: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != m.n_in:
        raise ValueError(f"input length {x.shape[-1]} does not match model input {m.n_in}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    return x


def forward(m: MlpModel, x) -> np.ndarray:
    """Class probabilities for one feature vector or a batch of them."""
    return softmax(m.logits(_check_input(m, x)))


def loss_and_grads(m: MlpModel, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradients (same order as ``m.params()``)."""
    acts = [x]
    pre = []
    h = x
    last = len(m.weights) - 1
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < last else z
        acts.append(h)
    p = softmax(acts[-1])
    n = x.shape[0]
    loss = -np.mean(np.log(np.clip(p[np.arange(n), y], 1e-300, None)))
    delta = p.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * (2 * len(m.weights))
    for i in range(last, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ m.weights[i].T) * (pre[i - 1] > 0)
    return loss, grads


def cross_entropy(m: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    p = softmax(m.logits(x))
    return float(-np.mean(np.log(np.clip(p[np.arange(len(y)), y], 1e-300, None))))


def gradient_check(m: MlpModel, x, label: int, h: float = 1e-5, max_params: int = 400,
                   seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    Checks every output-layer parameter plus ``max_params`` randomly chosen
    others.
    """
    x = np.atleast_2d(_check_input(m, x))
    y = np.atleast_1d(np.asarray(label, dtype=int))
    _, grads = loss_and_grads(m, x, y)
    params = m.params()
    rng = np.random.default_rng(seed)
    picks = []
    for pi, prm in enumerate(params):
        if pi >= len(params) - 2:
            picks += [(pi, j) for j in range(prm.size)]
    pool = [(pi, j) for pi, prm in enumerate(params[:-2]) for j in range(prm.size)]
    if pool:
        chosen = rng.choice(len(pool), size=min(max_params, len(pool)), replace=False)
        picks += [pool[c] for c in sorted(chosen)]
    worst = 0.0
    for pi, j in picks:
        flat = params[pi].reshape(-1)
        old = flat[j]
        flat[j] = old + h
        up = cross_entropy(m, x, y)
        flat[j] = old - h
        down = cross_entropy(m, x, y)
        flat[j] = old
        num = (up - down) / (2 * h)
        ana = grads[pi].reshape(-1)[j]
        worst = max(worst, abs(ana - num) / (abs(ana) + abs(num) + 1e-12))
    return worst


def train_arrays(x: np.ndarray, y: np.ndarray, cfg: TrainConfig | None = None,
                 input_kind: str = "pdp") -> MlpModel:
    """Fit on already-normalized features ``x`` and integer labels ``y``."""
    cfg = cfg or TrainConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise TrainingError("training data contains a single class")
    if not np.all(np.isfinite(x)):
        raise TrainingError("training features contain non-finite values")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(x))
    n_val = max(1, int(round(cfg.val_fraction * len(x))))
    val_idx, tr_idx = order[:n_val], order[n_val:]
    xt, yt, xv, yv = x[tr_idx], y[tr_idx], x[val_idx], y[val_idx]

    m = MlpModel.init(x.shape[1], cfg.hidden, 2, seed=cfg.seed, input_kind=input_kind,
                      normalization=cfg.normalization)
    params = m.params()
    mom = [np.zeros_like(p) for p in params]
    vel = [np.zeros_like(p) for p in params]
    lr = cfg.learning_rate
    step = 0
    best_val, best_params, since_best, since_lr = math.inf, None, 0, 0
    hist = {"train_loss": [], "val_loss": [], "lr": []}

    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(len(xt))
        for s in range(0, len(xt), cfg.batch_size):
            b = perm[s:s + cfg.batch_size]
            loss, grads = loss_and_grads(m, xt[b], yt[b])
            if not (math.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads)):
                raise TrainingError(f"loss became {loss} at epoch {epoch}, step {step}; "
                                    f"lr={lr:g}, max |w|={max(np.abs(p).max() for p in params):g}")
            step += 1
            c1 = 1 - cfg.beta1 ** step
            c2 = 1 - cfg.beta2 ** step
            try:
                with np.errstate(over="raise", invalid="raise"):
                    for p, g, mo, ve in zip(params, grads, mom, vel):
                        mo *= cfg.beta1
                        mo += (1 - cfg.beta1) * g
                        ve *= cfg.beta2
                        ve += (1 - cfg.beta2) * np.square(g)
                        p -= lr * (mo / c1) / (np.sqrt(ve / c2) + cfg.eps)
            except FloatingPointError as exc:
                raise TrainingError(f"optimizer state overflowed at epoch {epoch}, "
                                    f"step {step}; loss={loss:g}, lr={lr:g}") from exc
        tr_loss = cross_entropy(m, xt, yt)
        val_loss = cross_entropy(m, xv, yv)
        hist["train_loss"].append(tr_loss)
        hist["val_loss"].append(val_loss)
        hist["lr"].append(lr)
        if val_loss < best_val - 1e-12:
            best_val, since_best, since_lr = val_loss, 0, 0
            best_params = [p.copy() for p in params]
        else:
            since_best += 1
            since_lr += 1
            if since_best >= cfg.patience:
                break
            if since_lr >= cfg.lr_patience:
                lr *= cfg.lr_factor
                since_lr = 0

    for p, best in zip(params, best_params):
        p[...] = best
    m.train_meta = {
        "seed": cfg.seed,
        "epochs": len(hist["train_loss"]),
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "n_train": int(len(xt)),
        "n_val": int(len(xv)),
        "best_val_loss": best_val,
        "train_accuracy": accuracy(m, xt, yt),
        "val_accuracy": accuracy(m, xv, yv),
        **hist,
    }
    return m


def accuracy(m: MlpModel, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.argmax(m.logits(np.asarray(x, dtype=float)), axis=1) == np.asarray(y)))


def window_arrays(data, normalization: str = "profile_mean"):
    """Stack labeled windows into ``(features, labels)``; unlabeled windows are rejected."""
    if not data:
        raise TrainingError("empty training set")
    kinds = {w.input_kind for w in data}
    if len(kinds) != 1:
        raise TrainingError(f"mixed input kinds {sorted(kinds)}")
    if any(w.label is None for w in data):
        raise TrainingError("unlabeled windows cannot be used for training")
    x = np.stack([w.normalized(normalization) for w in data])
    y = np.array([1 if w.label == "present" else 0 for w in data])
    return x, y, kinds.pop()


def train(data, cfg: TrainConfig | None = None) -> MlpModel:
    cfg = cfg or TrainConfig()
    x, y, kind = window_arrays(data, cfg.normalization)
    return train_arrays(x, y, cfg, input_kind=kind)


# --- cost accounting ---------------------------------------------------------

RELU_FLOPS = 1
# max-subtract, exp, sum, divide per output unit
SOFTMAX_FLOPS_PER_UNIT = 4


def count_flops(m: MlpModel, include_activations: bool = False) -> int:
    """Floating point operations for one inference.

    A dense layer costs ``2 * n_in * n_out`` (one multiply and one add per
    weight); bias adds are folded into that count.  With
    ``include_activations`` each hidden unit adds RELU_FLOPS and each output
    unit SOFTMAX_FLOPS_PER_UNIT.
    """
    total = sum(2 * a * b for a, b in m.shapes)
    if include_activations:
        total += RELU_FLOPS * sum(b for _, b in m.shapes[:-1])
        total += SOFTMAX_FLOPS_PER_UNIT * m.shapes[-1][1]
    return total


def correlation_flops(l_ra: int = 139) -> int:
    """Per-antenna correlation cost: one complex multiply per RE (6 flops)
    plus a radix-2-equivalent FFT estimate of ``5 L log2 L``."""
    return int(round(6 * l_ra + 5 * l_ra * math.log2(l_ra)))


def receiver_flops(m: MlpModel, num_roots: int = 7, num_windows: int = 64,
                   l_ra: int = 139, num_rx: int = 1) -> int:
    """One occasion through the hybrid receiver: correlations plus one NN pass per RAPID."""
    return num_roots * num_rx * correlation_flops(l_ra) + num_windows * count_flops(m)


# --- persistence -------------------------------------------------------------

def model_to_dict(m: MlpModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "input_kind": m.input_kind,
        "normalization": m.normalization,
        "layers": [
            {"shape": list(w.shape), "weights": w.reshape(-1).tolist(), "bias": b.tolist()}
            for w, b in zip(m.weights, m.biases)
        ],
        "train_meta": m.train_meta,
    }


def model_from_dict(doc: dict) -> MlpModel:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("not a model document (missing format_version)")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format_version {doc['format_version']!r} "
            f"(this build reads {FORMAT_VERSION})")
    try:
        weights, biases = [], []
        for i, layer in enumerate(doc["layers"]):
            rows, cols = layer["shape"]
            w = np.array(layer["weights"], dtype=float)
            b = np.array(layer["bias"], dtype=float)
            if w.size != rows * cols or b.size != cols:
                raise ModelFormatError(f"layer {i}: array sizes do not match shape {rows}x{cols}")
            weights.append(w.reshape(rows, cols))
            biases.append(b)
        m = MlpModel(weights, biases, doc["input_kind"], doc.get("normalization", "profile_mean"),
                     doc.get("train_meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    if not all(np.all(np.isfinite(p)) for p in m.params()):
        raise ModelFormatError("model contains non-finite parameters")
    return m


def save_model(m: MlpModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m), indent=1) + "\n")


def load_model(path) -> MlpModel:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: cannot parse model file: {exc}") from exc
    return model_from_dict(doc)
