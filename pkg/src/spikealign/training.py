"""End-to-end training engine for spiking networks.

Each sample is presented as a static input vector injected at every step of
a fixed simulation interval (default 100 ms).  The first part of the
interval (default 20 ms) lets the layer states settle; errors are computed
and accumulated only over the remaining training window.  The per-step
output error e(t) = spikes(t) - onehot(target) is transported to each layer
by one of four rules:

  bp    layerwise chain through exact weight transposes,
  fa    layerwise chain through fixed random matrices,
  dfa   output error injected directly through fixed random matrices,
  adfa  dfa with an arbitrary backward nonlinearity g in place of the
        surrogate derivative.

Gradients are accumulated over all training-window steps of all samples in
a minibatch and applied once per minibatch with per-layer learning rates
inversely proportional to each layer's input dimension.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import seeds
from .backward import BackwardFn, LifSurrogate
from .datasets import Dataset
from .lif import LifParams, step_inplace
from .network import NetworkState

MECHANISMS = ("bp", "fa", "dfa", "adfa")

# lr_base calibrated per mechanism on the desk preset (hidden 100); the
# per-layer rate is lr_base / input_dim.
LR_DEFAULTS = {"bp": 0.5, "fa": 0.5, "dfa": 0.5, "adfa": 0.5}


@dataclass(frozen=True)
class TrainConfig:
    """Mechanism, timing protocol, and optimization knobs for one run."""

    mechanism: str = "adfa"
    backward_fn: BackwardFn | None = None  # None -> surrogate derivative of the LIF params
    epochs: int = 20
    batch_size: int = 100
    interval_ms: float = 100.0
    settle_ms: float = 20.0
    lr_base: float | None = None  # None -> LR_DEFAULTS[mechanism]
    seed: int = 0
    lif: LifParams = field(default_factory=LifParams)
    allow_g_override: bool = False

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0 <= self.settle_ms < self.interval_ms):
            raise ValueError(
                f"need 0 <= settle_ms < interval_ms, got {self.settle_ms} / {self.interval_ms}"
            )
        self.total_steps  # validate divisibility eagerly
        self.settle_steps
        if self.mechanism != "adfa" and self.backward_fn is not None:
            if not isinstance(self.backward_fn, LifSurrogate) and not self.allow_g_override:
                raise ValueError(
                    f"{self.mechanism} uses the surrogate derivative; pass "
                    "allow_g_override=True to substitute another backward function"
                )

    def _steps(self, ms: float) -> int:
        ratio = ms / self.lif.dt
        steps = int(round(ratio))
        if abs(ratio - steps) > 1e-6:
            raise ValueError(f"{ms} ms is not an integer number of dt={self.lif.dt} ms steps")
        return steps

    @property
    def total_steps(self) -> int:
        return self._steps(self.interval_ms)

    @property
    def settle_steps(self) -> int:
        return self._steps(self.settle_ms)

    @property
    def train_steps(self) -> int:
        return self.total_steps - self.settle_steps

    def resolve_backward(self) -> BackwardFn:
        return self.backward_fn if self.backward_fn is not None else LifSurrogate(self.lif)

    def resolve_lr(self) -> float:
        return self.lr_base if self.lr_base is not None else LR_DEFAULTS[self.mechanism]

    def with_(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


@dataclass
class ForwardTrace:
    """Recording of one sample's simulation.

    Drives and spikes cover the training window only (settle steps are
    simulated but not recorded for learning); output spike counts cover the
    full interval, since decoding uses the whole presentation.
    """

    input: np.ndarray  # static input vector
    drives: list  # per weight layer, (n, train_steps)
    spikes: list  # per weight layer, (n, train_steps)
    output_counts: np.ndarray  # (n_out,)
    total_steps: int
    settle_steps: int

    def presyn(self, n: int) -> np.ndarray:
        """Presynaptic activity feeding weight layer n over the training window."""
        if n == 0:
            return np.broadcast_to(self.input[:, None], (len(self.input), self.train_steps))
        return self.spikes[n - 1]

    @property
    def train_steps(self) -> int:
        return self.total_steps - self.settle_steps


@dataclass
class EpochStats:
    epoch: int
    train_acc: float
    test_acc: float
    wall_ms: float


@dataclass
class RunRecord:
    """Per-epoch accuracies for one training run, plus the config fingerprint."""

    epochs: list
    fingerprint: str = ""

    @property
    def final_test_acc(self) -> float:
        return self.epochs[-1].test_acc if self.epochs else float("nan")

    @property
    def best_test_acc(self) -> float:
        return max(s.test_acc for s in self.epochs) if self.epochs else float("nan")

    def write_csv(self, path, timing: bool = True) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("epoch,train_acc,test_acc,wall_ms\n" if timing else "epoch,train_acc,test_acc\n")
            for s in self.epochs:
                row = f"{s.epoch},{s.train_acc!r},{s.test_acc!r}"
                f.write(row + (f",{int(round(s.wall_ms))}\n" if timing else "\n"))


def _check_feedback_compat(net: NetworkState, mechanism: str) -> None:
    m = len(net.weights)
    if mechanism == "bp" or m == 1:
        return
    if len(net.feedback) != m - 1:
        raise ValueError(
            f"{mechanism} needs one feedback matrix per hidden layer "
            f"({m - 1}), found {len(net.feedback)}"
        )
    if m > 2:
        want = "layerwise" if mechanism == "fa" else "direct"
        if net.feedback_mode != want:
            raise ValueError(
                f"{mechanism} on a {m}-layer stack needs feedback_mode={want!r}, "
                f"network has {net.feedback_mode!r}"
            )


def forward_sample(net: NetworkState, x: np.ndarray, cfg: TrainConfig) -> ForwardTrace:
    """Simulate one sample presentation and record its trace.

    The static input is injected as the first layer's presynaptic activity
    at every step of the interval.
    """
    x = np.asarray(x, dtype=np.float64)
    dims = net.dims
    if x.shape != (dims[0],):
        raise ValueError(f"input shape {x.shape} does not match input layer ({dims[0]},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")

    m = len(net.weights)
    lif = cfg.lif
    total, settle = cfg.total_steps, cfg.settle_steps
    t_train = total - settle

    h = [np.zeros((dims[i + 1], 1)) for i in range(m)]
    refr = [np.zeros((dims[i + 1], 1), dtype=np.int32) for i in range(m)]
    spk = [np.empty((dims[i + 1], 1)) for i in range(m)]
    drives = [np.empty((dims[i + 1], t_train)) for i in range(m)]
    spikes = [np.empty((dims[i + 1], t_train)) for i in range(m)]
    counts = np.zeros(dims[-1])

    v1 = net.weights[0] @ x[:, None] + net.biases[0][:, None]
    for t in range(total):
        for n in range(m):
            v = v1 if n == 0 else net.weights[n] @ spk[n - 1] + net.biases[n][:, None]
            step_inplace(h[n], refr[n], np.ascontiguousarray(v), lif, spk[n])
            if t >= settle:
                drives[n][:, t - settle] = v[:, 0]
                spikes[n][:, t - settle] = spk[n][:, 0]
        counts += spk[m - 1][:, 0]
    return ForwardTrace(x, drives, spikes, counts, total, settle)


def decode_output(trace: ForwardTrace) -> int:
    """Predicted class: most active output neuron; ties go to the lowest index."""
    return int(np.argmax(trace.output_counts))


def output_error(trace: ForwardTrace, target: int) -> np.ndarray:
    """Per-step output error e(t) = spikes(t) - onehot(target) over the training window."""
    n_out = trace.spikes[-1].shape[0]
    if not (0 <= target < n_out):
        raise ValueError(f"label {target} out of range for {n_out} output neurons")
    e = trace.spikes[-1].copy()
    e[target, :] -= 1.0
    return e


def backward_errors(
    mechanism: str,
    trace: ForwardTrace,
    e: np.ndarray,
    net: NetworkState,
    g: BackwardFn,
) -> list:
    """Per-layer modulated errors e_n(t) for every weight layer.

    Output layer: e(t) * g(a_out(t)).  Hidden layers: the projected error
    (chained transposes for bp, chained feedback for fa, direct feedback of
    the raw output error for dfa/adfa) times g(a_n(t)).
    """
    if mechanism not in MECHANISMS:
        raise ValueError(f"mechanism must be one of {MECHANISMS}, got {mechanism!r}")
    _check_feedback_compat(net, mechanism)
    m = len(net.weights)
    gm = [g.values(trace.drives[n]) for n in range(m)]
    errs = [None] * m
    errs[m - 1] = e * gm[m - 1]
    for n in range(m - 2, -1, -1):
        if mechanism == "bp":
            proj = net.weights[n + 1].T @ errs[n + 1]
        elif mechanism == "fa":
            proj = net.feedback[n] @ errs[n + 1]
        else:
            proj = net.feedback[n] @ e
        errs[n] = proj * gm[n]
    return errs


def accumulate_and_apply(net: NetworkState, batch: list, cfg: TrainConfig) -> NetworkState:
    """Apply one minibatch update from (trace, per-layer errors) pairs.

    dW_n = -lr_n * sum over samples and steps of e_n(t) x_n(t)^T, with
    lr_n = lr_base / input_dim(n); biases likewise from the summed errors.
    Accumulation is sample-major then step-major, so runs are reproducible.
    """
    dims = net.dims
    m = len(net.weights)
    lr = cfg.resolve_lr()
    dW = [np.zeros_like(w) for w in net.weights]
    db = [np.zeros_like(b) for b in net.biases]
    for trace, errs in batch:
        for n in range(m):
            if n == 0:
                dW[0] += np.outer(errs[0].sum(axis=1), trace.input)
            else:
                dW[n] += errs[n] @ trace.spikes[n - 1].T
            db[n] += errs[n].sum(axis=1)
    for n in range(m):
        if not (np.all(np.isfinite(dW[n])) and np.all(np.isfinite(db[n]))):
            raise FloatingPointError(f"non-finite gradient accumulated for layer {n}")
        lr_n = lr / dims[n]
        net.weights[n] -= lr_n * dW[n]
        net.biases[n] -= lr_n * db[n]
    return net


def _batch_pass(net, X, cfg, g, targets=None):
    """Fused forward(+backward) over a batch; X is (input_dim, batch).

    Returns (predictions, grads) where grads is None in evaluation mode and
    (dW, db) in learning mode.  Matches the composition of the public ops
    up to floating-point summation order (errors are accumulated step-major
    across the whole batch here).
    """
    dims = net.dims
    m = len(net.weights)
    B = X.shape[1]
    lif = cfg.lif
    total, settle = cfg.total_steps, cfg.settle_steps
    learn = targets is not None
    mech = cfg.mechanism

    h = [np.zeros((dims[i + 1], B)) for i in range(m)]
    refr = [np.zeros((dims[i + 1], B), dtype=np.int32) for i in range(m)]
    spk = [np.empty((dims[i + 1], B)) for i in range(m)]
    counts = np.zeros((dims[-1], B))

    v1 = net.weights[0] @ X + net.biases[0][:, None]
    if learn:
        g1 = g.values(v1)
        onehot = np.zeros((dims[-1], B))
        onehot[targets, np.arange(B)] = 1.0
        S_raw = np.zeros((dims[-1], B))
        sum_e = [np.zeros((dims[i + 1], B)) for i in range(m)]
        dW = [np.zeros_like(w) for w in net.weights]

    vstep = [None] * m
    for t in range(total):
        for n in range(m):
            if n == 0:
                v = v1
            else:
                v = net.weights[n] @ spk[n - 1] + net.biases[n][:, None]
                vstep[n] = v
            step_inplace(h[n], refr[n], v, lif, spk[n])
        counts += spk[m - 1]
        if learn and t >= settle:
            e = spk[m - 1] - onehot
            S_raw += e
            e_next = e * (g1 if m == 1 else g.values(vstep[m - 1]))
            if m >= 2:
                sum_e[m - 1] += e_next
                dW[m - 1] += e_next @ spk[m - 2].T
            for n in range(m - 2, 0, -1):
                if mech == "bp":
                    proj = net.weights[n + 1].T @ e_next
                elif mech == "fa":
                    proj = net.feedback[n] @ e_next
                else:
                    proj = net.feedback[n] @ e
                e_next = proj * g.values(vstep[n])
                sum_e[n] += e_next
                dW[n] += e_next @ spk[n - 1].T

    preds = np.argmax(counts, axis=0)
    if not learn:
        return preds, None

    # First hidden layer: drive and presyn are static, so its summed error
    # factors through the summed upstream error.
    if m == 1:
        e0 = S_raw * g1
    elif mech == "bp":
        e0 = (net.weights[1].T @ sum_e[1]) * g1
    elif mech == "fa":
        e0 = (net.feedback[0] @ sum_e[1]) * g1
    else:
        e0 = (net.feedback[0] @ S_raw) * g1
    sum_e[0] = e0
    dW[0] = e0 @ X.T
    db = [se.sum(axis=1) for se in sum_e]
    return preds, (dW, db)


def _apply_grads(net: NetworkState, grads, cfg: TrainConfig) -> None:
    dW, db = grads
    dims = net.dims
    lr = cfg.resolve_lr()
    for n in range(len(net.weights)):
        if not (np.all(np.isfinite(dW[n])) and np.all(np.isfinite(db[n]))):
            raise FloatingPointError(f"non-finite gradient accumulated for layer {n}")
        lr_n = lr / dims[n]
        net.weights[n] -= lr_n * dW[n]
        net.biases[n] -= lr_n * db[n]


def _as_columns(images: np.ndarray, idx) -> np.ndarray:
    return np.ascontiguousarray(images[idx].T)


def evaluate(net: NetworkState, ds: Dataset, cfg: TrainConfig) -> float:
    """Fraction of samples whose decoded class matches the label (no learning)."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    g = cfg.resolve_backward()
    correct = 0
    for start in range(0, len(ds), cfg.batch_size):
        idx = slice(start, min(start + cfg.batch_size, len(ds)))
        preds, _ = _batch_pass(net, _as_columns(ds.images, idx), cfg, g)
        correct += int((preds == ds.labels[idx]).sum())
    return correct / len(ds)


def train(
    net: NetworkState,
    train_ds: Dataset,
    test_ds: Dataset,
    cfg: TrainConfig,
    epoch_hook=None,
) -> RunRecord:
    """Train for cfg.epochs epochs, recording per-epoch train/test accuracy.

    Training accuracy is measured on the fly from each minibatch's own
    forward pass (weights update between batches); test accuracy comes from
    a full evaluation pass at the end of each epoch.  Deterministic given
    (net seed, cfg.seed): sample order is reshuffled per epoch from a
    dedicated RNG stream.
    """
    if len(train_ds) == 0 or len(test_ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    _check_feedback_compat(net, cfg.mechanism)
    g = cfg.resolve_backward()
    stats = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = seeds.seed_stream(cfg.seed, seeds.SHUFFLE, epoch).permutation(len(train_ds))
        correct = 0
        for start in range(0, len(train_ds), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            preds, grads = _batch_pass(
                net, _as_columns(train_ds.images, idx), cfg, g, targets=train_ds.labels[idx]
            )
            correct += int((preds == train_ds.labels[idx]).sum())
            _apply_grads(net, grads, cfg)
        train_acc = correct / len(train_ds)
        test_acc = evaluate(net, test_ds, cfg)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        stats.append(EpochStats(epoch, train_acc, test_acc, wall_ms))
        if epoch_hook is not None:
            epoch_hook(epoch, net, stats[-1])
    return RunRecord(stats)
