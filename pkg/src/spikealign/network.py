"""Network construction: topology, statistical weight init, fixed feedback maps.

Forward weights are drawn uniformly around a desired mean picked so the
drive into each layer lands in the working range of the LIF neurons; the
mean and second moment are functions of the target input statistics
(mean 8, second moment 164) and the layer width.  Fixed random feedback
matrices reuse the same per-layer statistics, scaled by gamma, and map the
output-layer error down to each hidden layer.  They never change during
training.
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import seeds

_CKPT_MAGIC = b"SPKALGN1"
_FEEDBACK_MODES = ("direct", "layerwise")


@dataclass(frozen=True)
class NetworkTopology:
    """Layer sizes (e.g. (784, 1000, 10)) plus the init seed."""

    layer_dims: tuple
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValueError(f"need at least 2 layers, got {dims}")
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer dims must be >= 1, got {dims}")

    @property
    def n_weight_layers(self) -> int:
        return len(self.layer_dims) - 1


@dataclass(frozen=True)
class InitStats:
    """Target statistics steering the weight initialization.

    v_mean / v_second: desired mean and second moment of the input signals;
    alpha: proportionality constant linking drive to firing activity;
    bias_init: initial bias value (also baked into the weight-moment
    formulas); gamma: default scale factor for the feedback matrices.
    """

    v_mean: float = 8.0
    v_second: float = 164.0
    alpha: float = 0.066
    bias_init: float = 0.8
    gamma: float = 0.0338

    def __post_init__(self):
        if not (self.v_second > 0):
            raise ValueError(f"v_second must be > 0, got {self.v_second}")
        if not (self.alpha > 0):
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not (self.gamma > 0):
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass
class NetworkState:
    """Mutable training state: weights/biases, plus the frozen feedback maps.

    weights[i] has shape (dims[i+1], dims[i]).  feedback[i] carries error to
    hidden layer i+1: from the output layer in "direct" mode (shape
    (dims[i+1], dims[-1])), or from the next layer up in "layerwise" mode
    (shape (dims[i+1], dims[i+2])).
    """

    weights: list
    biases: list
    feedback: list
    feedback_mode: str = "direct"

    def __post_init__(self):
        if self.feedback_mode not in _FEEDBACK_MODES:
            raise ValueError(f"feedback_mode must be one of {_FEEDBACK_MODES}")
        dims = self.dims
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]):
                raise ValueError(f"weight {i} has shape {w.shape}, expected {(dims[i+1], dims[i])}")
            if b.shape != (dims[i + 1],):
                raise ValueError(f"bias {i} has shape {b.shape}, expected ({dims[i+1]},)")
        for i, B in enumerate(self.feedback):
            cols = dims[-1] if self.feedback_mode == "direct" else dims[i + 2]
            if B.shape != (dims[i + 1], cols):
                raise ValueError(
                    f"feedback {i} has shape {B.shape}, expected {(dims[i+1], cols)}"
                )

    @property
    def dims(self) -> tuple:
        return tuple([self.weights[0].shape[1]] + [w.shape[0] for w in self.weights])

    def copy(self) -> "NetworkState":
        return NetworkState(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [B.copy() for B in self.feedback],
            self.feedback_mode,
        )

    def checksum(self, feedback_only: bool = False) -> str:
        h = hashlib.sha256()
        arrays = self.feedback if feedback_only else self.weights + self.biases + self.feedback
        for a in arrays:
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def weight_moments(n_inputs: int, stats: InitStats) -> tuple[float, float]:
    """Desired (mean, std) for a weight matrix summing over ``n_inputs`` presynapses.

    mean = (v_mean - b) / (alpha * N * v_mean); the second moment follows the
    companion closed form, and std = sqrt(second_moment - mean^2).  Raises if
    the requested statistics are degenerate (negative variance).

    N is the presynaptic (input) dimension of the matrix: modeling each
    presynaptic activity as alpha times its drive, these moments make the
    summed drive into every layer reproduce the target input statistics
    (v_mean, v_second) regardless of layer widths.
    """
    vm, vs, al, b = stats.v_mean, stats.v_second, stats.alpha, stats.bias_init
    n = float(n_inputs)
    mean = (vm - b) / (al * n * vm)
    second = (vs + al**2 * (n - n**2) * mean**2 * vm**2 - 2.0 * b * al * n * vm * mean - b**2) / (
        al**2 * n * vs
    )
    var = second - mean**2
    if var < 0:
        raise ValueError(
            f"degenerate init statistics for layer of {n_nodes} nodes: "
            f"second moment {second} < mean^2 {mean**2}"
        )
    return mean, float(np.sqrt(var))


def _uniform_matrix(rng, shape, mean, std):
    # uniform with the requested mean/std: mean + 2*sqrt(3)*std*(rand - 0.5)
    return mean + 2.0 * np.sqrt(3.0) * std * (rng.random(shape) - 0.5)


def init_weights(topology: NetworkTopology, stats: InitStats) -> tuple[list, list]:
    """Sample forward weights and constant biases for every layer."""
    dims = topology.layer_dims
    weights, biases = [], []
    for i in range(topology.n_weight_layers):
        mean, std = weight_moments(dims[i], stats)
        rng = seeds.seed_stream(topology.seed, seeds.WEIGHTS, i)
        weights.append(_uniform_matrix(rng, (dims[i + 1], dims[i]), mean, std))
        biases.append(np.full(dims[i + 1], stats.bias_init, dtype=np.float64))
    return weights, biases


def init_feedback(
    topology: NetworkTopology,
    stats: InitStats,
    gamma: float | None = None,
    mode: str = "direct",
) -> list:
    """Sample the fixed random feedback matrices for every hidden layer.

    "direct" mode composes one fresh random factor per downstream layer
    (each factor shaped like the transpose of that layer's weight matrix and
    sharing its statistics), scaled by gamma^D, so feedback i maps the
    output error straight to hidden layer i+1.  "layerwise" mode keeps a
    single gamma-scaled factor per hop for chained (FA-style) transport.
    For one hidden layer the two modes coincide.
    """
    if mode not in _FEEDBACK_MODES:
        raise ValueError(f"mode must be one of {_FEEDBACK_MODES}")
    if gamma is None:
        gamma = stats.gamma
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    dims = topology.layer_dims
    m = topology.n_weight_layers
    feedback = []
    for i in range(m - 1):
        if mode == "layerwise":
            mean, std = weight_moments(dims[i + 1], stats)
            rng = seeds.seed_stream(topology.seed, seeds.FEEDBACK, i, i + 1)
            feedback.append(gamma * _uniform_matrix(rng, (dims[i + 1], dims[i + 2]), mean, std))
            continue
        downstream = range(i + 1, m)  # weight layers below hidden layer i+1
        B = None
        for j in downstream:
            # each factor: transposed shape and entry statistics of weight layer j
            mean, std = weight_moments(dims[j], stats)
            rng = seeds.seed_stream(topology.seed, seeds.FEEDBACK, i, j)
            factor = _uniform_matrix(rng, (dims[j], dims[j + 1]), mean, std)
            B = factor if B is None else B @ factor
        feedback.append(gamma ** len(downstream) * B)
    return feedback


def build_network(
    topology: NetworkTopology,
    stats: InitStats | None = None,
    gamma: float | None = None,
    feedback_mode: str = "direct",
) -> NetworkState:
    """Initialize a full network (weights, biases, feedback) from one seed."""
    stats = stats or InitStats()
    weights, biases = init_weights(topology, stats)
    feedback = init_feedback(topology, stats, gamma=gamma, mode=feedback_mode)
    return NetworkState(weights, biases, feedback, feedback_mode)


def save_checkpoint(state: NetworkState, path) -> None:
    """Write a network to the flat binary checkpoint format.

    Layout (little-endian): magic "SPKALGN1"; u32 layer count; u32 dims;
    u8 feedback mode (1 direct, 2 layerwise); u32 feedback count; then
    row-major float64 blocks for W_1..W_M, b_1..b_M, B_1..B_F.
    """
    dims = state.dims
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(dims)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        f.write(struct.pack("<B", 1 if state.feedback_mode == "direct" else 2))
        f.write(struct.pack("<I", len(state.feedback)))
        for arr in state.weights + state.biases + state.feedback:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> NetworkState:
    """Read a network back from `save_checkpoint` output."""
    with open(path, "rb") as f:
        magic = f.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a spikealign checkpoint (magic {magic!r})")
        (n_layers,) = struct.unpack("<I", f.read(4))
        dims = struct.unpack(f"<{n_layers}I", f.read(4 * n_layers))
        (mode_code,) = struct.unpack("<B", f.read(1))
        if mode_code not in (1, 2):
            raise ValueError(f"unknown feedback mode code {mode_code}")
        mode = "direct" if mode_code == 1 else "layerwise"
        (n_fb,) = struct.unpack("<I", f.read(4))

        def read_block(shape):
            n = int(np.prod(shape))
            buf = f.read(8 * n)
            if len(buf) != 8 * n:
                raise ValueError(f"truncated checkpoint: wanted {8*n} bytes, got {len(buf)}")
            return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

        m = n_layers - 1
        weights = [read_block((dims[i + 1], dims[i])) for i in range(m)]
        biases = [read_block((dims[i + 1],)) for i in range(m)]
        fb_cols = [dims[-1] if mode == "direct" else dims[i + 2] for i in range(n_fb)]
        feedback = [read_block((dims[i + 1], fb_cols[i])) for i in range(n_fb)]
    return NetworkState(weights, biases, feedback, mode)
