"""Spiking-network training with feedback-alignment-family learning rules."""

from .backward import (
    BackwardFn,
    CorrelationConfig,
    Gaussian,
    LifSurrogate,
    Opto,
    Prfs,
    UndefinedCorrelationError,
    bin_by_correlation,
    correlation,
    evaluate as evaluate_backward,
    format_backward_fn,
    parse_backward_fn,
    prfs_eta_samples,
    sample_prfs,
)
from .datasets import Dataset, apply_scale, load_idx, load_pair, scale_inputs
from .lif import LayerState, LifParams, integrate_step, layer_drive
from .network import (
    InitStats,
    NetworkState,
    NetworkTopology,
    build_network,
    init_feedback,
    init_weights,
    load_checkpoint,
    save_checkpoint,
    weight_moments,
)
from .training import (
    ForwardTrace,
    RunRecord,
    TrainConfig,
    accumulate_and_apply,
    backward_errors,
    decode_output,
    evaluate,
    forward_sample,
    output_error,
    train,
)

__version__ = "0.1.0"
