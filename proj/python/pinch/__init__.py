"""Layer-gated pruning experiments: core operations exposed from C++."""

from ._core import (
    ConfigError,
    DivergenceError,
    IoError,
    ShapeError,
    ctc_grad,
    ctc_loss,
    edit_distance,
    gated_forward,
    greedy_decode,
    gumbel_lambda,
    hard_mask,
    layer_sparsity,
    mapsswe,
    normal_two_tailed_p,
    run_experiment,
    soft_mask,
    token_error_rate,
    train_summary,
    ump_mask,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "IoError",
    "ShapeError",
    "ctc_grad",
    "ctc_loss",
    "edit_distance",
    "gated_forward",
    "greedy_decode",
    "gumbel_lambda",
    "hard_mask",
    "layer_sparsity",
    "mapsswe",
    "normal_two_tailed_p",
    "run_experiment",
    "soft_mask",
    "token_error_rate",
    "train_summary",
    "ump_mask",
]
