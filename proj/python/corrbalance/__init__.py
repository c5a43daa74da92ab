"""Correlation-aware long-tailed classification workbench.

Python bindings over the C++ core: the learnable class-center graph, the
adaptive correlation-weighted loss and its re-balancing baselines, the
self-attention graph encoder, synthetic scene generation and recall metrics.
"""

from ._core import (
    ClassGraph,
    ConfigError,
    Dataset,
    DimensionError,
    EncoderConfig,
    EncoderStack,
    InputError,
    LabelError,
    LossResult,
    NumericError,
    StalenessError,
    TrainedModel,
    __version__,
    center_loss,
    center_loss_grad,
    class_balanced_loss,
    drop_mask,
    fit,
    focal_loss,
    generate_dataset,
    inject_label_noise,
    l2_distance,
    normalize_correlation,
    pcpl_loss,
    plain_ce,
    rank_predictions,
    reweight_pow_loss,
    stable_softmax,
)

__all__ = [
    "ClassGraph",
    "ConfigError",
    "Dataset",
    "DimensionError",
    "EncoderConfig",
    "EncoderStack",
    "InputError",
    "LabelError",
    "LossResult",
    "NumericError",
    "StalenessError",
    "TrainedModel",
    "__version__",
    "center_loss",
    "center_loss_grad",
    "class_balanced_loss",
    "drop_mask",
    "fit",
    "focal_loss",
    "generate_dataset",
    "inject_label_noise",
    "l2_distance",
    "normalize_correlation",
    "pcpl_loss",
    "plain_ce",
    "rank_predictions",
    "reweight_pow_loss",
    "stable_softmax",
]
