"""MoE routing laboratory: competitive gate propagation vs. baseline top-k.

Everything of substance lives in the compiled extension; this package
re-exports it under stable names.
"""

from gatepro._core import (
    ConfigError,
    ContractViolation,
    IoError,
    NumericalFailure,
    Rng,
    avg_angle,
    avg_cosine_similarity,
    canonical_config,
    compete,
    default_config,
    eval_accuracy,
    gate_similarity,
    gelu,
    most_similar,
    read_metrics,
    route_baseline,
    route_gatepro,
    softmax,
    softmax_over,
    spectral_entropy,
    sym_eigenvalues,
    top_k_indices,
    train,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "IoError",
    "NumericalFailure",
    "Rng",
    "avg_angle",
    "avg_cosine_similarity",
    "canonical_config",
    "compete",
    "default_config",
    "eval_accuracy",
    "gate_similarity",
    "gelu",
    "most_similar",
    "read_metrics",
    "route_baseline",
    "route_gatepro",
    "softmax",
    "softmax_over",
    "spectral_entropy",
    "sym_eigenvalues",
    "top_k_indices",
    "train",
]
