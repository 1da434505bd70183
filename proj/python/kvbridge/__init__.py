"""Python bindings for the kvbridge C++ core."""

from ._kvbridge import (
    CacheMiss,
    Model,
    ModelConfig,
    NoData,
    ParseError,
    RecomputeConfig,
    agreement,
    build_model,
    context_hash,
    enumerate_groups,
    layer_bytes,
    plan,
    prefill_logits,
    profile,
    report,
    reuse_logits,
    serve,
    synthetic_dataset,
)

__all__ = [
    "CacheMiss",
    "Model",
    "ModelConfig",
    "NoData",
    "ParseError",
    "RecomputeConfig",
    "agreement",
    "build_model",
    "context_hash",
    "enumerate_groups",
    "layer_bytes",
    "plan",
    "prefill_logits",
    "profile",
    "report",
    "reuse_logits",
    "serve",
    "synthetic_dataset",
]
