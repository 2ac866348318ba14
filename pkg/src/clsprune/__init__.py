"""Training-free visual token pruning driven by vision-encoder CLS attention."""

from .cost import ModelDims, kv_memory, prefill_flops
from .diagnostics import consistency_report, k_sweep, overlap_proportion, spearman
from .numeric import descending_ranks, pearson, softmax
from .scoring import (
    EnsembleFn,
    ImportanceScore,
    decoder_layer_importance,
    encoder_ensemble_importance,
    encoder_layer_importance,
    random_importance,
)
from .selection import PrunePlan, TokenSelection, make_prune_plan, prune_sequence, top_u
from .simulator import SimConfig, SimOutput, simulate, simulate_with_pruning
from .trace import AttentionTrace, Role, read_trace, write_trace

__all__ = [
    "AttentionTrace",
    "EnsembleFn",
    "ImportanceScore",
    "ModelDims",
    "PrunePlan",
    "Role",
    "SimConfig",
    "SimOutput",
    "TokenSelection",
    "consistency_report",
    "decoder_layer_importance",
    "descending_ranks",
    "encoder_ensemble_importance",
    "encoder_layer_importance",
    "k_sweep",
    "kv_memory",
    "make_prune_plan",
    "overlap_proportion",
    "pearson",
    "prefill_flops",
    "prune_sequence",
    "random_importance",
    "read_trace",
    "simulate",
    "simulate_with_pruning",
    "softmax",
    "spearman",
    "top_u",
    "write_trace",
]
