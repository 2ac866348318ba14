"""Closed-form decoder-only prefill FLOPs and KV-cache size.

Per-layer prefill cost for ``n`` tokens at width ``d`` with FFN width ``m``::

    8 n d^2   four d x d projections (q, k, v, out), 2 FLOPs per MAC
    4 n^2 d   attention scores and context
    4 n d m   up and down FFN matrices

Vocabulary projection and the vision encoder are left out: pruning does not
change them, so they cancel in before/after comparisons.  Wall-clock latency is
not modelled.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction

from .errors import InvalidConfig

ASSUMPTIONS = (
    "decoder-only prefill; vocabulary projection and vision encoder excluded",
    "per-layer FLOPs = 8*n*d^2 + 4*n^2*d + 4*n*d*m",
    "KV elements = 2 * layers * tokens * d",
    "layers before the prune layer see all visual tokens",
)


@dataclass(frozen=True)
class ModelDims:
    d: int
    ffn: int
    layers: int
    n_text: int
    n_vis_full: int
    n_vis_kept: int
    prune_layer: int = 0  # 0 prunes before the LLM

    def __post_init__(self):
        if min(self.d, self.ffn, self.layers) < 1:
            raise InvalidConfig("d, ffn and layers must be positive")
        if self.n_text < 0 or self.n_vis_kept < 0:
            raise InvalidConfig("token counts must be non-negative")
        if not self.n_vis_kept <= self.n_vis_full:
            raise InvalidConfig(f"kept tokens {self.n_vis_kept} exceed available {self.n_vis_full}")
        if not 0 <= self.prune_layer <= self.layers:
            raise InvalidConfig(f"prune layer {self.prune_layer} outside 0..{self.layers}")
        if self.n_text + self.n_vis_kept < 1:
            raise InvalidConfig("compressed sequence would be empty")

    @property
    def n_full(self) -> int:
        return self.n_text + self.n_vis_full

    @property
    def n_kept(self) -> int:
        return self.n_text + self.n_vis_kept


@dataclass(frozen=True)
class CostReport:
    full: int
    compressed: int

    @property
    def exact_ratio(self) -> Fraction:
        return Fraction(self.compressed, self.full)

    @property
    def ratio(self) -> float:
        return self.compressed / self.full

    def to_dict(self) -> dict:
        return {"full": self.full, "compressed": self.compressed, "ratio": self.ratio}


def layer_flops(n: int, d: int, ffn: int) -> int:
    return 8 * n * d * d + 4 * n * n * d + 4 * n * d * ffn


def prefill_flops(dims: ModelDims) -> CostReport:
    per_full = layer_flops(dims.n_full, dims.d, dims.ffn)
    per_kept = layer_flops(dims.n_kept, dims.d, dims.ffn)
    p = dims.prune_layer
    return CostReport(dims.layers * per_full, p * per_full + (dims.layers - p) * per_kept)


def kv_memory(dims: ModelDims) -> CostReport:
    """KV-cache element counts (keys and values, all layers)."""
    p = dims.prune_layer
    full = 2 * dims.layers * dims.n_full * dims.d
    compressed = 2 * (p * dims.n_full + (dims.layers - p) * dims.n_kept) * dims.d
    return CostReport(full, compressed)


def cost_json(dims: ModelDims) -> str:
    return json.dumps(
        {
            "dims": asdict(dims),
            "prefill_flops": prefill_flops(dims).to_dict(),
            "kv_elements": kv_memory(dims).to_dict(),
            "assumptions": list(ASSUMPTIONS),
        },
        indent=2,
    )
