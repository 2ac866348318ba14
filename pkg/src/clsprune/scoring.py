"""Visual-token importance from attention traces.

Encoder layers are 0-indexed.  The anchor layer is the penultimate one,
``L - 2``, because LLaVA-style models feed penultimate-layer features to the
language model.  An ensemble of ``K`` layers covers ``L-1-K .. L-2``; the final
encoder layer is never used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .errors import FormatError, InvalidInput, InvalidK, InvalidLayer, InvalidTrace, NoOutputTokens
from .trace import AttentionTrace, Role

DEFAULT_K = 3


class EnsembleFn(str, Enum):
    AVG = "avg"
    MAX = "max"
    MIN = "min"

    def reduce(self, stacked: np.ndarray) -> np.ndarray:
        """Elementwise reduction over axis 0 of a ``(K, N_v)`` stack."""
        if self is EnsembleFn.AVG:
            return stacked.mean(axis=0)
        if self is EnsembleFn.MAX:
            return stacked.max(axis=0)
        return stacked.min(axis=0)


@dataclass(frozen=True)
class ScoreSource:
    kind: str  # encoder_layer | encoder_ensemble | decoder_layer | random
    layer: int | None = None
    k: int | None = None
    ensemble: EnsembleFn | None = None
    seed: int | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        for key in ("layer", "k", "seed"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.ensemble is not None:
            out["ensemble"] = self.ensemble.value
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScoreSource":
        ens = d.get("ensemble")
        return cls(
            kind=str(d["kind"]),
            layer=d.get("layer"),
            k=d.get("k"),
            ensemble=EnsembleFn(ens) if ens is not None else None,
            seed=d.get("seed"),
        )


@dataclass(frozen=True, eq=False)
class ImportanceScore:
    scores: np.ndarray
    source: ScoreSource

    def __post_init__(self):
        arr = np.array(self.scores, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInput(f"scores must be a non-empty vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidInput("scores must be finite and non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    @property
    def n_visual(self) -> int:
        return self.scores.size

    def __eq__(self, other):
        if not isinstance(other, ImportanceScore):
            return NotImplemented
        return self.source == other.source and np.array_equal(self.scores, other.scores)

    __hash__ = None

    def to_json(self) -> str:
        return json.dumps(
            {"n_visual": self.n_visual, "source": self.source.to_dict(), "scores": self.scores.tolist()},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ImportanceScore":
        try:
            d = json.loads(text)
            scores = d["scores"]
            n = int(d["n_visual"])
            source = ScoreSource.from_dict(d.get("source", {"kind": "external"}))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed score file: {exc}") from None
        if not isinstance(scores, list) or len(scores) != n:
            raise FormatError("score list length does not match n_visual")
        try:
            return cls(np.asarray(scores, dtype=np.float64), source)
        except (InvalidInput, TypeError, ValueError) as exc:
            raise FormatError(f"malformed score file: {exc}") from None


def _check_layer(trace: AttentionTrace, layer: int) -> int:
    if not 0 <= layer < trace.num_layers:
        raise InvalidLayer(f"layer {layer} outside 0..{trace.num_layers - 1}")
    return int(layer)


def _head_mean(trace: AttentionTrace, layer: int) -> np.ndarray:
    return trace.attention[layer].astype(np.float64).mean(axis=0)


def encoder_layer_importance(trace: AttentionTrace, layer: int) -> ImportanceScore:
    """Head-averaged CLS attention at one encoder layer."""
    trace.require(Role.ENCODER)
    layer = _check_layer(trace, layer)
    return ImportanceScore(_head_mean(trace, layer), ScoreSource("encoder_layer", layer=layer))


def ensemble_layers(num_layers: int, k: int) -> list[int]:
    """Encoder layers aggregated for an ensemble of size ``k``, oldest first."""
    if num_layers < 2:
        raise InvalidTrace("layer ensembling needs an encoder with at least two layers")
    if not 1 <= k <= num_layers - 1:
        raise InvalidK(f"K={k} outside 1..{num_layers - 1}")
    return list(range(num_layers - 1 - k, num_layers - 1))


def encoder_ensemble_importance(
    trace: AttentionTrace, k: int = DEFAULT_K, fn: EnsembleFn | str = EnsembleFn.AVG
) -> ImportanceScore:
    trace.require(Role.ENCODER)
    fn = EnsembleFn(fn)
    layers = ensemble_layers(trace.num_layers, k)
    stacked = np.stack([_head_mean(trace, m) for m in layers])
    return ImportanceScore(fn.reduce(stacked), ScoreSource("encoder_ensemble", k=k, ensemble=fn))


def decoder_layer_importance(trace: AttentionTrace, layer: int) -> ImportanceScore:
    """Attention to each visual token averaged over heads and output tokens."""
    trace.require(Role.DECODER)
    if trace.num_output_tokens < 1:
        raise NoOutputTokens("decoder trace has no output tokens")
    layer = _check_layer(trace, layer)
    rows = trace.attention[layer].astype(np.float64)  # (H, O, N_v)
    h, o, n = rows.shape
    scores = rows.reshape(h * o, n).mean(axis=0)
    return ImportanceScore(scores, ScoreSource("decoder_layer", layer=layer))


def random_importance(n_visual: int, seed: int) -> ImportanceScore:
    """Uniform [0, 1) scores from a Philox stream keyed by ``seed``.

    Philox is counter-based, so element ``i`` depends only on ``(seed, i)``:
    a longer vector extends a shorter one with the same seed.
    """
    if n_visual < 1:
        raise InvalidInput("n_visual must be >= 1")
    key = int(seed) % (1 << 64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return ImportanceScore(gen.random(n_visual), ScoreSource("random", seed=int(seed)))
