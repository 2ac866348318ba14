"""Toy vision-encoder + causal-decoder simulator that emits attention traces.

It stands in for CLIP-ViT + a causal LLM at desk scale.  Only the
attention mechanics are reproduced; nothing is trained.

Construction
------------
* Every visual token is ``content + noise`` where ``content`` is a direction
  shared by all tokens and the noise is orthogonal to it.  Planted tokens are
  multiplied by ``gamma``.
* Query and key projections are tied within each head, so the shared content
  direction contributes a positive logit proportional to a token's scale.  A
  planted token therefore draws attention from the CLS token and from decoder
  output queries alike.  With ``gamma == 1`` that term is the same for every
  token and cancels in the softmax, which leaves no systematic
  encoder/decoder agreement.
* The CLS token and decoder output tokens start from ``content`` plus small
  noise.  The decoder consumes the encoder's final-layer visual features.
* All weights are N(0, 1/d).  There are no normalisation layers or MLPs; each
  layer is a residual multi-head attention block.
* The decoder applies rotary position embeddings (disable with
  ``rope_base=None``).  After pruning, surviving tokens keep their original
  position ids unless ``compact_positions`` is set.

Randomness comes from Philox streams keyed by ``(seed, stream)``, so each
weight group is fixed by the seed alone and does not depend on ``N_v`` or on
what else was drawn.  The decoder weights for a given seed are the same with
and without pruning.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidTrace
from .selection import PrunePlan
from .trace import AttentionTrace

_FEATURES, _PLANTED, _CONTENT, _CLS, _OUTPUTS = 1, 2, 3, 4, 5
_ENC_BASE, _DEC_BASE = 1_000, 2_000


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    n_visual: int = 64
    width: int = 64
    heads: int = 4
    enc_layers: int = 6
    dec_layers: int = 4
    outputs: int = 8
    planted: int = 8
    gamma: float = 4.0
    content_scale: float = 0.5
    token_noise: float = 0.5
    residual_gain: float = 0.3
    rope_base: float | None = 10000.0
    compact_positions: bool = False

    def __post_init__(self):
        ints = ("n_visual", "width", "heads", "enc_layers", "dec_layers", "outputs")
        for name in ints:
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.enc_layers < 2:
            raise InvalidConfig("enc_layers must be >= 2 (the penultimate layer is the anchor)")
        if self.width % self.heads:
            raise InvalidConfig(f"heads={self.heads} does not divide width={self.width}")
        if self.rope_base is not None and (self.width // self.heads) % 2:
            raise InvalidConfig("rotary embeddings need an even head dimension")
        if not 0 <= self.planted <= self.n_visual:
            raise InvalidConfig(f"planted={self.planted} outside 0..{self.n_visual}")
        if not np.isfinite(self.gamma) or self.gamma < 1:
            raise InvalidConfig(f"gamma must be >= 1, got {self.gamma}")
        if self.content_scale < 0 or self.token_noise < 0:
            raise InvalidConfig("content_scale and token_noise must be non-negative")

    @property
    def head_dim(self) -> int:
        return self.width // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DecoderSegment:
    """Consecutive decoder layers that saw the same visual tokens."""

    first_layer: int
    trace: AttentionTrace
    visual_positions: tuple[int, ...]  # original visual indices, in order


@dataclass(frozen=True)
class SimOutput:
    encoder_trace: AttentionTrace
    segments: tuple[DecoderSegment, ...]
    planted_truth: frozenset[int]
    config: SimConfig
    plan: PrunePlan | None = field(default=None, compare=False)

    @property
    def decoder_trace(self) -> AttentionTrace:
        """The decoder trace, when every layer saw the same visual tokens."""
        if len(self.segments) != 1:
            raise InvalidTrace(
                "decoder row width changes at the prune layer; use .segments or .decoder_rows()"
            )
        return self.segments[0].trace

    def decoder_rows(self, layer: int) -> np.ndarray:
        """``(H, O, width)`` attention rows of one decoder layer."""
        for seg in reversed(self.segments):
            if layer >= seg.first_layer:
                return seg.trace.attention[layer - seg.first_layer]
        raise IndexError(layer)

    def sidecar(self) -> dict:
        d = {"planted": sorted(self.planted_truth), "config": self.config.to_dict()}
        if self.plan is not None:
            d["plan"] = json.loads(self.plan.to_json())
        if len(self.segments) > 1:
            d["segments"] = [
                {"first_layer": s.first_layer, "num_layers": s.trace.num_layers,
                 "visual_positions": list(s.visual_positions)}
                for s in self.segments
            ]
        return d


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed) % (1 << 64), stream]))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class _Layer:
    qk: np.ndarray  # (H, D, d), shared by queries and keys
    v: np.ndarray  # (H, D, d)
    out: np.ndarray  # (d, d)


def _layers(cfg: SimConfig, base: int, count: int) -> list[_Layer]:
    d, h, hd = cfg.width, cfg.heads, cfg.head_dim
    scale = 1.0 / np.sqrt(d)
    layers = []
    for i in range(count):
        g = _stream(cfg.seed, base + i)
        layers.append(
            _Layer(
                qk=g.standard_normal((h, hd, d)) * scale,
                v=g.standard_normal((h, hd, d)) * scale,
                out=g.standard_normal((d, d)) * scale,
            )
        )
    return layers


def _rope(x: np.ndarray, positions: np.ndarray, base: float) -> np.ndarray:
    """Rotate feature pairs of ``x`` (H, n, D) by position-dependent angles."""
    half = x.shape[-1] // 2
    freqs = base ** (-np.arange(half) / half)
    ang = positions[:, None] * freqs[None, :]
    cos, sin = np.cos(ang), np.sin(ang)
    a, b = x[..., :half], x[..., half:]
    return np.concatenate([a * cos - b * sin, a * sin + b * cos], axis=-1)


def _attend(
    h: np.ndarray,
    layer: _Layer,
    head_dim: int,
    gain: float,
    query_norm: float,
    *,
    causal: bool = False,
    positions: np.ndarray | None = None,
    rope_base: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One residual attention block; returns (new hidden, attention (H, n, n))."""
    n = h.shape[0]
    k = np.einsum("hkd,nd->hnk", layer.qk, h)
    # queries and values read the rescaled state; keys keep the raw scale,
    # which is what carries the planted signal
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    hn = h * (query_norm / np.maximum(norms, 1e-12))
    q = np.einsum("hkd,nd->hnk", layer.qk, hn)
    if rope_base is not None:
        q = _rope(q, positions, rope_base)
        k = _rope(k, positions, rope_base)
    logits = np.einsum("hik,hjk->hij", q, k) / np.sqrt(head_dim)
    if causal:
        logits = np.where(np.tri(n, dtype=bool)[None], logits, -np.inf)
    attn = _softmax_rows(logits)
    vals = np.einsum("hkd,nd->hnk", layer.v, hn)
    ctx = np.einsum("hij,hjk->hik", attn, vals)  # (H, n, D)
    merged = ctx.transpose(1, 0, 2).reshape(n, -1)
    return h + gain * (merged @ layer.out.T), attn


def _content_direction(cfg: SimConfig) -> np.ndarray:
    c = _stream(cfg.seed, _CONTENT).standard_normal(cfg.width)
    return c / np.linalg.norm(c) * cfg.content_scale * np.sqrt(cfg.width)


def _shell(v: np.ndarray, unit: np.ndarray, radius: float) -> np.ndarray:
    """Rows of ``v`` made orthogonal to ``unit`` and rescaled to a common norm.

    Equal norms keep token-norm variation from coupling encoder and decoder
    rankings when nothing is planted.
    """
    v = np.atleast_2d(v)
    v = v - np.outer(v @ unit, unit)
    return v * (radius / np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-12))


def _query_norm(cfg: SimConfig, content: np.ndarray) -> float:
    n = float(np.linalg.norm(content))
    return n if n > 0 else float(np.sqrt(cfg.width))


def planted_indices(cfg: SimConfig) -> np.ndarray:
    g = _stream(cfg.seed, _PLANTED)
    return np.sort(g.permutation(cfg.n_visual)[: cfg.planted])


def _encode(cfg: SimConfig, content: np.ndarray, planted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    unit = content / np.linalg.norm(content) if np.any(content) else np.zeros_like(content)
    noise = _stream(cfg.seed, _FEATURES).standard_normal((cfg.n_visual, cfg.width))
    scale = np.ones(cfg.n_visual)
    scale[planted] = cfg.gamma
    radius = np.sqrt(cfg.width)
    visual = scale[:, None] * (content + _shell(noise, unit, radius))
    cls_noise = _stream(cfg.seed, _CLS).standard_normal(cfg.width)
    h = np.vstack([content + _shell(cls_noise, unit, cfg.token_noise * radius), visual])
    qn = _query_norm(cfg, content)

    rows = np.empty((cfg.enc_layers, cfg.heads, cfg.n_visual))
    for i, layer in enumerate(_layers(cfg, _ENC_BASE, cfg.enc_layers)):
        h, attn = _attend(h, layer, cfg.head_dim, cfg.residual_gain, qn)
        rows[i] = attn[:, 0, 1:]
    return rows, h[1:]


def _decode(
    cfg: SimConfig, content: np.ndarray, visual: np.ndarray, plan: PrunePlan | None
) -> list[DecoderSegment]:
    n_vis = visual.shape[0]
    out_noise = _stream(cfg.seed, _OUTPUTS).standard_normal((cfg.outputs, cfg.width))
    unit = content / np.linalg.norm(content) if np.any(content) else np.zeros_like(content)
    h = np.vstack([visual, content + _shell(out_noise, unit, cfg.token_noise * np.sqrt(cfg.width))])
    qn = _query_norm(cfg, content)
    vis_pos = np.arange(n_vis)
    positions = np.arange(n_vis + cfg.outputs, dtype=np.float64)
    prune_at = plan.prune_layer if plan is not None else None

    segments: list[tuple[int, np.ndarray, list[np.ndarray]]] = []
    rows: list[np.ndarray] = []
    start = 0
    for i, layer in enumerate(_layers(cfg, _DEC_BASE, cfg.dec_layers)):
        if i == prune_at:
            if rows:
                segments.append((start, vis_pos, rows))
            start, rows = i, []
            keep = np.asarray(plan.selection.kept, dtype=np.int64)
            h = np.vstack([h[keep], h[len(vis_pos):]])
            vis_pos = vis_pos[keep]
            if cfg.compact_positions:
                positions = np.arange(h.shape[0], dtype=np.float64)
            else:
                positions = np.concatenate([positions[keep], positions[-cfg.outputs:]])
        nv = len(vis_pos)
        h, attn = _attend(
            h, layer, cfg.head_dim, cfg.residual_gain, qn, causal=True, positions=positions, rope_base=cfg.rope_base
        )
        rows.append(attn[:, nv:, :nv])
    segments.append((start, vis_pos, rows))
    return [
        DecoderSegment(first, AttentionTrace.decoder(np.stack(r).astype(np.float32)), tuple(pos.tolist()))
        for first, pos, r in segments
    ]


def _run(cfg: SimConfig, plan: PrunePlan | None) -> SimOutput:
    content = _content_direction(cfg)
    planted = planted_indices(cfg)
    enc_rows, visual = _encode(cfg, content, planted)
    encoder = AttentionTrace.encoder(enc_rows.astype(np.float32))
    segments = _decode(cfg, content, visual, plan)
    return SimOutput(encoder, tuple(segments), frozenset(planted.tolist()), cfg, plan)


def simulate(config: SimConfig) -> SimOutput:
    return _run(config, None)


def simulate_with_pruning(config: SimConfig, plan: PrunePlan) -> SimOutput:
    """Simulate with the decoder seeing only the plan's kept tokens from its prune layer on."""
    if plan.selection.n_visual != config.n_visual:
        raise InvalidConfig(
            f"plan covers {plan.selection.n_visual} tokens, config has {config.n_visual}"
        )
    return _run(config, plan)
