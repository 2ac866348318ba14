"""Encoder/decoder importance agreement: top-U overlap and Spearman correlation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidComparison, TraceMismatch
from .numeric import descending_ranks, pearson
from .scoring import (
    DEFAULT_K,
    EnsembleFn,
    ImportanceScore,
    decoder_layer_importance,
    encoder_ensemble_importance,
)
from .selection import TokenSelection, top_u
from .trace import AttentionTrace, Role

CSV_COLUMNS = ("layer", "n", "U", "overlap", "spearman")


def overlap_proportion(sel_a: TokenSelection, sel_b: TokenSelection) -> float:
    """Fraction of the budget shared by two selections."""
    if sel_a.budget != sel_b.budget:
        raise InvalidComparison(f"budgets differ: {sel_a.budget} vs {sel_b.budget}")
    if sel_a.n_visual != sel_b.n_visual:
        raise InvalidComparison(f"selections over {sel_a.n_visual} and {sel_b.n_visual} tokens")
    shared = len(set(sel_a.kept).intersection(sel_b.kept))
    return shared / sel_a.budget


def spearman(scores_a: ImportanceScore | np.ndarray, scores_b: ImportanceScore | np.ndarray) -> float:
    a = scores_a.scores if isinstance(scores_a, ImportanceScore) else scores_a
    b = scores_b.scores if isinstance(scores_b, ImportanceScore) else scores_b
    return pearson(descending_ranks(a), descending_ranks(b))


@dataclass(frozen=True)
class LayerConsistency:
    layer: int
    overlap: dict[int, float]  # budget U -> p^n
    spearman: float


@dataclass(frozen=True)
class ConsistencyReport:
    per_layer: tuple[LayerConsistency, ...]
    budgets: tuple[int, ...]
    k: int | None
    ensemble: str | None
    encoder_source: dict
    n_visual: int
    mean_overlap: dict[int, float] = field(default_factory=dict)
    mean_spearman: float = 0.0

    def rows(self) -> list[dict]:
        """One row per (layer, budget), layer-major."""
        out = []
        for lc in self.per_layer:
            for u in self.budgets:
                out.append(
                    {"layer": lc.layer, "n": lc.layer + 1, "U": u,
                     "overlap": lc.overlap[u], "spearman": lc.spearman}
                )
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({**row, "overlap": repr(row["overlap"]), "spearman": repr(row["spearman"])})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "config": {
                "budgets": list(self.budgets),
                "k": self.k,
                "ensemble": self.ensemble,
                "encoder_source": self.encoder_source,
                "decoder_source": "decoder_layer",
                "n_visual": self.n_visual,
            },
            "per_layer": self.rows(),
            "aggregates": {
                "mean_overlap": {str(u): v for u, v in self.mean_overlap.items()},
                "mean_spearman": self.mean_spearman,
            },
        }


def compare_scores(
    encoder_scores: ImportanceScore,
    dec: AttentionTrace,
    budgets: Sequence[int],
    *,
    k: int | None = None,
    ensemble: str | None = None,
) -> ConsistencyReport:
    """Per-decoder-layer overlap and Spearman against a fixed encoder-side score.

    Also used with random encoder scores to build the structure-free baseline.
    """
    dec.require(Role.DECODER)
    if encoder_scores.n_visual != dec.num_visual_tokens:
        raise TraceMismatch(
            f"encoder scores cover {encoder_scores.n_visual} tokens, decoder trace {dec.num_visual_tokens}"
        )
    budgets = tuple(int(u) for u in budgets)
    enc_sel = {u: top_u(encoder_scores, u) for u in budgets}
    per_layer = []
    for n in range(dec.num_layers):
        dec_scores = decoder_layer_importance(dec, n)
        overlap = {u: overlap_proportion(enc_sel[u], top_u(dec_scores, u)) for u in budgets}
        per_layer.append(LayerConsistency(n, overlap, spearman(encoder_scores, dec_scores)))
    mean_overlap = {u: float(np.mean([lc.overlap[u] for lc in per_layer])) for u in budgets}
    mean_spearman = float(np.mean([lc.spearman for lc in per_layer]))
    return ConsistencyReport(
        per_layer=tuple(per_layer),
        budgets=budgets,
        k=k,
        ensemble=ensemble,
        encoder_source=encoder_scores.source.to_dict(),
        n_visual=encoder_scores.n_visual,
        mean_overlap=mean_overlap,
        mean_spearman=mean_spearman,
    )


def consistency_report(
    enc: AttentionTrace,
    dec: AttentionTrace,
    budgets: Sequence[int],
    k: int = DEFAULT_K,
    fn: EnsembleFn | str = EnsembleFn.AVG,
) -> ConsistencyReport:
    enc.require(Role.ENCODER)
    dec.require(Role.DECODER)
    if enc.num_visual_tokens != dec.num_visual_tokens:
        raise TraceMismatch(
            f"encoder has {enc.num_visual_tokens} visual tokens, decoder {dec.num_visual_tokens}"
        )
    fn = EnsembleFn(fn)
    scores = encoder_ensemble_importance(enc, k, fn)
    return compare_scores(scores, dec, budgets, k=k, ensemble=fn.value)


@dataclass(frozen=True)
class KSweepRow:
    k: int
    mean_overlap: dict[int, float]
    mean_spearman: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mean_overlap": {str(u): v for u, v in self.mean_overlap.items()},
            "mean_spearman": self.mean_spearman,
        }


def k_sweep(
    enc: AttentionTrace,
    dec: AttentionTrace,
    budgets: Sequence[int],
    k_range: Iterable[int],
    fn: EnsembleFn | str = EnsembleFn.AVG,
) -> list[KSweepRow]:
    """Aggregate consistency for each ensemble size, ascending in K."""
    rows = []
    for k in sorted(set(int(k) for k in k_range)):
        rep = consistency_report(enc, dec, budgets, k, fn)
        rows.append(KSweepRow(k, rep.mean_overlap, rep.mean_spearman))
    return rows


def report_json(report: ConsistencyReport, sweep: Sequence[KSweepRow] | None = None) -> str:
    d = report.to_dict()
    if sweep is not None:
        d["k_sweep"] = [row.to_dict() for row in sweep]
    return json.dumps(d, indent=2)
