"""Budgeted top-U selection and prune plans."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Sequence, TypeVar

import numpy as np

from .errors import FormatError, InvalidBudget, InvalidConfig, SelectionMismatch
from .scoring import ImportanceScore

T = TypeVar("T")


@dataclass(frozen=True)
class TokenSelection:
    """Kept token indices in ascending positional order.

    Ties in score go to the lower index.
    """

    kept: tuple[int, ...]
    budget: int
    n_visual: int

    def __post_init__(self):
        kept = tuple(int(i) for i in self.kept)
        object.__setattr__(self, "kept", kept)
        if self.budget < 1:
            raise InvalidBudget(f"budget must be >= 1, got {self.budget}")
        if len(kept) != min(self.budget, self.n_visual):
            raise SelectionMismatch(f"{len(kept)} kept indices for budget {self.budget} over {self.n_visual} tokens")
        if any(b <= a for a, b in zip(kept, kept[1:])):
            raise SelectionMismatch("kept indices must be strictly increasing")
        if kept and not (0 <= kept[0] and kept[-1] < self.n_visual):
            raise SelectionMismatch(f"kept index outside [0, {self.n_visual})")

    def __len__(self) -> int:
        return len(self.kept)

    def to_dict(self) -> dict[str, Any]:
        return {"budget": self.budget, "n_visual": self.n_visual, "kept": list(self.kept)}

    @classmethod
    def keep_all(cls, n_visual: int) -> "TokenSelection":
        return cls(tuple(range(n_visual)), n_visual, n_visual)


def top_u(scores: ImportanceScore | np.ndarray, budget: int) -> TokenSelection:
    if budget < 1:
        raise InvalidBudget(f"budget must be >= 1, got {budget}")
    values = scores.scores if isinstance(scores, ImportanceScore) else np.asarray(scores, dtype=np.float64)
    n = values.size
    # stable sort on the negated scores puts the lower index first among ties
    order = np.argsort(-values, kind="stable")[:budget]
    return TokenSelection(tuple(np.sort(order).tolist()), budget, n)


def prune_sequence(tokens: Sequence[T], selection: TokenSelection) -> list[T]:
    if selection.kept and selection.kept[-1] >= len(tokens):
        raise SelectionMismatch(f"index {selection.kept[-1]} out of range for {len(tokens)} tokens")
    return [tokens[i] for i in selection.kept]


@dataclass(frozen=True)
class PrunePlan:
    """Where to prune: before the LLM (``after_layer=None``) or after LLM layer P >= 1."""

    selection: TokenSelection
    after_layer: int | None = None

    def __post_init__(self):
        if self.after_layer is not None and self.after_layer < 1:
            raise InvalidConfig(f"deferred prune layer must be >= 1, got {self.after_layer}")

    @property
    def before_llm(self) -> bool:
        return self.after_layer is None

    @property
    def prune_layer(self) -> int:
        """First decoder layer that sees only kept tokens (0 when pruning before the LLM)."""
        return 0 if self.after_layer is None else self.after_layer

    def to_json(self) -> str:
        d = self.selection.to_dict()
        if self.after_layer is None:
            d["location"] = {"kind": "before_llm"}
        else:
            d["location"] = {"kind": "after_llm_layer", "layer": self.after_layer}
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PrunePlan":
        try:
            d = json.loads(text)
            loc = d.get("location", {"kind": "before_llm"})
            sel = TokenSelection(tuple(d["kept"]), int(d["budget"]), int(d["n_visual"]))
            after = int(loc["layer"]) if loc["kind"] == "after_llm_layer" else None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed selection file: {exc}") from None
        return cls(sel, after)


def make_prune_plan(scores: ImportanceScore, budget: int, after_layer: int | None = None) -> PrunePlan:
    """Top-U plan; the same encoder-derived scores drive both prune locations."""
    return PrunePlan(top_u(scores, budget), after_layer)
