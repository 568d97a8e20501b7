"""The lattice of hierarchical models: enumeration and AIC stepwise search."""
from __future__ import annotations

import string
from dataclasses import dataclass, field
from itertools import combinations
from typing import Literal, Sequence

from .graphs import InteractionGraph, is_chordal, maximal_cliques
from .loglin import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    FitResult,
    GeneratingClass,
    downset,
    ipf_fit,
)
from .table import ContingencyTable

__all__ = [
    "Step",
    "SearchTrace",
    "MODEL_CLASSES",
    "FitCache",
    "enumerate_hierarchical",
    "forward_moves",
    "backward_moves",
    "edge_moves",
    "forward_neighbors",
    "backward_neighbors",
    "stepwise",
    "search",
    "consensus",
]

Direction = Literal["forward", "backward"]
ModelClass = Literal["hierarchical", "graphical", "decomposable"]
MODEL_CLASSES = ("hierarchical", "graphical", "decomposable")
_AIC_DIGITS = 9


def _default_names(n: int) -> tuple[str, ...]:
    return tuple(string.ascii_uppercase[:n])


def enumerate_hierarchical(n_vars: int, variables: Sequence[str] | None = None) -> list[GeneratingClass]:
    """Every hierarchical model on ``n_vars`` variables (2 <= n_vars <= 5).

    Walks the interaction terms of size >= 2 from small to large; a term may
    be included only when all its maximal proper subterms already are. Each
    resulting down-set corresponds to exactly one antichain cover.
    """
    if not 2 <= n_vars <= 5:
        raise ValueError(f"n_vars must be between 2 and 5, got {n_vars}")
    variables = tuple(variables) if variables is not None else _default_names(n_vars)
    if len(variables) != n_vars:
        raise ValueError("len(variables) must equal n_vars")
    terms = [
        frozenset(c)
        for r in range(2, n_vars + 1)
        for c in combinations(variables, r)
    ]
    out: list[GeneratingClass] = []
    chosen: set[frozenset[str]] = set()

    def includable(t: frozenset[str]) -> bool:
        return len(t) == 2 or all(t - {v} in chosen for v in t)

    def walk(i: int) -> None:
        if i == len(terms):
            out.append(GeneratingClass.from_terms(chosen, variables))
            return
        walk(i + 1)
        t = terms[i]
        if includable(t):
            chosen.add(t)
            walk(i + 1)
            chosen.remove(t)

    walk(0)
    return out


def _term_key(term: frozenset[str], order: Sequence[str]) -> tuple[int, ...]:
    pos = {v: i for i, v in enumerate(order)}
    return tuple(sorted(pos[v] for v in term))


def _ordered(term: frozenset[str], order: Sequence[str]) -> tuple[str, ...]:
    pos = {v: i for i, v in enumerate(order)}
    return tuple(sorted(term, key=pos.__getitem__))


def forward_moves(gc: GeneratingClass) -> list[tuple[frozenset[str], GeneratingClass]]:
    """(added term, neighbour) for each term that can be added hierarchically."""
    ds = downset(gc)
    order = gc.variables
    moves = []
    for r in range(2, len(order) + 1):
        for c in combinations(order, r):
            t = frozenset(c)
            if t in ds:
                continue
            if all(t - {v} in ds for v in t):
                moves.append((t, GeneratingClass.from_terms(ds | {t}, order)))
    return moves


def backward_moves(gc: GeneratingClass) -> list[tuple[frozenset[str], GeneratingClass]]:
    """(removed term, neighbour) for each generator of size >= 2."""
    ds = downset(gc)
    order = gc.variables
    moves = []
    for g in sorted((frozenset(g) for g in gc.generators if len(g) >= 2),
                    key=lambda t: _term_key(t, order)):
        moves.append((g, GeneratingClass.from_terms(ds - {g}, order)))
    return moves


def forward_neighbors(gc: GeneratingClass) -> list[GeneratingClass]:
    return [nb for _, nb in forward_moves(gc)]


def backward_neighbors(gc: GeneratingClass) -> list[GeneratingClass]:
    return [nb for _, nb in backward_moves(gc)]


def edge_moves(
    gc: GeneratingClass, direction: Direction, decomposable: bool = False
) -> list[tuple[frozenset[str], GeneratingClass]]:
    """(toggled edge, graphical neighbour) for single-edge additions or deletions.

    The neighbour is the graphical model of the new graph (its maximal
    cliques). With ``decomposable`` only moves that keep the graph chordal
    are returned.
    """
    order = gc.variables
    edges = {frozenset(p) for g in gc.generators for p in combinations(g, 2)}
    moves = []
    for p in combinations(order, 2):
        e = frozenset(p)
        if direction == "forward" and e not in edges:
            new = edges | {e}
        elif direction == "backward" and e in edges:
            new = edges - {e}
        else:
            continue
        graph = InteractionGraph.from_edges(order, new)
        if decomposable and not is_chordal(graph):
            continue
        moves.append((e, GeneratingClass.from_terms(maximal_cliques(graph), order)))
    return moves


def _moves(gc: GeneratingClass, direction: Direction, model_class: ModelClass):
    if model_class == "hierarchical":
        return forward_moves(gc) if direction == "forward" else backward_moves(gc)
    return edge_moves(gc, direction, decomposable=model_class == "decomposable")


class FitCache:
    """Memoised IPF fits of one table, shared by forward and backward searches."""

    def __init__(self, table: ContingencyTable, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER, backend: str | None = None):
        self.table = table
        self.tol = tol
        self.max_iter = max_iter
        self.backend = backend
        self._fits: dict[GeneratingClass, FitResult] = {}

    def __len__(self) -> int:
        return len(self._fits)

    def fit(self, gc: GeneratingClass) -> FitResult:
        res = self._fits.get(gc)
        if res is None:
            res = ipf_fit(self.table, gc, self.tol, self.max_iter, self.backend)
            self._fits[gc] = res
        return res


@dataclass(frozen=True)
class Step:
    move: Literal["add", "remove"]
    term: tuple[str, ...]
    aic_before: float
    aic_after: float
    model: str

    def to_json(self) -> dict:
        return {
            "move": self.move,
            "term": list(self.term),
            "aic_before": self.aic_before,
            "aic_after": self.aic_after,
            "model": self.model,
        }


@dataclass
class SearchTrace:
    direction: Direction
    start: GeneratingClass
    final: GeneratingClass
    final_aic: float
    steps: list[Step] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "direction": self.direction,
            "start": str(self.start),
            "final": str(self.final),
            "final_aic": self.final_aic,
            "steps": [s.to_json() for s in self.steps],
            "skipped": list(self.skipped),
        }


def stepwise(
    table: ContingencyTable,
    start: GeneratingClass | None = None,
    direction: Direction = "forward",
    cache: FitCache | None = None,
    model_class: ModelClass = "decomposable",
) -> SearchTrace:
    """Greedy best-improvement AIC search.

    Every neighbour of the current model is fitted; the search moves to the
    one with smallest AIC if that is strictly smaller than the current AIC,
    and stops otherwise. AICs are compared after rounding to 1e-9; ties go to
    the term that comes first in variable order. Neighbours whose IPF fit did
    not converge are skipped and listed in the trace.

    ``model_class`` picks the neighbourhood. ``"hierarchical"`` adds any
    hierarchically admissible term or removes one generator. ``"graphical"``
    and ``"decomposable"`` add or delete one edge of the interaction graph
    and keep every visited model graphical (and chordal, for the latter).
    The decomposable edge search is the default; unrestricted term moves on
    the builtin four-variable table settle on a non-graphical model.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if model_class not in MODEL_CLASSES:
        raise ValueError(f"model_class must be one of {MODEL_CLASSES}, got {model_class!r}")
    order = table.names
    if start is None:
        start = (GeneratingClass.independence(order) if direction == "forward"
                 else GeneratingClass.saturated(order))
    if cache is None:
        cache = FitCache(table)
    elif cache.table is not table:
        raise ValueError("cache belongs to a different table")

    current = start.canonical(order)
    current_aic = cache.fit(current).aic
    trace = SearchTrace(direction, current, current, current_aic)
    while True:
        moves = _moves(current, direction, model_class)
        best = None
        for term, nb in moves:
            fit = cache.fit(nb)
            if not fit.converged:
                if str(nb) not in trace.skipped:
                    trace.skipped.append(str(nb))
                continue
            key = (round(fit.aic, _AIC_DIGITS), _term_key(term, order))
            if best is None or key < best[0]:
                best = (key, term, nb, fit.aic)
        if best is None or best[0][0] >= round(current_aic, _AIC_DIGITS):
            break
        _, term, nb, nb_aic = best
        trace.steps.append(
            Step(
                move="add" if direction == "forward" else "remove",
                term=_ordered(term, order),
                aic_before=current_aic,
                aic_after=nb_aic,
                model=str(nb),
            )
        )
        current, current_aic = nb, nb_aic
    trace.final = current
    trace.final_aic = current_aic
    return trace


def search(table: ContingencyTable, cache: FitCache | None = None,
           model_class: ModelClass = "decomposable"):
    """Forward search from independence and backward search from saturation.

    Returns ``(forward_trace, backward_trace, agreed_model_or_None)``.
    """
    if cache is None:
        cache = FitCache(table)
    fwd = stepwise(table, direction="forward", cache=cache, model_class=model_class)
    bwd = stepwise(table, direction="backward", cache=cache, model_class=model_class)
    agreed = fwd.final if fwd.final == bwd.final else None
    return fwd, bwd, agreed


def consensus(table: ContingencyTable, cache: FitCache | None = None,
              model_class: ModelClass = "decomposable") -> GeneratingClass | None:
    """The model both search directions stop at, or None when they disagree."""
    return search(table, cache, model_class)[2]
