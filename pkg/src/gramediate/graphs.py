"""Interaction graphs, graphicality, separation and weak decompositions."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

from .loglin import GeneratingClass

__all__ = [
    "GraphError",
    "InteractionGraph",
    "WeakDecomposition",
    "interaction_graph",
    "maximal_cliques",
    "is_graphical",
    "is_chordal",
    "separates",
    "weak_decompositions",
    "mediator_candidates",
]


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class InteractionGraph:
    vertices: tuple[str, ...]
    edges: frozenset[frozenset[str]]

    def __post_init__(self):
        vs = set(self.vertices)
        if len(vs) != len(self.vertices):
            raise GraphError("duplicate vertices")
        edges = frozenset(frozenset(e) for e in self.edges)
        for e in edges:
            if len(e) != 2:
                raise GraphError(f"edge {sorted(e)} is a loop or not a pair")
            if not e <= vs:
                raise GraphError(f"edge {sorted(e)} uses unknown vertices")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, vertices: Sequence[str], edges: Iterable[Iterable[str]]) -> "InteractionGraph":
        return cls(tuple(vertices), frozenset(frozenset(e) for e in edges))

    def neighbors(self, v: str) -> set[str]:
        return {u for e in self.edges if v in e for u in e if u != v}

    def adjacency(self) -> dict[str, set[str]]:
        adj = {v: set() for v in self.vertices}
        for e in self.edges:
            a, b = tuple(e)
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def is_complete(self, subset: Iterable[str]) -> bool:
        return all(frozenset(p) in self.edges for p in combinations(subset, 2))

    def sorted_edges(self) -> list[tuple[str, str]]:
        pos = {v: i for i, v in enumerate(self.vertices)}
        pairs = [tuple(sorted(e, key=pos.__getitem__)) for e in self.edges]
        return sorted(pairs, key=lambda p: (pos[p[0]], pos[p[1]]))

    def components(self, removed: Iterable[str] = ()) -> list[list[str]]:
        """Connected components of the graph with ``removed`` deleted, in vertex order."""
        removed = set(removed)
        adj = self.adjacency()
        seen: set[str] = set()
        comps = []
        for v in self.vertices:
            if v in removed or v in seen:
                continue
            comp, stack = [], [v]
            seen.add(v)
            while stack:
                u = stack.pop()
                comp.append(u)
                for w in adj[u]:
                    if w not in removed and w not in seen:
                        seen.add(w)
                        stack.append(w)
            comps.append(self._ordered(comp))
        return comps

    def _ordered(self, vs: Iterable[str]) -> list[str]:
        vs = set(vs)
        return [v for v in self.vertices if v in vs]

    def to_json(self) -> dict:
        return {"vertices": list(self.vertices), "edges": [list(e) for e in self.sorted_edges()]}

    def to_dot(self, name: str = "interaction") -> str:
        lines = [f"graph {name} {{"]
        lines += [f'  "{v}";' for v in self.vertices]
        lines += [f'  "{a}" -- "{b}";' for a, b in self.sorted_edges()]
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class WeakDecomposition:
    a: frozenset[str]
    b: frozenset[str]
    c: frozenset[str]

    def to_json(self, order: Sequence[str] | None = None) -> dict:
        key = {v: i for i, v in enumerate(order)}.get if order else None
        return {k: sorted(getattr(self, k), key=key) for k in ("a", "b", "c")}


def interaction_graph(gc: GeneratingClass) -> InteractionGraph:
    """Edge between two variables iff some generator contains both."""
    edges = {frozenset(p) for g in gc.generators for p in combinations(g, 2)}
    return InteractionGraph(tuple(gc.variables), frozenset(edges))


def maximal_cliques(g: InteractionGraph) -> set[frozenset[str]]:
    """Bron-Kerbosch with pivoting; isolated vertices come back as singletons."""
    adj = g.adjacency()
    out: set[frozenset[str]] = set()

    def expand(r: set[str], p: set[str], x: set[str]) -> None:
        if not p and not x:
            out.add(frozenset(r))
            return
        pivot = max(p | x, key=lambda u: len(adj[u] & p))
        for v in list(p - adj[pivot]):
            expand(r | {v}, p & adj[v], x & adj[v])
            p.remove(v)
            x.add(v)

    expand(set(), set(g.vertices), set())
    return out


def is_graphical(gc: GeneratingClass) -> bool:
    """True iff the generators are exactly the maximal cliques of the interaction graph."""
    gens = {frozenset(gen) for gen in gc.generators}
    return maximal_cliques(interaction_graph(gc)) == gens


def is_chordal(g: InteractionGraph) -> bool:
    """True iff simplicial vertices can be eliminated one by one until none remain."""
    adj = g.adjacency()
    left = set(g.vertices)
    while left:
        for v in g.vertices:
            if v in left:
                nb = adj[v] & left
                if all(b in adj[a] for a, b in combinations(nb, 2)):
                    left.remove(v)
                    break
        else:
            return False
    return True


def _check_partition(g: InteractionGraph, a, b, c) -> tuple[set, set, set]:
    a, b, c = set(a), set(b), set(c)
    if a & b or a & c or b & c:
        raise GraphError("a, b and c must be disjoint")
    if a | b | c != set(g.vertices):
        raise GraphError("a, b and c must cover every vertex")
    return a, b, c


def separates(g: InteractionGraph, a: Iterable[str], b: Iterable[str], c: Iterable[str]) -> bool:
    """True iff every path from ``a`` to ``c`` passes through ``b``."""
    a, b, c = _check_partition(g, a, b, c)
    for comp in g.components(removed=b):
        comp = set(comp)
        if comp & a and comp & c:
            return False
    return True


def _complete_subsets(g: InteractionGraph):
    # Every clique (including the empty set), smallest first, vertex order within a size.
    for r in range(len(g.vertices) + 1):
        for sub in combinations(g.vertices, r):
            if g.is_complete(sub):
                yield sub


def weak_decompositions(g: InteractionGraph) -> list[WeakDecomposition]:
    """All (A, B, C) with B a complete separator of nonempty A and C.

    Each unordered {A, C} split is reported once, with A holding the
    lexicographically smallest vertex name outside B.
    """
    out = []
    for b in _complete_subsets(g):
        comps = g.components(removed=b)
        if len(comps) < 2:
            continue
        comps.sort(key=min)
        first, rest = comps[0], comps[1:]
        # the component with the smallest name goes to A; every nonempty choice of the rest goes to C
        for mask in range(0, 2 ** len(rest) - 1):
            a = set(first)
            c = set()
            for i, comp in enumerate(rest):
                (a if mask >> i & 1 else c).update(comp)
            out.append(WeakDecomposition(frozenset(a), frozenset(b), frozenset(c)))
    return out


def mediator_candidates(
    g: InteractionGraph, treatment: str, minimal_only: bool = True
) -> list[frozenset[str]]:
    """Separators B of weak decompositions ({treatment}, B, C).

    With ``minimal_only`` (the default) only inclusion-minimal separators are
    returned; variables in larger separators are not needed to isolate the
    treatment. An empty separator means the treatment is already disconnected.
    """
    if treatment not in g.vertices:
        raise GraphError(f"unknown treatment variable {treatment!r}")
    found = []
    for b in _complete_subsets(g):
        if treatment in b:
            continue
        rest = set(g.vertices) - set(b) - {treatment}
        if not rest:
            continue
        if separates(g, {treatment}, b, rest):
            found.append(frozenset(b))
    if minimal_only:
        found = [s for s in found if not any(o < s for o in found)]
    return found
