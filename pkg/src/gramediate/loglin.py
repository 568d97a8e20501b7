"""Hierarchical loglinear models: generating classes, IPF fitting and deviance tests."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .special import chisq_sf
from .table import ContingencyTable, VariableSchema

__all__ = [
    "ModelError",
    "GeneratingClass",
    "FitResult",
    "NestedComparison",
    "NAMED_MODELS",
    "named_model",
    "model_name",
    "downset",
    "param_count",
    "ipf_fit",
    "aic",
    "compare_nested",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000


class ModelError(ValueError):
    """Invalid generating class, or a model that does not fit the table given."""


class GeneratingClass:
    """Maximal interaction terms of a hierarchical loglinear model.

    Generators keep their declaration order (IPF cycles through them in that
    order), but equality and hashing only look at the set of generators.

    >>> GeneratingClass.parse("[SSC-W,SSC-F][SSC-W,TIME]").variables
    ('SSC-W', 'SSC-F', 'TIME')
    """

    __slots__ = ("generators", "variables", "_key")

    def __init__(self, generators: Iterable[Iterable[str]], variables: Sequence[str] | None = None):
        gens: list[tuple[str, ...]] = []
        seen = set()
        for g in generators:
            g = tuple(dict.fromkeys(g))
            if not g:
                raise ModelError("generators must be nonempty")
            fs = frozenset(g)
            if fs not in seen:
                seen.add(fs)
                gens.append(g)
        if not gens:
            raise ModelError("a generating class needs at least one generator")
        if variables is None:
            variables = tuple(dict.fromkeys(v for g in gens for v in g))
        else:
            variables = tuple(variables)
            if len(set(variables)) != len(variables):
                raise ModelError(f"duplicate variables in {variables}")
        covered = set().union(*seen)
        if covered != set(variables):
            extra = covered - set(variables)
            if extra:
                raise ModelError(f"generators mention unknown variables {sorted(extra)}")
            raise ModelError(f"variables {sorted(set(variables) - covered)} are in no generator")
        for a in seen:
            for b in seen:
                if a < b:
                    raise ModelError(f"{sorted(a)} is contained in {sorted(b)}; not an antichain")
        self.generators = tuple(gens)
        self.variables = variables
        self._key = frozenset(seen)

    @classmethod
    def parse(cls, text: str, variables: Sequence[str] | None = None) -> "GeneratingClass":
        """Parse bracket notation such as ``"[SSC-W,SSC-F][SSC-W,TIME]"``."""
        text = text.strip()
        if not re.fullmatch(r"(\s*\[[^\[\]]+\]\s*)+", text):
            raise ModelError(f"cannot parse model spec {text!r}")
        gens = [
            [v.strip() for v in body.split(",") if v.strip()]
            for body in re.findall(r"\[([^\[\]]*)\]", text)
        ]
        return cls(gens, variables)

    @classmethod
    def from_terms(cls, terms: Iterable[Iterable[str]], variables: Sequence[str]) -> "GeneratingClass":
        """Build from any collection of terms: keep the maximal ones, add missing main effects.

        The result is in canonical order (see :meth:`canonical`).
        """
        sets = {frozenset(t) for t in terms if t}
        sets |= {frozenset([v]) for v in variables}
        maximal = [s for s in sets if not any(s < o for o in sets)]
        return cls(maximal, variables).canonical()

    def canonical(self, order: Sequence[str] | None = None) -> "GeneratingClass":
        """Same model, generators and their members sorted by variable position."""
        order = list(order) if order is not None else list(self.variables)
        pos = {v: i for i, v in enumerate(order)}
        gens = sorted(
            (tuple(sorted(g, key=pos.__getitem__)) for g in self.generators),
            key=lambda g: [pos[v] for v in g],
        )
        return GeneratingClass(gens, order)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneratingClass):
            return NotImplemented
        return self._key == other._key and set(self.variables) == set(other.variables)

    def __hash__(self) -> int:
        return hash(self._key)

    def __str__(self) -> str:
        return "".join("[" + ",".join(g) + "]" for g in self.generators)

    def __repr__(self) -> str:
        return f"GeneratingClass({str(self)!r})"

    def __len__(self) -> int:
        return len(self.generators)

    def downset(self) -> frozenset[frozenset[str]]:
        return downset(self)

    def is_saturated(self) -> bool:
        return len(self.generators) == 1 and len(self.generators[0]) == len(self.variables)

    def is_independence(self) -> bool:
        return all(len(g) == 1 for g in self.generators)

    @classmethod
    def saturated(cls, variables: Sequence[str]) -> "GeneratingClass":
        return cls([tuple(variables)], variables)

    @classmethod
    def independence(cls, variables: Sequence[str]) -> "GeneratingClass":
        return cls([(v,) for v in variables], variables)


# Models 1-8 (three variables) and 9-11 (four variables) of the worked analysis.
NAMED_MODELS = {
    "model1": "[SSC-W][SSC-F][TIME]",
    "model2": "[SSC-W][SSC-F,TIME]",
    "model3": "[SSC-W,TIME][SSC-F]",
    "model4": "[SSC-W,SSC-F][TIME]",
    "model5": "[SSC-W,SSC-F][SSC-W,TIME]",
    "model6": "[SSC-W,SSC-F][SSC-F,TIME]",
    "model7": "[SSC-W,TIME][SSC-F,TIME]",
    "model8": "[SSC-W,SSC-F][SSC-W,TIME][SSC-F,TIME]",
    "model9": "[SSC-W,SSC-F][SSC-W,TIME][SSC-W,IC]",
    "model10": "[SSC-W,SSC-F][SSC-W,TIME][SSC-F,IC]",
    "model11": "[SSC-W,SSC-F][SSC-W,TIME][SSC-W,IC][SSC-F,IC]",
}


def named_model(name: str) -> GeneratingClass:
    key = name.lower().replace(" ", "").replace("_", "")
    if key not in NAMED_MODELS:
        raise ModelError(f"unknown model name {name!r}; have {sorted(NAMED_MODELS)}")
    return GeneratingClass.parse(NAMED_MODELS[key])


def model_name(gc: GeneratingClass) -> str | None:
    """``"Model 9"`` style label when ``gc`` is one of the named models."""
    for key, spec in NAMED_MODELS.items():
        if GeneratingClass.parse(spec) == gc:
            return "Model " + key[len("model"):]
    return None


def downset(gc: GeneratingClass) -> frozenset[frozenset[str]]:
    """Every nonempty subset of every generator."""
    out = set()
    for g in gc.generators:
        for r in range(1, len(g) + 1):
            out.update(frozenset(c) for c in combinations(g, r))
    return frozenset(out)


def _levels(schema) -> dict[str, int]:
    if isinstance(schema, ContingencyTable):
        schema = schema.schema
    if isinstance(schema, dict):
        return dict(schema)
    return {v.name: v.n_levels for v in schema}


def param_count(gc: GeneratingClass, schema: ContingencyTable | Sequence[VariableSchema] | dict) -> int:
    """Free parameters: 1 + sum over the downset of prod(levels - 1)."""
    levels = _levels(schema)
    return 1 + sum(math.prod(levels[v] - 1 for v in term) for term in downset(gc))


@dataclass(frozen=True, eq=False)
class FitResult:
    generating_class: GeneratingClass
    observed: ContingencyTable
    fitted: ContingencyTable
    g2: float
    df: int
    n_params: int
    pvalue: float
    aic: float
    iterations: int
    converged: bool

    def to_json(self) -> dict:
        return {
            "generators": [list(g) for g in self.generating_class.generators],
            "model": str(self.generating_class),
            "g2": self.g2,
            "df": self.df,
            "pvalue": self.pvalue,
            "aic": self.aic,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class NestedComparison:
    sub: str
    super_: str
    delta_g2: float
    delta_df: int
    pvalue: float

    def to_json(self) -> dict:
        return {
            "sub": self.sub,
            "super": self.super_,
            "delta_g2": self.delta_g2,
            "delta_df": self.delta_df,
            "pvalue": self.pvalue,
        }


@lru_cache(maxsize=4096)
def _margin_index(shape: tuple[int, ...], axes: tuple[int, ...]) -> tuple[np.ndarray, int]:
    grids = np.indices(shape).reshape(len(shape), -1)
    sub_shape = tuple(shape[a] for a in axes)
    idx = np.ravel_multi_index(tuple(grids[a] for a in axes), sub_shape).astype(np.int64)
    idx.setflags(write=False)
    return idx, math.prod(sub_shape)


def _fit_plan(shape: tuple[int, ...], gen_axes: Sequence[tuple[int, ...]]):
    pieces = [_margin_index(shape, tuple(sorted(a))) for a in gen_axes]
    margin_index = np.ascontiguousarray(np.stack([p[0] for p in pieces]))
    margin_sizes = np.array([p[1] for p in pieces], dtype=np.int64)
    return margin_index, margin_sizes


def deviance(observed: np.ndarray, fitted: np.ndarray) -> float:
    """G^2 = 2 sum n log(n / m) over cells with n > 0."""
    nz = observed > 0
    n = observed[nz]
    m = fitted[nz]
    return max(0.0, float(2.0 * np.sum(n * np.log(n / m))))


def ipf_fit(
    table: ContingencyTable,
    gc: GeneratingClass,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    backend: str | None = None,
) -> FitResult:
    """Maximum likelihood fit of ``gc`` to ``table`` by iterative proportional fitting.

    Cycles over the generators in declaration order starting from a table of
    ones, until over a full cycle no fitted cell moves by ``tol`` or more and
    every generator margin matches the observed margin within ``tol``.
    A fit that hits ``max_iter`` is returned with ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if table.total <= 0:
        raise ModelError("cannot fit an empty table")
    if set(gc.variables) != set(table.names):
        raise ModelError(
            f"model variables {sorted(gc.variables)} differ from table variables "
            f"{sorted(table.names)}; marginalize the table first"
        )
    gen_axes = [tuple(table.axis(v) for v in g) for g in gc.generators]
    margin_index, margin_sizes = _fit_plan(table.shape, gen_axes)
    observed = np.ascontiguousarray(table.counts.ravel(), dtype=float)
    fitted, iterations, converged = kernels.get_ipf(backend)(
        observed, margin_index, margin_sizes, float(tol), int(max_iter)
    )
    fitted = np.asarray(fitted).reshape(table.shape)
    g2 = deviance(table.counts, fitted)
    n_params = param_count(gc, table)
    df = table.n_cells - n_params
    pvalue = chisq_sf(g2, df) if df > 0 else 1.0
    return FitResult(
        generating_class=gc,
        observed=table,
        fitted=ContingencyTable(table.schema, fitted),
        g2=g2,
        df=df,
        n_params=n_params,
        pvalue=pvalue,
        aic=g2 + 2.0 * n_params,
        iterations=int(iterations),
        converged=bool(converged),
    )


def aic(fit: FitResult) -> float:
    """G^2 + 2 * parameters; differs from -2 loglik + 2 * parameters by a per-table constant."""
    return fit.g2 + 2.0 * fit.n_params


def compare_nested(sub: FitResult, super_: FitResult) -> NestedComparison:
    """Likelihood-ratio test of ``sub`` against a model it is nested in."""
    if sub.observed is not super_.observed and sub.observed != super_.observed:
        raise ModelError("nested comparison needs fits to the same observed table")
    if not downset(sub.generating_class) < downset(super_.generating_class):
        raise ModelError(
            f"{sub.generating_class} is not a strict sub-model of {super_.generating_class}"
        )
    delta_g2 = sub.g2 - super_.g2
    delta_df = sub.df - super_.df
    return NestedComparison(
        sub=str(sub.generating_class),
        super_=str(super_.generating_class),
        delta_g2=delta_g2,
        delta_df=delta_df,
        pvalue=chisq_sf(max(delta_g2, 0.0), delta_df),
    )
