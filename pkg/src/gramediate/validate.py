"""Out-of-sample model recovery: subsample, re-select, count how often the target comes back."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .loglin import GeneratingClass
from .modelspace import ModelClass, consensus, enumerate_hierarchical
from .table import DataError, ObservationRecords, crosstab

__all__ = [
    "RecoveryReport",
    "substream",
    "subsample",
    "recovery_curve",
    "random_guess_baseline",
    "reports_to_csv",
    "desk_grid",
    "full_grid",
]

CSV_COLUMNS = ("q", "replicates", "consensus_reached", "target_recovered", "proportion", "baseline")


@dataclass(frozen=True)
class RecoveryReport:
    q: float
    replicates: int
    consensus_reached: int
    target_recovered: int
    baseline: float

    def __post_init__(self):
        if not 0 <= self.target_recovered <= self.consensus_reached <= self.replicates:
            raise ValueError("need 0 <= target_recovered <= consensus_reached <= replicates")

    @property
    def proportion(self) -> float:
        return self.target_recovered / self.replicates if self.replicates else 0.0

    def to_row(self) -> dict:
        return {
            "q": self.q,
            "replicates": self.replicates,
            "consensus_reached": self.consensus_reached,
            "target_recovered": self.target_recovered,
            "proportion": self.proportion,
            "baseline": self.baseline,
        }


def _q_key(q: float) -> int:
    return int(round(q * 10_000))


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for one (seed, keys...) job."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def desk_grid() -> list[float]:
    return [round(0.05 * i, 2) for i in range(1, 20)]


def full_grid() -> list[float]:
    return [round(0.01 * i, 2) for i in range(1, 100)]


def random_guess_baseline(n_vars: int) -> float:
    """Chance of hitting one model when picking uniformly among all hierarchical models."""
    return 1.0 / len(enumerate_hierarchical(n_vars))


def subsample(records: ObservationRecords, q: float, rng: np.random.Generator) -> ObservationRecords:
    """floor(q * n) records drawn uniformly without replacement."""
    if not 0 < q < 1:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    k = math.floor(q * len(records))
    if k == 0:
        raise DataError(f"q={q} selects no records out of {len(records)}")
    idx = rng.choice(len(records), size=k, replace=False)
    return records.take(np.sort(idx))


def _count(job) -> tuple[float, int, int, int]:
    rows, schema, target, q, seed, start, stop, model_class = job
    records = ObservationRecords(schema, rows)
    reached = recovered = 0
    for rep in range(start, stop):
        sample = subsample(records, q, substream(seed, _q_key(q), rep))
        found = consensus(crosstab(sample), model_class=model_class)
        if found is not None:
            reached += 1
            recovered += found == target
    return q, stop - start, reached, recovered


def recovery_curve(
    records: ObservationRecords,
    target: GeneratingClass,
    variables: Sequence[str] | None = None,
    qs: Sequence[float] | None = None,
    replicates: int = 500,
    seed: int = 20240101,
    workers: int = 1,
    model_class: ModelClass = "decomposable",
    chunk: int = 50,
) -> list[RecoveryReport]:
    """Recovery proportion of ``target`` for each sampling fraction in ``qs``.

    Replicate ``r`` at fraction ``q`` draws from its own substream keyed by
    (seed, q, r), so the result does not depend on ``workers`` or on the order
    in which jobs finish. Replicates where the forward and backward searches
    disagree count towards ``replicates`` but not ``consensus_reached``.
    """
    variables = list(variables) if variables is not None else list(target.variables)
    if set(variables) != set(target.variables):
        raise ValueError(f"target {target} is not over variables {variables}")
    qs = list(qs) if qs is not None else desk_grid()
    if replicates < 1:
        raise ValueError("replicates must be positive")
    records = records.select(variables)
    target = target.canonical(variables)
    jobs = [
        (records.rows, records.schema, target, q, seed, lo, min(lo + chunk, replicates), model_class)
        for q in qs
        for lo in range(0, replicates, chunk)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_count, jobs))
    else:
        results = [_count(j) for j in jobs]

    totals = {_q_key(q): [q, 0, 0, 0] for q in qs}
    for q, n, reached, recovered in results:
        acc = totals[_q_key(q)]
        acc[1] += n
        acc[2] += reached
        acc[3] += recovered
    base = random_guess_baseline(len(variables))
    return [RecoveryReport(q, n, reached, recovered, base) for q, n, reached, recovered in totals.values()]


def reports_to_csv(reports: Sequence[RecoveryReport], header: Sequence[str] = ()) -> str:
    """CSV plot data; ``header`` lines are written first as ``#`` comments."""
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.to_row()
        row["proportion"] = repr(row["proportion"])
        row["baseline"] = repr(row["baseline"])
        w.writerow(row)
    return buf.getvalue()


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
