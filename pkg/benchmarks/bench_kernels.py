"""Compare the compiled and pure-Python IPF kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Times a single fit for a
few model/table sizes, then a full four-variable consensus search, once
per available backend. Both backends must agree
on the fitted values; the script checks that before timing anything.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from gramediate import kernels
from gramediate.loglin import GeneratingClass, _fit_plan, named_model
from gramediate.modelspace import FitCache, search
from gramediate.table import ContingencyTable, VariableSchema, embedded_dataset


def _random_table(shape, seed=0) -> ContingencyTable:
    rng = np.random.default_rng(seed)
    schema = [VariableSchema(f"V{i}", tuple(str(k) for k in range(s))) for i, s in enumerate(shape)]
    return ContingencyTable(schema, rng.poisson(20, size=shape).astype(float))


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_fit(table: ContingencyTable, gc: GeneratingClass, repeat: int) -> dict:
    index, sizes = _fit_plan(table.shape, [tuple(table.axis(v) for v in g) for g in gc.generators])
    observed = np.ascontiguousarray(table.counts.ravel())
    out = {}
    ref = None
    for name in kernels.available_backends():
        ipf = kernels.get_ipf(name)
        fitted, _, _ = ipf(observed, index, sizes, 1e-8, 10_000)
        if ref is None:
            ref = fitted
        elif not np.allclose(fitted, ref, rtol=0, atol=1e-8):
            raise AssertionError(f"backend {name} disagrees with {kernels.available_backends()[0]}")
        out[name] = _best_of(lambda: ipf(observed, index, sizes, 1e-8, 10_000), repeat)
    return out


def bench_search(table: ContingencyTable, repeat: int) -> dict:
    out = {}
    for name in kernels.available_backends():
        out[name] = _best_of(lambda: search(table, FitCache(table, backend=name)), repeat)
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    print(f"default backend: {kernels.BACKEND}; available: {', '.join(kernels.available_backends())}")
    builtin = embedded_dataset()
    cases = [
        ("builtin 4x4x3x2, model9", builtin, named_model("model9").canonical(builtin.names)),
        ("builtin 4x4x3x2, model11", builtin, named_model("model11").canonical(builtin.names)),
    ]
    big = _random_table((6, 6, 6, 6, 4))
    cases.append((
        "random 6x6x6x6x4, all 3-way",
        big,
        GeneratingClass.parse("[V0,V1,V2][V1,V2,V3][V2,V3,V4][V0,V3,V4]", big.names),
    ))
    backends = kernels.available_backends()
    print(f"{'case':34s}" + "".join(f"{b:>14s}" for b in backends) + "   speedup")
    for label, table, gc in cases:
        res = bench_fit(table, gc, args.repeat)
        row = f"{label:34s}" + "".join(f"{res[b] * 1e3:11.3f} ms" for b in backends)
        if len(res) == 2:
            row += f"   {res['python'] / res['cython']:6.2f}x"
        print(row)
    res = bench_search(builtin, max(3, args.repeat // 5))
    row = f"{'consensus search, builtin':34s}" + "".join(f"{res[b] * 1e3:11.3f} ms" for b in backends)
    if len(res) == 2:
        row += f"   {res['python'] / res['cython']:6.2f}x"
    print(row)


if __name__ == "__main__":
    main()
