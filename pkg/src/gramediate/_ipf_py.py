"""Pure-numpy IPF kernel; same contract as the compiled ``_ipf_ext.ipf``."""
from __future__ import annotations

import numpy as np


def ipf(observed, margin_index, margin_sizes, tol, max_iter):
    observed = np.asarray(observed, dtype=float)
    plan = []
    for idx, size in zip(margin_index, margin_sizes):
        target = np.bincount(idx, weights=observed, minlength=int(size))
        plan.append((idx, int(size), target))
    fitted = np.ones_like(observed)
    converged = False
    it = 0
    while it < max_iter:
        previous = fitted.copy()
        mismatch = 0.0
        for idx, size, target in plan:
            current = np.bincount(idx, weights=fitted, minlength=size)
            mismatch = max(mismatch, float(np.max(np.abs(target - current))))
            ratio = np.divide(target, current, out=np.zeros(size), where=current > 0)
            fitted *= ratio[idx]
        it += 1
        if np.max(np.abs(fitted - previous)) < tol and mismatch < tol:
            converged = True
            break
    return fitted, it, converged
