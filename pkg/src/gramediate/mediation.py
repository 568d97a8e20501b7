"""Causal mediation with proportional-odds models for an ordinal mediator and outcome.

Point estimates average the outcome-category probabilities analytically over
the mediator's categories, so they are deterministic; only the percentile
bootstrap intervals use random numbers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .table import ObservationRecords, VariableSchema
from .validate import substream

__all__ = [
    "ConvergenceError",
    "Design",
    "PropOddsModel",
    "MediationEstimate",
    "fit_prop_odds",
    "fit_prop_odds_arrays",
    "category_probs",
    "mediation_effects",
    "mediate",
    "STATISTICS",
]

Coding = Literal["numeric", "dummy"]
STATISTICS = ("acme_control", "acme_treated", "ade_control", "ade_treated", "total")
LABELS = {
    "acme_control": "ACME (control)",
    "acme_treated": "ACME (treated)",
    "ade_control": "ADE (control)",
    "ade_treated": "ADE (treated)",
    "total": "Total Effect",
}
_MAX_HALVINGS = 30


class ConvergenceError(RuntimeError):
    """Newton iterations failed (separation, empty category, or no progress)."""


def _expit(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class Design:
    """How categorical predictors become numeric columns.

    ``numeric`` uses the level index (0, 1, 2, ...) as a single column;
    ``dummy`` adds one indicator per non-reference level.
    """

    variables: tuple[VariableSchema, ...]
    coding: tuple[Coding, ...]

    @classmethod
    def build(cls, schema: Sequence[VariableSchema], predictors: Sequence[str],
              coding: Mapping[str, Coding] | Coding = "numeric") -> "Design":
        by_name = {v.name: v for v in schema}
        variables = tuple(by_name[p] for p in predictors)
        if isinstance(coding, str):
            codes = tuple(coding for _ in predictors)
        else:
            codes = tuple(coding.get(p, "numeric") for p in predictors)
        for c in codes:
            if c not in ("numeric", "dummy"):
                raise ValueError(f"unknown coding {c!r}")
        return cls(variables, codes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def columns(self) -> tuple[str, ...]:
        cols = []
        for v, c in zip(self.variables, self.coding):
            if c == "numeric":
                cols.append(v.name)
            else:
                cols += [f"{v.name}[{lab}]" for lab in v.levels[1:]]
        return tuple(cols)

    def matrix(self, levels: Mapping[str, np.ndarray | int], n: int | None = None) -> np.ndarray:
        """Design rows from level indices; scalars are broadcast to ``n`` rows."""
        if n is None:
            n = max((np.size(levels[name]) for name in self.names), default=1)
        cols = []
        for v, c in zip(self.variables, self.coding):
            x = np.broadcast_to(np.asarray(levels[v.name]), (n,))
            if c == "numeric":
                cols.append(x.astype(float))
            else:
                cols += [(x == k).astype(float) for k in range(1, v.n_levels)]
        return np.column_stack(cols) if cols else np.zeros((n, 0))


@dataclass(frozen=True, eq=False)
class PropOddsModel:
    """Pr(Y <= j | x) = logistic(theta_j - x . beta)."""

    outcome: str
    levels: tuple[str, ...]
    design: Design
    beta: np.ndarray
    theta: np.ndarray
    loglik: float
    iterations: int
    gradient_norm: float
    loglik_trace: tuple[float, ...] = ()
    covariance: np.ndarray | None = field(default=None, repr=False)

    @property
    def predictors(self) -> tuple[str, ...]:
        return self.design.columns

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def stderr(self) -> np.ndarray:
        if self.covariance is None:
            raise ValueError("model has no covariance estimate")
        return np.sqrt(np.diag(self.covariance))

    def coef(self) -> dict[str, float]:
        return dict(zip(self.predictors, map(float, self.beta)))

    def probs(self, levels: Mapping[str, np.ndarray | int], n: int | None = None) -> np.ndarray:
        return category_probs(self, self.design.matrix(levels, n))

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome,
            "predictors": list(self.predictors),
            "beta": self.beta.tolist(),
            "theta": self.theta.tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
        }


def category_probs(model: PropOddsModel, x) -> np.ndarray:
    """Category probabilities for design row(s) ``x``; rows sum to one."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != len(model.beta):
        raise ValueError(f"expected {len(model.beta)} covariates, got {x.shape[1]}")
    eta = x @ model.beta
    cum = _expit(model.theta[None, :] - eta[:, None])
    n = len(eta)
    cum = np.column_stack([np.zeros(n), cum, np.ones(n)])
    p = np.clip(np.diff(cum, axis=1), 0.0, None)
    return p[0] if single else p


def _derivatives(params, y, X, w, J, need_hessian=True):
    K = X.shape[1]
    beta, theta = params[:K], params[K:]
    eta = X @ beta
    n = len(y)
    has_up = y < J - 1
    has_lo = y > 0
    up = np.where(has_up, theta[np.minimum(y, J - 2)] - eta, 0.0)
    lo = np.where(has_lo, theta[np.maximum(y - 1, 0)] - eta, 0.0)
    Fa = np.where(has_up, _expit(up), 1.0)
    Fb = np.where(has_lo, _expit(lo), 0.0)
    fa = np.where(has_up, Fa * (1 - Fa), 0.0)
    fb = np.where(has_lo, Fb * (1 - Fb), 0.0)
    p = Fa - Fb
    if np.any(p <= 0):
        return -np.inf, None, None
    loglik = float(np.sum(w * np.log(p)))

    ga = fa / p
    gb = -fb / p
    Da = np.zeros((n, K + J - 1))
    Db = np.zeros((n, K + J - 1))
    Da[:, :K] = -X
    Db[:, :K] = -X
    rows = np.arange(n)
    Da[rows[has_up], K + y[has_up]] = 1.0
    Db[rows[has_lo], K + y[has_lo] - 1] = 1.0
    grad = Da.T @ (w * ga) + Db.T @ (w * gb)
    if not need_hessian:
        return loglik, grad, None
    haa = fa * (1 - 2 * Fa) / p - ga**2
    hbb = -fb * (1 - 2 * Fb) / p - gb**2
    hab = -ga * gb
    cross = (Da * (w * hab)[:, None]).T @ Db
    hess = (Da * (w * haa)[:, None]).T @ Da + (Db * (w * hbb)[:, None]).T @ Db + cross + cross.T
    return loglik, grad, hess


def fit_prop_odds_arrays(
    y: np.ndarray,
    X: np.ndarray,
    weights: np.ndarray | None,
    n_levels: int,
    fixed: Mapping[int, float] | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> dict:
    """Weighted proportional-odds maximum likelihood by damped Newton.

    Returns a dict with ``beta``, ``theta``, ``loglik``, ``iterations``,
    ``gradient_norm``, ``loglik_trace`` and ``covariance``. ``fixed`` holds
    coefficient values (by column index) that are not estimated.
    """
    y = np.asarray(y, dtype=np.int64)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    J = int(n_levels)
    K = X.shape[1]
    if J < 2:
        raise ValueError("outcome needs at least 2 levels")
    keep = w > 0
    y, X, w = y[keep], X[keep], w[keep]
    freq = np.bincount(y, weights=w, minlength=J)
    if np.count_nonzero(freq) < 2:
        raise ConvergenceError("outcome is constant")
    if np.any(freq == 0):
        raise ConvergenceError(f"outcome categories {np.flatnonzero(freq == 0).tolist()} are empty")

    fixed = dict(fixed or {})
    free = np.array([i not in fixed for i in range(K)] + [True] * (J - 1))
    cum = np.cumsum(freq)[:-1] / freq.sum()
    params = np.concatenate([np.zeros(K), np.log(cum / (1 - cum))])
    for i, v in fixed.items():
        params[i] = v

    loglik, grad, hess = _derivatives(params, y, X, w, J)
    trace = [loglik]
    it = 0
    while True:
        gnorm = float(np.max(np.abs(grad[free]))) if free.any() else 0.0
        if gnorm < tol:
            # a flat likelihood with a large Newton step means the optimum is at infinity
            try:
                last = np.linalg.solve(-hess[np.ix_(free, free)], grad[free])
            except np.linalg.LinAlgError:
                raise ConvergenceError("singular Hessian at the optimum") from None
            if np.max(np.abs(last), initial=0.0) > 1e-4:
                raise ConvergenceError("likelihood flattens without an optimum; likely separation")
            break
        if it >= max_iter:
            raise ConvergenceError(f"no convergence after {max_iter} Newton steps (|grad|={gnorm:.3g})")
        try:
            step = np.linalg.solve(-hess[np.ix_(free, free)], grad[free])
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Hessian; predictors may be collinear") from None
        scale = 1.0
        for _ in range(_MAX_HALVINGS + 1):
            trial = params.copy()
            trial[free] += scale * step
            ordered = np.all(np.diff(trial[K:]) > 0)
            if ordered:
                new_loglik, new_grad, new_hess = _derivatives(trial, y, X, w, J)
                if new_loglik >= loglik - 1e-12 * abs(loglik):
                    break
            scale *= 0.5
        else:
            raise ConvergenceError("step halving failed to increase the log-likelihood")
        params, loglik, grad, hess = trial, new_loglik, new_grad, new_hess
        trace.append(loglik)
        it += 1
        if np.max(np.abs(params)) > 1e3:
            raise ConvergenceError("coefficients diverge; likely separation")

    cov = np.full((K + J - 1, K + J - 1), np.nan)
    try:
        sub = np.linalg.inv(-hess[np.ix_(free, free)])
        cov[np.ix_(free, free)] = sub
    except np.linalg.LinAlgError:
        pass
    return {
        "beta": params[:K],
        "theta": params[K:],
        "loglik": loglik,
        "iterations": it,
        "gradient_norm": gnorm,
        "loglik_trace": tuple(trace),
        "covariance": cov[:K, :K],
    }


def _aggregate(records: ObservationRecords, names: Sequence[str], weights=None):
    cols = np.column_stack([records.column(n) for n in names]) if names else np.zeros((len(records), 0), int)
    if weights is None:
        uniq, inverse = np.unique(cols, axis=0, return_inverse=True)
        w = np.bincount(inverse.ravel(), minlength=len(uniq)).astype(float)
    else:
        uniq, w = cols, np.asarray(weights, dtype=float)
    return {n: uniq[:, i] for i, n in enumerate(names)}, w


def fit_prop_odds(
    records: ObservationRecords,
    outcome: str,
    predictors: Sequence[str],
    coding: Mapping[str, Coding] | Coding = "numeric",
    fixed: Mapping[str, float] | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> PropOddsModel:
    """Fit ``outcome ~ predictors`` by maximum likelihood.

    Records are collapsed to distinct (outcome, predictor) patterns with
    counts as weights, which leaves the likelihood unchanged.
    """
    names = list(dict.fromkeys([outcome, *predictors]))
    if outcome in predictors:
        raise ValueError("outcome cannot also be a predictor")
    levels, w = _aggregate(records, names)
    return _fit(records.schema, outcome, predictors, coding, levels, w, fixed, tol, max_iter)


def _fit(schema, outcome, predictors, coding, levels, w, fixed=None, tol=1e-8, max_iter=100):
    design = Design.build(schema, predictors, coding)
    X = design.matrix(levels, len(w))
    out_var = {v.name: v for v in schema}[outcome]
    fixed_idx = {design.columns.index(k): v for k, v in (fixed or {}).items()}
    res = fit_prop_odds_arrays(levels[outcome], X, w, out_var.n_levels, fixed_idx, tol, max_iter)
    return PropOddsModel(
        outcome=outcome,
        levels=out_var.levels,
        design=design,
        beta=res["beta"],
        theta=res["theta"],
        loglik=res["loglik"],
        iterations=res["iterations"],
        gradient_norm=res["gradient_norm"],
        loglik_trace=res["loglik_trace"],
        covariance=res["covariance"],
    )


def mediation_effects(
    mediator_model: PropOddsModel,
    outcome_model: PropOddsModel,
    treatment: str,
    covariate_levels: Mapping[str, np.ndarray],
    covariate_weights: np.ndarray,
) -> dict[str, np.ndarray]:
    """ACME, ADE and total effect on each outcome-category probability.

    ``pbar[t, s]`` is the covariate-averaged probability vector of the outcome
    when the outcome model sees treatment ``t`` and the mediator is drawn
    from its distribution under treatment ``s``.
    """
    w = np.asarray(covariate_weights, dtype=float)
    w = w / w.sum()
    n = len(w)
    mediator = mediator_model.outcome
    J_m = mediator_model.n_levels
    pbar = np.zeros((2, 2, outcome_model.n_levels))
    for s in (0, 1):
        pm = mediator_model.probs({**covariate_levels, treatment: s}, n)
        for t in (0, 1):
            acc = np.zeros(outcome_model.n_levels)
            for m in range(J_m):
                py = outcome_model.probs({**covariate_levels, treatment: t, mediator: m}, n)
                acc += (w * pm[:, m]) @ py
            pbar[t, s] = acc
    return {
        "acme_control": pbar[0, 1] - pbar[0, 0],
        "acme_treated": pbar[1, 1] - pbar[1, 0],
        "ade_control": pbar[1, 0] - pbar[0, 0],
        "ade_treated": pbar[1, 1] - pbar[0, 1],
        "total": pbar[1, 1] - pbar[0, 0],
    }


@dataclass(frozen=True, eq=False)
class MediationEstimate:
    treatment: str
    mediator: str
    outcome: str
    covariates: tuple[str, ...]
    outcome_levels: tuple[str, ...]
    estimate: dict[str, np.ndarray]
    ci_low: dict[str, np.ndarray]
    ci_high: dict[str, np.ndarray]
    pvalue: dict[str, np.ndarray]
    n_boot: int
    n_failed: int
    seed: int
    alpha: float
    mediator_model: PropOddsModel
    outcome_model: PropOddsModel
    draws: np.ndarray | None = field(default=None, repr=False)

    @property
    def acme(self) -> np.ndarray:
        """Rows: control, treated."""
        return np.vstack([self.estimate["acme_control"], self.estimate["acme_treated"]])

    @property
    def ade(self) -> np.ndarray:
        return np.vstack([self.estimate["ade_control"], self.estimate["ade_treated"]])

    @property
    def total(self) -> np.ndarray:
        return self.estimate["total"]

    def to_json(self) -> dict:
        cats = [f"Pr({self.outcome}={lab})" for lab in self.outcome_levels]
        rows = []
        for stat in STATISTICS:
            rows.append({
                "statistic": stat,
                "label": LABELS[stat],
                "categories": cats,
                "estimate": self.estimate[stat].tolist(),
                "ci_low": self.ci_low[stat].tolist(),
                "ci_high": self.ci_high[stat].tolist(),
                "pvalue": self.pvalue[stat].tolist(),
            })
        return {
            "treatment": self.treatment,
            "mediator": self.mediator,
            "outcome": self.outcome,
            "covariates": list(self.covariates),
            "n_boot": self.n_boot,
            "n_failed": self.n_failed,
            "seed": self.seed,
            "ci_level": 1 - self.alpha,
            "rows": rows,
            "mediator_model": self.mediator_model.to_json(),
            "outcome_model": self.outcome_model.to_json(),
        }


def _point(schema, cells, weights, treatment, mediator, outcome, covariates, coding):
    med_model = _fit(schema, mediator, [treatment, *covariates], coding, cells, weights)
    out_model = _fit(schema, outcome, [mediator, treatment, *covariates], coding, cells, weights)
    if covariates:
        cov_cols = np.column_stack([cells[c] for c in covariates])
        uniq, inv = np.unique(cov_cols, axis=0, return_inverse=True)
        cw = np.bincount(inv.ravel(), weights=weights, minlength=len(uniq))
        cov_levels = {c: uniq[:, i] for i, c in enumerate(covariates)}
    else:
        cw = np.array([weights.sum()])
        cov_levels = {}
    effects = mediation_effects(med_model, out_model, treatment, cov_levels, cw)
    return effects, med_model, out_model


def _boot_chunk(job):
    schema, cells, weights, cell_of_record, args, seed, lo, hi = job
    n = len(cell_of_record)
    draws = []
    failed = 0
    for b in range(lo, hi):
        attempt = 0
        while True:
            rng = substream(seed, b, attempt)
            pick = cell_of_record[rng.integers(0, n, size=n)]
            w = np.bincount(pick, minlength=len(weights)).astype(float)
            try:
                eff, _, _ = _point(schema, cells, w, *args)
            except ConvergenceError:
                failed += 1
                attempt += 1
                if attempt > 100:
                    raise
                continue
            draws.append(np.stack([eff[s] for s in STATISTICS]))
            break
    return lo, np.array(draws), failed


def mediate(
    records: ObservationRecords,
    treatment: str,
    mediator: str,
    outcome: str,
    covariates: Sequence[str] = (),
    n_boot: int = 2500,
    seed: int = 20240101,
    coding: Mapping[str, Coding] | Coding = "numeric",
    alpha: float = 0.05,
    workers: int = 1,
    chunk: int = 250,
) -> MediationEstimate:
    """Mediator model ``mediator ~ treatment + covariates`` and outcome model
    ``outcome ~ mediator + treatment + covariates``, both proportional odds.

    Bootstrap draw ``b`` resamples the records with replacement from its own
    substream (seed, b, attempt); a draw whose refit fails is redrawn with the
    next attempt number and counted in ``n_failed``.
    """
    by_name = {v.name: v for v in records.schema}
    if by_name[treatment].n_levels != 2:
        raise ValueError(f"treatment {treatment!r} must be binary")
    covariates = tuple(covariates)
    names = list(dict.fromkeys([treatment, mediator, outcome, *covariates]))
    cols = np.column_stack([records.column(n) for n in names])
    uniq, inv = np.unique(cols, axis=0, return_inverse=True)
    inv = inv.ravel()
    cells = {n: uniq[:, i] for i, n in enumerate(names)}
    weights = np.bincount(inv, minlength=len(uniq)).astype(float)
    args = (treatment, mediator, outcome, covariates, coding)
    schema = records.schema

    estimate, med_model, out_model = _point(schema, cells, weights, *args)

    jobs = [
        (schema, cells, weights, inv, args, seed, lo, min(lo + chunk, n_boot))
        for lo in range(0, n_boot, chunk)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_boot_chunk, jobs))
    else:
        parts = [_boot_chunk(j) for j in jobs]
    parts.sort(key=lambda p: p[0])
    J = out_model.n_levels
    draws = np.concatenate([p[1] for p in parts]) if n_boot else np.zeros((0, len(STATISTICS), J))
    n_failed = sum(p[2] for p in parts)

    ci_low, ci_high, pvalue = {}, {}, {}
    for k, stat in enumerate(STATISTICS):
        d = draws[:, k, :]
        if n_boot:
            lo, hi = np.quantile(d, [alpha / 2, 1 - alpha / 2], axis=0)
            below = (np.sum(d <= 0, axis=0) + 1) / (n_boot + 1)
            above = (np.sum(d >= 0, axis=0) + 1) / (n_boot + 1)
            p = np.minimum(1.0, 2 * np.minimum(below, above))
        else:
            lo = hi = p = np.full(J, math.nan)
        ci_low[stat], ci_high[stat], pvalue[stat] = lo, hi, p

    return MediationEstimate(
        treatment=treatment,
        mediator=mediator,
        outcome=outcome,
        covariates=covariates,
        outcome_levels=out_model.levels,
        estimate=estimate,
        ci_low=ci_low,
        ci_high=ci_high,
        pvalue=pvalue,
        n_boot=n_boot,
        n_failed=n_failed,
        seed=seed,
        alpha=alpha,
        mediator_model=med_model,
        outcome_model=out_model,
        draws=draws,
    )
