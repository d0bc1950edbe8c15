"""Empirical-Bayes location/scale correction of per-session batch effects.

The model for feature ``f``, observation ``j`` of batch ``i`` is::

    Y_ijf = alpha_f + X beta_f + gamma_if + delta_if * E_ijf

Data are standardized with a least-squares fit (batch effects constrained to
``sum_i n_i gamma_if = 0``), batch means and variances of the standardized
data get normal / inverse-gamma priors fitted by moments across features,
and the posterior means replace the raw per-batch estimates.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import EMOTION_ORDER
from .table import FeatureTable

log = logging.getLogger(__name__)

CONV_TOL = 1e-6
MAX_ITER = 100
VAR_EPS = 1e-12
MODEL_VERSION = "1"


class BatchAdjustError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


def design_matrix(labels, mode: str = "emotion", order=EMOTION_ORDER):
    """One-hot design with the first level (in ``order``) as reference.

    ``mode="none"`` gives an empty design (intercept only; the intercept is
    carried by ``alpha``).
    """
    n = len(labels)
    if mode == "none":
        return np.zeros((n, 0)), []
    if mode != "emotion":
        raise ValueError(f"unknown design mode {mode!r}")
    present = set(labels)
    levels = [l for l in order if l in present] + sorted(present - set(order))
    cols = levels[1:]
    X = np.array([[1.0 if lab == c else 0.0 for c in cols] for lab in labels]).reshape(n, len(cols))
    return X, [f"emotion={c}" for c in cols]


@dataclass
class Standardized:
    Z: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    gamma_ls: np.ndarray  # (batches, features), least-squares batch effects
    batch_levels: list
    batch_index: np.ndarray
    n_per_batch: np.ndarray
    flagged: np.ndarray  # zero-variance features


def _encode_batches(batches):
    levels = sorted(set(batches), key=str)
    lookup = {b: i for i, b in enumerate(levels)}
    return levels, np.array([lookup[b] for b in batches], dtype=int)


def _collinear_columns(M, names):
    bad = []
    kept = np.zeros((M.shape[0], 0))
    for j, name in enumerate(names):
        trial = np.column_stack([kept, M[:, j]])
        if np.linalg.matrix_rank(trial) > kept.shape[1]:
            kept = trial
        else:
            bad.append(name)
    return bad


def standardize(Y, batches, X=None, design_names=None) -> Standardized:
    """Least-squares fit of grand mean, design and batch terms; return Z.

    ``Z = (Y - alpha - X beta) / sigma`` keeps the batch effects so they can
    be estimated next; ``sigma`` comes from the residuals of the full fit.
    """
    Y = np.asarray(Y, dtype=float)
    N, F = Y.shape
    levels, bidx = _encode_batches(batches)
    m = len(levels)
    if m < 2:
        raise BatchAdjustError("need at least two batches to adjust")
    counts = np.bincount(bidx, minlength=m)
    if counts.min() < 2:
        small = [levels[i] for i in np.flatnonzero(counts < 2)]
        raise BatchAdjustError(f"batches with fewer than 2 observations: {small}")
    X = np.zeros((N, 0)) if X is None else np.asarray(X, dtype=float).reshape(N, -1)
    design_names = list(design_names or [f"x{k}" for k in range(X.shape[1])])

    B = np.zeros((N, m))
    B[np.arange(N), bidx] = 1.0
    M = np.column_stack([B, X])
    names = [f"batch={b}" for b in levels] + design_names
    if np.linalg.matrix_rank(M) < M.shape[1]:
        bad = _collinear_columns(M, names)
        raise BatchAdjustError(f"design is singular; collinear columns: {', '.join(bad)}")

    coef, *_ = np.linalg.lstsq(M, Y, rcond=None)
    batch_coef = coef[:m]
    beta = coef[m:]
    alpha = (counts[:, None] * batch_coef).sum(axis=0) / N
    gamma_ls = batch_coef - alpha
    resid = Y - M @ coef
    sigma2 = (resid ** 2).mean(axis=0)
    scale = np.maximum(np.abs(Y).max(axis=0), 1.0)
    flagged = sigma2 <= VAR_EPS * scale ** 2
    sigma = np.sqrt(np.where(flagged, 1.0, sigma2))
    Z = (Y - alpha - X @ beta) / sigma
    Z[:, flagged] = 0.0
    return Standardized(Z, alpha, beta, sigma, gamma_ls, levels, bidx, counts, flagged)


@dataclass
class Priors:
    gamma_hat: np.ndarray  # (batches, features)
    delta2_hat: np.ndarray
    gamma_bar: np.ndarray  # (batches,)
    tau2: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    degenerate: np.ndarray  # (batches,) bool, shrinkage skipped


def moment_priors(gamma_hat, delta2_hat):
    """Method-of-moments hyper-parameters per batch (rows) across features.

    Normal prior for additive effects: mean and variance of ``gamma_hat``.
    Inverse-gamma prior for ``delta2_hat`` with mean ``m`` and variance
    ``s2``: ``lam = (m^2 + 2 s2) / s2`` and ``theta = (m^3 + m s2) / s2``.
    """
    g = np.atleast_2d(np.asarray(gamma_hat, dtype=float))
    d = np.atleast_2d(np.asarray(delta2_hat, dtype=float))
    gamma_bar = g.mean(axis=1)
    tau2 = g.var(axis=1, ddof=1) if g.shape[1] > 1 else np.zeros(g.shape[0])
    m = d.mean(axis=1)
    s2 = d.var(axis=1, ddof=1) if d.shape[1] > 1 else np.zeros(d.shape[0])
    degenerate = ~(s2 > VAR_EPS * np.maximum(m, 1.0) ** 2) | ~(tau2 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(degenerate, np.nan, (m ** 2 + 2 * s2) / s2)
        theta = np.where(degenerate, np.nan, (m ** 3 + m * s2) / s2)
    return gamma_bar, tau2, lam, theta, degenerate


def estimate_priors(Z, batch_index, n_batches=None, active=None) -> Priors:
    Z = np.asarray(Z, dtype=float)
    bidx = np.asarray(batch_index)
    m = int(n_batches if n_batches is not None else bidx.max() + 1)
    active = np.ones(Z.shape[1], bool) if active is None else np.asarray(active, bool)
    gamma_hat = np.zeros((m, Z.shape[1]))
    delta2_hat = np.ones((m, Z.shape[1]))
    for i in range(m):
        zi = Z[bidx == i]
        gamma_hat[i] = zi.mean(axis=0)
        delta2_hat[i] = zi.var(axis=0, ddof=1)
    gb, t2, lam, theta, degen = moment_priors(gamma_hat[:, active], delta2_hat[:, active])
    for i in np.flatnonzero(degen):
        msg = f"batch {i}: degenerate prior moments, using raw batch estimates"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return Priors(gamma_hat, delta2_hat, gb, t2, lam, theta, degen)


def _postmean(g_hat, g_bar, n, d_star, t2):
    return (t2 * n * g_hat + d_star * g_bar) / (t2 * n + d_star)


def _postvar(sum2, n, lam, theta):
    return (0.5 * sum2 + theta) / (n / 2.0 + lam - 1.0)


def posterior_adjust(Z, batch_index, priors: Priors, tol: float = CONV_TOL,
                     max_iter: int = MAX_ITER, active=None):
    """Posterior batch effects by fixed-point iteration.

    Returns ``(gamma_star, delta2_star, iterations)``; ``iterations`` holds one
    count per batch (0 where shrinkage was skipped).
    """
    Z = np.asarray(Z, dtype=float)
    bidx = np.asarray(batch_index)
    gamma_star = priors.gamma_hat.copy()
    delta2_star = priors.delta2_hat.copy()
    iters = np.zeros(len(gamma_star), dtype=int)
    active = np.ones(Z.shape[1], bool) if active is None else np.asarray(active, bool)
    for i in range(len(gamma_star)):
        if priors.degenerate[i]:
            continue
        zi = Z[bidx == i]
        n = zi.shape[0]
        g_hat = priors.gamma_hat[i]
        g_old, d_old = g_hat, priors.delta2_hat[i]
        for it in range(1, max_iter + 1):
            g_new = _postmean(g_hat, priors.gamma_bar[i], n, d_old, priors.tau2[i])
            sum2 = ((zi - g_new) ** 2).sum(axis=0)
            d_new = _postvar(sum2, n, priors.lam[i], priors.theta[i])
            with np.errstate(divide="ignore", invalid="ignore"):
                change = max(
                    np.nanmax((np.abs(g_new - g_old) / np.abs(g_old))[active], initial=0.0),
                    np.nanmax((np.abs(d_new - d_old) / d_old)[active], initial=0.0),
                )
            g_old, d_old = g_new, d_new
            if change < tol:
                break
        else:
            msg = f"batch {i}: posterior iteration hit {max_iter} iterations"
            log.warning(msg)
            warnings.warn(msg, ConvergenceWarning, stacklevel=2)
        gamma_star[i], delta2_star[i] = g_old, d_old
        iters[i] = it
    return gamma_star, delta2_star, iters


def reconstruct(Z, gamma_star, delta2_star, alpha, beta, sigma, X, batch_index, flagged=None, Y=None):
    """``Y* = sigma / delta* (Z - gamma*) + alpha + X beta``; flagged columns copy ``Y``."""
    Z = np.asarray(Z, dtype=float)
    bidx = np.asarray(batch_index)
    X = np.asarray(X, dtype=float).reshape(Z.shape[0], -1)
    g = gamma_star[bidx]
    d = np.sqrt(delta2_star[bidx])
    out = sigma / d * (Z - g) + alpha + X @ beta
    if flagged is not None and np.any(flagged):
        out[:, flagged] = np.asarray(Y, dtype=float)[:, flagged]
    return out


@dataclass
class BatchModel:
    features: list
    batches: list
    design_columns: list
    n_per_batch: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    gamma_hat: np.ndarray
    delta2_hat: np.ndarray
    gamma_bar: np.ndarray
    tau2: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    gamma_star: np.ndarray
    delta2_star: np.ndarray
    flagged: list = field(default_factory=list)
    degenerate_batches: list = field(default_factory=list)
    iterations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def arr(a):
            a = np.asarray(a, dtype=float)
            return np.where(np.isfinite(a), a, np.nan).tolist() if a.size else a.tolist()

        return {
            "version": MODEL_VERSION,
            "features": list(self.features),
            "batches": [str(b) for b in self.batches],
            "design_columns": list(self.design_columns),
            "n_per_batch": [int(v) for v in self.n_per_batch],
            "alpha": arr(self.alpha),
            "beta": arr(self.beta),
            "sigma2": arr(self.sigma2),
            "gamma_hat": arr(self.gamma_hat),
            "delta2_hat": arr(self.delta2_hat),
            "gamma_bar": arr(self.gamma_bar),
            "tau2": arr(self.tau2),
            "lambda": arr(self.lam),
            "theta": arr(self.theta),
            "gamma_star": arr(self.gamma_star),
            "delta2_star": arr(self.delta2_star),
            "flagged_features": list(self.flagged),
            "degenerate_batches": [str(b) for b in self.degenerate_batches],
            "iterations": [int(v) for v in self.iterations],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=True)


def combat(Y, batches, X=None, design_names=None, tol=CONV_TOL, max_iter=MAX_ITER):
    """Adjust a matrix; returns ``(Y_adjusted, BatchModel)``."""
    Y = np.asarray(Y, dtype=float)
    X = np.zeros((Y.shape[0], 0)) if X is None else np.asarray(X, dtype=float).reshape(Y.shape[0], -1)
    st = standardize(Y, batches, X, design_names)
    active = ~st.flagged
    pri = estimate_priors(st.Z, st.batch_index, len(st.batch_levels), active)
    g_star, d_star, iters = posterior_adjust(st.Z, st.batch_index, pri, tol, max_iter, active)
    d_star = np.where(active, d_star, 1.0)
    d_star = np.maximum(d_star, VAR_EPS)
    out = reconstruct(st.Z, g_star, d_star, st.alpha, st.beta, st.sigma, X, st.batch_index, st.flagged, Y)
    model = BatchModel(
        features=[], batches=st.batch_levels, design_columns=list(design_names or []),
        n_per_batch=st.n_per_batch, alpha=st.alpha, beta=st.beta, sigma2=st.sigma ** 2,
        gamma_hat=pri.gamma_hat, delta2_hat=pri.delta2_hat, gamma_bar=pri.gamma_bar,
        tau2=pri.tau2, lam=pri.lam, theta=pri.theta, gamma_star=g_star, delta2_star=d_star,
        degenerate_batches=[st.batch_levels[i] for i in np.flatnonzero(pri.degenerate)],
        iterations=list(iters),
    )
    return out, model, st.flagged


def adjust_table(table: FeatureTable, batch_col: str = "session_id", design: str = "emotion",
                 bypass: bool = False, tol=CONV_TOL, max_iter=MAX_ITER):
    """Adjust the filter-bank variables of a feature table.

    Frequency and voice-quality columns are copied through untouched.
    ``bypass`` returns an unchanged copy.
    """
    out = table.take(np.arange(len(table)))
    if bypass:
        out.meta = dict(out.meta, adjusted=False, bypass=True)
        return out, None
    if batch_col == "session_id":
        batches = table.session_ids
    elif batch_col == "speaker_id":
        batches = table.speaker_ids
    else:
        raise ValueError(f"unsupported batch column {batch_col!r}")
    fb = table.fb_names()
    if not fb:
        raise BatchAdjustError("table has no filter-bank variables to adjust")
    cols = [table.names.index(n) for n in fb]
    X, xnames = design_matrix(table.emotions, design)
    Yadj, model, flagged = combat(table.values[:, cols], batches, X, xnames, tol, max_iter)
    model.features = fb
    model.flagged = [fb[k] for k in np.flatnonzero(flagged)]
    out.values[:, cols] = Yadj
    out.meta = dict(out.meta, adjusted=True, batch_col=batch_col, design=design,
                    flagged_features=model.flagged)
    return out, model
