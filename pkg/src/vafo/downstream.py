"""Single-feature logistic regression harness for incidence prediction.

Mirrors the clinical protocol at desk scale: a balanced synthetic cohort
(two unit-variance Gaussian classes separated by an effect size d), a
stratified 60/40 split, a two-parameter logistic model fitted by damped
Newton iterations, and rank AUCs with percentile-bootstrap CIs on the
held-out subjects. Only the feature enters the model; no covariates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import metrics
from .errors import BadSizeError, SingleClassError

#: parameter magnitude cap signalling perfect separation
SEPARABLE_CAP = 50.0


@dataclass(frozen=True)
class Cohort:
    subject_ids: tuple[str, ...]
    features: np.ndarray  # (n,) float
    labels: np.ndarray    # (n,) int 0/1


@dataclass(frozen=True)
class LogitModel:
    weight: float
    intercept: float
    converged: bool
    iterations: int
    separable: bool = False
    ll_path: tuple[float, ...] = ()

    def scores(self, features: np.ndarray) -> np.ndarray:
        return _sigmoid(self.weight * np.asarray(features, dtype=np.float64) + self.intercept)


@dataclass(frozen=True)
class SplitEvaluation:
    auc_roc: float
    auc_pr: float
    roc_ci: tuple[float, float] | None
    pr_ci: tuple[float, float] | None
    model: LogitModel
    n_train: int
    n_test: int


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def synth_cohort(n: int, effect_size_d: float, seed: int = 7) -> Cohort:
    """Balanced two-class Gaussian cohort with class means d apart."""
    if n <= 0 or n % 2 != 0:
        raise BadSizeError(f"cohort size must be positive and even, got {n}")
    if effect_size_d < 0:
        raise BadSizeError(f"effect size must be non-negative, got {effect_size_d}")
    rng = np.random.default_rng(seed)
    half = n // 2
    controls = rng.normal(0.0, 1.0, half)
    cases = rng.normal(effect_size_d, 1.0, half)
    features = np.concatenate([controls, cases])
    labels = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    ids = tuple(f"s{i:05d}" for i in range(n))
    return Cohort(subject_ids=ids, features=features, labels=labels)


def _log_likelihood(w: float, b: float, x: np.ndarray, y: np.ndarray) -> float:
    z = w * x + b
    # log sigma(z) = -log(1 + exp(-z)), computed stably
    return float((y * z - np.logaddexp(0.0, z)).sum())


def fit_logistic(cohort: Cohort, tol: float = 1e-8, max_iter: int = 100) -> LogitModel:
    """Maximum-likelihood fit of sigma(w x + b) by damped Newton steps.

    Newton steps are halved until the log-likelihood does not decrease,
    so the likelihood path is non-decreasing. Perfect separation drives
    the parameters off to infinity; they are capped at magnitude 50 and
    the model is flagged separable.
    """
    x = np.asarray(cohort.features, dtype=np.float64)
    y = np.asarray(cohort.labels, dtype=np.float64)
    if not ((y == 0).any() and (y == 1).any()):
        raise SingleClassError("training data needs both labels")

    # with one feature, perfect separation is an interval check
    x0, x1 = x[y == 0], x[y == 1]
    separated = bool(x0.max() < x1.min() or x1.max() < x0.min())
    if separated:
        warnings.warn("perfectly separable training data; parameters will be capped", stacklevel=2)

    w, b = 0.0, 0.0
    ll = _log_likelihood(w, b, x, y)
    ll_path = [ll]
    converged = False
    separable = separated
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p = _sigmoid(w * x + b)
        resid = y - p
        grad = np.array([float((resid * x).sum()), float(resid.sum())])
        if np.abs(grad).max() < tol:
            converged = True
            iterations -= 1
            break
        wgt = p * (1.0 - p)
        h_ww = float((wgt * x * x).sum())
        h_wb = float((wgt * x).sum())
        h_bb = float(wgt.sum())
        hess = np.array([[h_ww, h_wb], [h_wb, h_bb]])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad  # gradient ascent fallback for a singular Hessian
        scale = 1.0
        while scale > 1e-8:
            w_new, b_new = w + scale * step[0], b + scale * step[1]
            ll_new = _log_likelihood(w_new, b_new, x, y)
            if ll_new >= ll:
                break
            scale *= 0.5
        w, b, ll = w_new, b_new, ll_new
        ll_path.append(ll)
        if abs(w) > SEPARABLE_CAP or abs(b) > SEPARABLE_CAP:
            separable = True
            w = float(np.clip(w, -SEPARABLE_CAP, SEPARABLE_CAP))
            b = float(np.clip(b, -SEPARABLE_CAP, SEPARABLE_CAP))
            break

    return LogitModel(
        weight=w,
        intercept=b,
        converged=converged,
        iterations=iterations,
        separable=separable,
        ll_path=tuple(ll_path),
    )


def stratified_split(cohort: Cohort, train_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled index split; returns (train_idx, test_idx)."""
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for label in (0, 1):
        idx = np.flatnonzero(cohort.labels == label)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(train_frac * idx.size))
        train_parts.append(idx[:n_train])
        test_parts.append(idx[n_train:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def evaluate_split(
    cohort: Cohort,
    train_frac: float = 0.6,
    seed: int = 7,
    bootstrap: int = 1000,
    percentiles: tuple[float, float] = (5.0, 95.0),
) -> SplitEvaluation:
    """Fit on a stratified train fraction, report AUCs on the held-out rest."""
    train_idx, test_idx = stratified_split(cohort, train_frac, seed)
    train = Cohort(
        subject_ids=tuple(cohort.subject_ids[i] for i in train_idx),
        features=cohort.features[train_idx],
        labels=cohort.labels[train_idx],
    )
    model = fit_logistic(train)

    x_test = cohort.features[test_idx]
    y_test = cohort.labels[test_idx]
    scores = model.scores(x_test)
    auc_roc, auc_pr = metrics.roc_pr_auc(scores, y_test)

    # the model is monotone in the raw feature, so its AUC must equal the
    # raw-feature AUC (flipped when the weight is negative)
    raw_roc, _ = metrics.roc_pr_auc(x_test, y_test)
    expected = raw_roc if model.weight > 0 else (1.0 - raw_roc if model.weight < 0 else None)
    if expected is not None and abs(auc_roc - expected) > 1e-12:
        raise AssertionError(
            f"rank invariance violated: model AUC {auc_roc} vs raw-feature AUC {expected}"
        )

    roc_ci = pr_ci = None
    if bootstrap > 0:
        rows = np.column_stack([scores, y_test])

        def roc_stat(sample):
            return metrics.roc_pr_auc(sample[:, 0], sample[:, 1].astype(np.int64))[0]

        def pr_stat(sample):
            return metrics.roc_pr_auc(sample[:, 0], sample[:, 1].astype(np.int64))[1]

        roc_ci = metrics.bootstrap_ci(roc_stat, rows, resamples=bootstrap, percentiles=percentiles, seed=seed)
        pr_ci = metrics.bootstrap_ci(pr_stat, rows, resamples=bootstrap, percentiles=percentiles, seed=seed)

    return SplitEvaluation(
        auc_roc=auc_roc,
        auc_pr=auc_pr,
        roc_ci=roc_ci,
        pr_ci=pr_ci,
        model=model,
        n_train=train_idx.size,
        n_test=test_idx.size,
    )
