"""Common spatial patterns + linear discriminant analysis baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateTrial, SingularCovariance, SingularScatter, TooFewSamplesPerClass

RANK_TOL = 1e-10  # composite eigenvalues below this fraction of the largest count as null space


def trial_covariance(trial: np.ndarray) -> np.ndarray:
    """Trace-normalized spatial covariance of one (C, S) trial."""
    x = trial - trial.mean(axis=1, keepdims=True)
    cov = x @ x.T
    tr = np.trace(cov)
    if tr <= 0:
        raise DegenerateTrial("trial has zero variance on every channel")
    return cov / tr


def class_covariances(trials, labels, n_classes: int) -> np.ndarray:
    covs = np.zeros((n_classes, trials.shape[1], trials.shape[1]))
    for c in range(n_classes):
        members = trials[labels == c]
        if len(members) < 2:
            raise TooFewSamplesPerClass(f"class {c} has {len(members)} trials, CSP needs >= 2")
        covs[c] = np.mean([trial_covariance(t) for t in members], axis=0)
    return covs


@dataclass
class CSPFilters:
    """Stacked spatial filters, one row per filter, plus the eigenvalue of each."""

    W: np.ndarray
    eigenvalues: np.ndarray
    m: int


def _gen_eig(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve a w = lam b w with w^T b w = 1 on the range of b, eigenvalues ascending.

    Common-average referencing leaves b rank-deficient; directions in its null
    space carry no signal and are dropped by whitening on the retained eigenvectors.
    """
    d, u = np.linalg.eigh(b)
    keep = d > RANK_TOL * d.max()
    if d.max() <= 0 or keep.sum() == 0:
        raise SingularCovariance("composite covariance has no positive eigenvalue")
    p = u[:, keep] / np.sqrt(d[keep])
    lam, v = np.linalg.eigh(p.T @ a @ p)
    return lam, p @ v


def csp_fit(trials, labels, m: int = 2, n_classes: int | None = None) -> CSPFilters:
    """One-vs-rest CSP: for each class solve (S_c, S_c + S_rest) and keep m filters per spectral end.

    With two classes the single pairwise problem is solved once.
    """
    trials = np.asarray(trials, dtype=np.float64)
    labels = np.asarray(labels)
    n_classes = n_classes or int(labels.max()) + 1
    covs = class_covariances(trials, labels, n_classes)
    if 2 * m > trials.shape[1]:
        raise ValueError(f"m={m} needs at least {2 * m} channels")
    pairs = [0] if n_classes == 2 else range(n_classes)
    rows, vals = [], []
    for c in pairs:
        rest = covs[1 - c] if n_classes == 2 else np.mean(np.delete(covs, c, axis=0), axis=0)
        lam, vec = _gen_eig(covs[c], covs[c] + rest)
        if 2 * m > len(lam):
            raise SingularCovariance(f"composite covariance has rank {len(lam)}, m={m} needs {2 * m}")
        keep = np.r_[np.arange(len(lam) - m, len(lam))[::-1], np.arange(m)]
        rows.append(vec[:, keep].T)
        vals.append(lam[keep])
    return CSPFilters(np.vstack(rows), np.concatenate(vals), m)


def csp_features(trial: np.ndarray, filters: CSPFilters) -> np.ndarray:
    """log(var_i / sum var) of each spatially filtered signal. Accepts (C, S) or (N, C, S)."""
    trial = np.asarray(trial, dtype=np.float64)
    z = np.einsum("fc,...cs->...fs", filters.W, trial)
    var = z.var(axis=-1)
    total = var.sum(axis=-1, keepdims=True)
    if np.any(total <= 0) or np.any(var <= 0):
        raise DegenerateTrial("projected signal has zero variance")
    return np.log(var / total)


@dataclass
class LDAModel:
    coef: np.ndarray  # (K, D)
    intercept: np.ndarray  # (K,)

    def scores(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(x) @ self.coef.T + self.intercept


def lda_fit(features, labels, ridge: float = 1e-3, n_classes: int | None = None) -> LDAModel:
    """Gaussian LDA with pooled within-class covariance plus ridge * (trace / dim) * I."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels)
    n_classes = n_classes or int(labels.max()) + 1
    dim = x.shape[1]
    means = np.zeros((n_classes, dim))
    scatter = np.zeros((dim, dim))
    priors = np.zeros(n_classes)
    for c in range(n_classes):
        xc = x[labels == c]
        if len(xc) < 2:
            raise TooFewSamplesPerClass(f"class {c} has {len(xc)} samples, LDA needs >= 2")
        means[c] = xc.mean(axis=0)
        d = xc - means[c]
        scatter += d.T @ d
        priors[c] = len(xc) / len(x)
    cov = scatter / (len(x) - n_classes)
    cov += ridge * np.trace(cov) / dim * np.eye(dim)
    try:
        prec_means = scipy.linalg.solve(cov, means.T, assume_a="pos").T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SingularScatter(str(e)) from e
    intercept = -0.5 * np.einsum("kd,kd->k", means, prec_means) + np.log(priors)
    return LDAModel(prec_means, intercept)


def lda_predict(model: LDAModel, features) -> np.ndarray:
    """Highest discriminant score wins; ties go to the lowest class id."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if model.coef.shape[1] == 1 else x[None, :]
    return model.scores(x).argmax(axis=1)


@dataclass
class CSPLDA:
    """CSP features into LDA, fitted on bandpassed (N, C, S) trials."""

    m: int = 2
    ridge: float = 1e-3
    n_classes: int | None = None
    filters: CSPFilters | None = None
    lda: LDAModel | None = None

    def fit(self, trials, labels) -> "CSPLDA":
        self.filters = csp_fit(trials, labels, self.m, self.n_classes)
        self.lda = lda_fit(csp_features(trials, self.filters), labels, self.ridge, self.n_classes)
        return self

    def predict(self, trials) -> np.ndarray:
        return lda_predict(self.lda, csp_features(trials, self.filters))
