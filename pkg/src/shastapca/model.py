"""Low-rank factor model with per-group noise variances and missing entries.

Data vectors follow y = F z + eps with z ~ N(0, I_k) and eps ~ N(0, v_g I_d),
where F is a d-by-k factor matrix, v holds one noise variance per group, and
each sample observes only a subset of coordinates.  This module provides the
observed-entry log-likelihood, the posterior statistics of the latent
coefficients, and the EM-style surrogate value used by the solvers.

Conventions: coordinate indices and group labels are 0-based, likelihood
values drop all additive constants (only differences are meaningful), and a
sample observing no coordinates is legal and carries no information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

# Variances are floored here whenever consumed; the model itself never lets
# a variance reach zero but finite-precision iterates can.
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class ObservedSample:
    """One partially observed data vector.

    omega: strictly increasing observed coordinate indices (0-based).
    values: observed entries, aligned with omega.
    group: 0-based noise-group label.
    """

    omega: np.ndarray
    values: np.ndarray
    group: int

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.intp)
        values = np.asarray(self.values, dtype=np.float64)
        if omega.ndim != 1 or values.ndim != 1 or omega.shape != values.shape:
            raise ValueError("omega and values must be 1-d arrays of equal length")
        if omega.size and (np.any(np.diff(omega) <= 0) or omega[0] < 0):
            raise ValueError("omega must be strictly increasing and nonnegative")
        if not np.all(np.isfinite(values)):
            raise ValueError("observed values must be finite")
        if self.group < 0:
            raise ValueError("group label must be nonnegative")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)

    @property
    def nobs(self) -> int:
        return self.omega.size

    @staticmethod
    def full(values, group: int) -> "ObservedSample":
        """Sample with every coordinate observed."""
        values = np.asarray(values, dtype=np.float64)
        return ObservedSample(np.arange(values.size), values, group)


@dataclass(frozen=True)
class PosteriorStats:
    """Posterior moments of the latent coefficients given one sample.

    m: k-by-k symmetric positive definite matrix; the posterior covariance
       of z given the sample is v_g * m.
    zbar: posterior mean of z.
    """

    m: np.ndarray
    zbar: np.ndarray


def floor_variances(v: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(v, dtype=np.float64), VARIANCE_FLOOR)


def check_factors(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
        raise ValueError("factor matrix must be d x k with d, k >= 1")
    if not np.all(np.isfinite(f)):
        raise ValueError("factor matrix must be finite")
    return f


def _spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for SPD a, falling back to a pivoted LU solve."""
    try:
        c, low = linalg.cho_factor(a, lower=True, check_finite=False)
        return linalg.cho_solve((c, low), b, check_finite=False)
    except linalg.LinAlgError:
        return linalg.lu_solve(linalg.lu_factor(a, check_finite=False), b,
                               check_finite=False)


def _spd_inverse(a: np.ndarray) -> np.ndarray:
    inv = _spd_solve(a, np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def posterior_stats(f: np.ndarray, v: np.ndarray, sample: ObservedSample) -> PosteriorStats:
    """E-step statistics for one sample at the parameters (f, v).

    Returns m = (F_o' F_o + v_g I)^{-1} and zbar = m F_o' y_o, where F_o and
    y_o restrict to the sample's observed coordinates.
    """
    f = check_factors(f)
    k = f.shape[1]
    vg = float(floor_variances(v)[sample.group])
    fo = f[sample.omega]
    a = fo.T @ fo + vg * np.eye(k)
    m = _spd_inverse(a)
    zbar = m @ (fo.T @ sample.values)
    return PosteriorStats(m=m, zbar=zbar)


def sample_log_likelihood(f: np.ndarray, v: np.ndarray, sample: ObservedSample) -> float:
    """Observed-entry log-likelihood term for one sample, constants dropped.

    Equals ln det(F_o F_o' + v_g I)^{-1} - y_o' (F_o F_o' + v_g I)^{-1} y_o,
    evaluated through the k x k system so the cost is O(|omega| k^2 + k^3).
    """
    f = check_factors(f)
    n = sample.nobs
    if n == 0:
        return 0.0
    k = f.shape[1]
    vg = float(floor_variances(v)[sample.group])
    fo = f[sample.omega]
    y = sample.values
    a = fo.T @ fo + vg * np.eye(k)
    # det(F_o F_o' + v I_n) = v^(n-k) det(F_o' F_o + v I_k) for any n, k.
    sign, logdet_a = np.linalg.slogdet(a)
    logdet_sigma = (n - k) * np.log(vg) + logdet_a
    b = fo.T @ y
    quad = (y @ y - b @ _spd_solve(a, b)) / vg
    return float(-logdet_sigma - quad)


def dataset_log_likelihood(f: np.ndarray, v: np.ndarray, samples) -> float:
    """Joint observed-data log-likelihood: half the sum of per-sample terms."""
    f = check_factors(f)
    samples = list(samples)
    if not samples:
        return 0.0
    return DatasetEvaluator(samples, f.shape[0])(f, v)


def minorizer_value(f: np.ndarray, v: np.ndarray, anchor_f: np.ndarray,
                    anchor_v: np.ndarray, sample: ObservedSample) -> float:
    """EM surrogate for one sample, anchored at (anchor_f, anchor_v).

    Twice this value minorizes sample_log_likelihood up to an additive
    constant fixed by matching at the anchor.  The solvers use closed-form
    maximizers; this direct evaluation exists for property testing.
    """
    f = check_factors(f)
    n = sample.nobs
    if n == 0:
        return 0.0
    vg = float(floor_variances(v)[sample.group])
    anchor_vg = float(floor_variances(anchor_v)[sample.group])
    stats = posterior_stats(anchor_f, anchor_v, sample)
    fo = f[sample.omega]
    y = sample.values
    fz = fo @ stats.zbar
    quad_tr = float(np.sum((fo @ stats.m) * fo))
    return float(
        -0.5 * n * np.log(vg)
        - 0.5 * (y @ y) / vg
        + (y @ fz) / vg
        - 0.5 * (fz @ fz + anchor_vg * quad_tr) / vg
    )


class DatasetEvaluator:
    """Log-likelihood of a fixed dataset, vectorized across samples.

    Precomputes dense mask/value arrays once so repeated evaluations at new
    parameters (solver traces, finite differences) cost a handful of batched
    k x k operations instead of a Python loop.
    """

    def __init__(self, samples, d: int):
        samples = list(samples)
        n = len(samples)
        self.d = int(d)
        self.y = np.zeros((n, d))
        self.w = np.zeros((n, d))
        self.groups = np.empty(n, dtype=np.intp)
        for i, s in enumerate(samples):
            if s.omega.size and s.omega[-1] >= d:
                raise ValueError(f"sample {i} observes coordinate {s.omega[-1]} >= d={d}")
            self.y[i, s.omega] = s.values
            self.w[i, s.omega] = 1.0
            self.groups[i] = s.group
        self.nobs = self.w.sum(axis=1)
        self.ysq = np.einsum("nd,nd->n", self.y, self.y)

    def gram(self, f: np.ndarray) -> np.ndarray:
        """Per-sample restricted Gram matrices F_o' F_o, shape (n, k, k)."""
        k = f.shape[1]
        pairs = (f[:, :, None] * f[:, None, :]).reshape(self.d, k * k)
        return (self.w @ pairs).reshape(-1, k, k)

    def __call__(self, f: np.ndarray, v: np.ndarray) -> float:
        f = check_factors(f)
        k = f.shape[1]
        vg = floor_variances(v)[self.groups]
        a = self.gram(f) + vg[:, None, None] * np.eye(k)
        b = (self.w * self.y) @ f
        try:
            chol = np.linalg.cholesky(a)
            logdet_a = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
            solved = np.linalg.solve(a, b[..., None])[..., 0]
        except np.linalg.LinAlgError:
            sign, logdet_a = np.linalg.slogdet(a)
            solved = np.stack([linalg.lu_solve(linalg.lu_factor(ai), bi)
                               for ai, bi in zip(a, b)])
        logdet_sigma = (self.nobs - k) * np.log(vg) + logdet_a
        quad = (self.ysq - np.einsum("nk,nk->n", b, solved)) / vg
        return float(0.5 * np.sum(-logdet_sigma - quad))
