"""Batch alternating minorize-maximize solver for the heteroscedastic model.

Each iteration updates the noise variances with the factors held fixed, then
updates the factors row by row with the variances held fixed.  Both updates
maximize the EM surrogate in closed form, so the observed-data log-likelihood
is non-decreasing across iterations.  Also provides the closed-form
homoscedastic PPCA solution used as a batch baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DatasetEvaluator, check_factors, floor_variances

# Relative ridge added to each row system before solving; rows observed by
# very few samples can otherwise be numerically singular.
ROW_RIDGE = 1e-10


@dataclass
class BatchProblem:
    """A fully materialized partially observed dataset."""

    samples: list
    num_groups: int
    d: int
    k: int
    _dense: "_DenseView" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.samples:
            raise ValueError("batch problem needs at least one sample")
        if self.k < 1 or self.k > self.d:
            raise ValueError("rank must satisfy 1 <= k <= d")
        for i, s in enumerate(self.samples):
            if not 0 <= s.group < self.num_groups:
                raise ValueError(f"sample {i} has group {s.group} outside "
                                 f"[0, {self.num_groups})")
            if s.omega.size and s.omega[-1] >= self.d:
                raise ValueError(f"sample {i} observes coordinate beyond d={self.d}")

    @property
    def dense(self) -> "_DenseView":
        if self._dense is None:
            self._dense = _DenseView(self.samples, self.d)
        return self._dense


class _DenseView(DatasetEvaluator):
    """Mask/value arrays plus batched posterior statistics."""

    def posterior(self, f, v):
        """zbar (n, k), m (n, k, k) at parameters (f, v), all samples at once."""
        k = f.shape[1]
        vg = floor_variances(v)[self.groups]
        a = self.gram(f) + vg[:, None, None] * np.eye(k)
        try:
            m = np.linalg.inv(a)
        except np.linalg.LinAlgError:
            m = np.linalg.pinv(a)
        m = 0.5 * (m + np.transpose(m, (0, 2, 1)))
        zbar = np.einsum("nkl,nl->nk", m, (self.w * self.y) @ f)
        return zbar, m


@dataclass(frozen=True)
class BatchIterate:
    """One emitted iterate with its dataset log-likelihood."""

    f: np.ndarray
    v: np.ndarray
    iteration: int
    loglik: float


def batch_v_step(f: np.ndarray, v_prev: np.ndarray, problem: BatchProblem) -> np.ndarray:
    """Exact maximizer of the surrogate in the variances, factors fixed.

    For each group: v = rho / theta with theta the total observed-entry count
    and rho the posterior-expected residual power.  Groups with no observed
    entries keep their previous value.
    """
    f = check_factors(f)
    v_prev = floor_variances(v_prev)
    dense = problem.dense
    zbar, m = dense.posterior(f, v_prev)
    vg = v_prev[dense.groups]

    resid = dense.w * (dense.y - zbar @ f.T)
    rss = np.einsum("nd,nd->n", resid, resid)
    gram = dense.gram(f)
    tr = np.einsum("nkl,nkl->n", gram, m)
    rho_i = rss + vg * tr

    theta = np.zeros(problem.num_groups)
    rho = np.zeros(problem.num_groups)
    np.add.at(theta, dense.groups, dense.nobs)
    np.add.at(rho, dense.groups, rho_i)

    v_new = v_prev.copy()
    seen = theta > 0
    v_new[seen] = rho[seen] / theta[seen]
    return floor_variances(v_new)


def batch_f_step(f_prev: np.ndarray, v: np.ndarray, problem: BatchProblem) -> np.ndarray:
    """Row-separable maximizer of the surrogate in the factors, variances fixed.

    Row j solves R_j f_j = s_j where R_j and s_j accumulate the posterior
    second moments of every sample observing coordinate j, inversely weighted
    by that sample's group variance.  Rows observed by no sample carry
    forward, and each solve is ridge-stabilized relative to trace(R_j).
    """
    f_prev = check_factors(f_prev)
    v = floor_variances(v)
    dense = problem.dense
    k = problem.k
    zbar, m = dense.posterior(f_prev, v)
    vg = v[dense.groups]

    contrib = zbar[:, :, None] * zbar[:, None, :] / vg[:, None, None] + m
    r = (dense.w.T @ contrib.reshape(-1, k * k)).reshape(problem.d, k, k)
    s = (dense.w * dense.y / vg[:, None]).T @ zbar

    observed_rows = dense.w.sum(axis=0) > 0
    f_new = f_prev.copy()
    if np.any(observed_rows):
        r_obs = r[observed_rows]
        eps = ROW_RIDGE * np.trace(r_obs, axis1=1, axis2=2) / k
        r_obs = r_obs + eps[:, None, None] * np.eye(k)
        f_new[observed_rows] = _solve_rows(r_obs, s[observed_rows])
    return f_new


def _solve_rows(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Batched SPD solves of r[j] x = s[j]; falls back to least squares."""
    try:
        return np.linalg.solve(r, s[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.stack([np.linalg.lstsq(rj, sj, rcond=None)[0]
                         for rj, sj in zip(r, s)])


def batch_solve(problem: BatchProblem, init_f: np.ndarray, init_v: np.ndarray,
                iters: int, tol: float | None = None) -> list[BatchIterate]:
    """Alternate variance and factor updates, emitting per-iteration iterates.

    Runs exactly `iters` iterations unless `tol` is given, in which case it
    stops early once the relative log-likelihood change drops below `tol`.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    f = check_factors(init_f).copy()
    v = floor_variances(init_v).copy()
    evaluator = problem.dense
    iterates = []
    prev = None
    for it in range(1, iters + 1):
        v = batch_v_step(f, v, problem)
        f = batch_f_step(f, v, problem)
        loglik = evaluator(f, v)
        iterates.append(BatchIterate(f=f.copy(), v=v.copy(), iteration=it,
                                     loglik=loglik))
        if tol is not None and prev is not None:
            if abs(loglik - prev) <= tol * max(1.0, abs(prev)):
                break
        prev = loglik
    return iterates


def random_init(rng, d: int, k: int, num_groups: int):
    """Default initialization: factor entries N(0, 1/d), variances U(0, 1)."""
    f0 = rng.standard_normal((d, k)) / np.sqrt(d)
    v0 = rng.uniform(0.0, 1.0, size=num_groups)
    return f0, floor_variances(v0)


def ppca_closed_form(data: np.ndarray, k: int):
    """Closed-form maximum-likelihood PPCA fit for complete zero-mean data.

    data: n x d matrix, one sample per row, every entry observed.
    Returns (factors, noise_variance) with factors = U_k (diag(lam_k) -
    sigma^2 I)^(1/2) from the eigendecomposition of the second-moment matrix
    and sigma^2 the mean of the d-k trailing eigenvalues.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("data must be an n x d matrix")
    n, d = data.shape
    if k >= d:
        raise ValueError("rank must be < ambient dimension")
    if n <= k:
        raise ValueError("need more samples than the rank")
    second_moment = data.T @ data / n
    eigvals, eigvecs = np.linalg.eigh(second_moment)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    sigma_sq = float(np.mean(eigvals[k:]))
    gaps = np.maximum(eigvals[:k] - sigma_sq, 0.0)
    factors = eigvecs[:, :k] * np.sqrt(gaps)
    return factors, sigma_sq
