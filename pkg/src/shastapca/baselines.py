"""Streaming subspace baselines: PETRELS and GROUSE.

Both assume homoscedastic noise and handle missing entries by restricting to
the observed coordinates.  They share the streaming-estimator surface used by
the experiment harness: `ingest(sample)` and `current_subspace()`.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .model import ObservedSample


@runtime_checkable
class StreamingEstimator(Protocol):
    def ingest(self, sample: ObservedSample) -> None: ...

    def current_subspace(self) -> np.ndarray: ...


class Petrels:
    """Recursive least-squares factor tracking with a forgetting factor.

    Each row j keeps its own k x k system r[j], seeded at delta * I, that
    discounts by `forgetting` per tick and rank-one updates with the current
    coefficient estimate.  The row update

        f_j <- f_j + r_j^{-1} zhat (y_j - zhat' f_j)

    is the solved form of the discounted least-squares system anchored at the
    initial factors, so no separate right-hand side is stored.
    """

    def __init__(self, f0: np.ndarray, forgetting: float = 1.0,
                 delta: float = 0.1):
        if not 0.0 < forgetting <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")
        if delta <= 0.0:
            raise ValueError("delta must be positive")
        f0 = np.asarray(f0, dtype=np.float64)
        d, k = f0.shape
        self.f = f0.copy()
        self.r = np.broadcast_to(delta * np.eye(k), (d, k, k)).copy()
        self.forgetting = float(forgetting)

    def ingest(self, sample: ObservedSample) -> None:
        self.r *= self.forgetting
        omega = sample.omega
        if omega.size == 0:
            return
        fo = self.f[omega]
        zhat, *_ = np.linalg.lstsq(fo, sample.values, rcond=None)
        self.r[omega] += np.outer(zhat, zhat)
        resid = sample.values - fo @ zhat
        rhs = resid[:, None] * zhat[None, :]
        try:
            delta_f = np.linalg.solve(self.r[omega], rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            delta_f = np.stack([np.linalg.lstsq(rj, bj, rcond=None)[0]
                                for rj, bj in zip(self.r[omega], rhs)])
        self.f[omega] += delta_f

    def current_subspace(self) -> np.ndarray:
        u, _, _ = np.linalg.svd(self.f, full_matrices=False)
        return u


class Grouse:
    """Rank-one geodesic subspace updates on partially observed vectors.

    Projects the observed entries onto the current basis, then rotates the
    basis along the geodesic mixing the (normalized) projection direction
    with the residual direction, by an angle step * ||residual|| ||projection||.
    """

    # Re-orthonormalize once accumulated rounding exceeds this Frobenius drift.
    REORTH_DRIFT = 1e-8

    def __init__(self, u0: np.ndarray, step: float):
        if step < 0.0:
            raise ValueError("step size must be nonnegative")
        u0 = np.asarray(u0, dtype=np.float64)
        k = u0.shape[1]
        if np.linalg.norm(u0.T @ u0 - np.eye(k)) > 1e-8:
            raise ValueError("initial basis must have orthonormal columns")
        self.u = u0.copy()
        self.step = float(step)

    def ingest(self, sample: ObservedSample) -> None:
        omega = sample.omega
        if omega.size == 0 or self.step == 0.0:
            return
        uo = self.u[omega]
        w, *_ = np.linalg.lstsq(uo, sample.values, rcond=None)
        p = self.u @ w
        resid = sample.values - uo @ w
        rnorm = np.linalg.norm(resid)
        pnorm = np.linalg.norm(p)
        wnorm = np.linalg.norm(w)
        if rnorm < 1e-14 * max(1.0, pnorm) or pnorm == 0.0 or wnorm == 0.0:
            return
        angle = self.step * rnorm * pnorm
        r_full = np.zeros(self.u.shape[0])
        r_full[omega] = resid
        direction = (np.cos(angle) - 1.0) * p / pnorm + np.sin(angle) * r_full / rnorm
        self.u += np.outer(direction, w / wnorm)
        k = self.u.shape[1]
        if np.linalg.norm(self.u.T @ self.u - np.eye(k)) > self.REORTH_DRIFT:
            q, rr = np.linalg.qr(self.u)
            self.u = q * np.sign(np.diag(rr))

    def current_subspace(self) -> np.ndarray:
        return self.u
