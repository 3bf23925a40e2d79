"""Shared test utilities: random instances and independent dense oracles.

The oracles here deliberately form the |omega| x |omega| covariance (or the
joint Gaussian over latent coefficients and observations) densely, taking the
slow-but-obvious route that the library avoids.
"""

import numpy as np

from shastapca.model import ObservedSample


def random_instance(rng, d, k, num_groups, observe_prob=1.0, n=1,
                    factor_scale=1.0, v_range=(0.05, 2.0)):
    """Random factors, variances, and samples from an arbitrary (non-planted)
    generating process; suitable for algebraic identity checks."""
    f = factor_scale * rng.standard_normal((d, k))
    v = rng.uniform(*v_range, size=num_groups)
    samples = [random_sample(rng, d, num_groups, observe_prob) for _ in range(n)]
    return f, v, samples


def random_sample(rng, d, num_groups, observe_prob=1.0, scale=1.0):
    keep = rng.random(d) < observe_prob
    omega = np.flatnonzero(keep)
    values = scale * rng.standard_normal(omega.size)
    group = int(rng.integers(num_groups))
    return ObservedSample(omega, values, group)


def dense_sample_loglik(f, v, sample):
    """ln det(Sigma^-1) - y' Sigma^-1 y with Sigma formed explicitly."""
    if sample.nobs == 0:
        return 0.0
    fo = f[sample.omega]
    sigma = fo @ fo.T + v[sample.group] * np.eye(sample.nobs)
    sign, logdet = np.linalg.slogdet(sigma)
    y = sample.values
    return float(-logdet - y @ np.linalg.solve(sigma, y))


def conditioned_posterior(f, v, sample):
    """Mean and covariance of z | y_omega via dense joint-Gaussian conditioning.

    The joint over (z, y_omega) has covariance [[I, Fo'], [Fo, Fo Fo' + v I]].
    """
    k = f.shape[1]
    fo = f[sample.omega]
    sigma = fo @ fo.T + v[sample.group] * np.eye(sample.nobs)
    gain = np.linalg.solve(sigma, fo).T          # (k, |omega|) = Fo' Sigma^-1
    mean = gain @ sample.values
    cov = np.eye(k) - gain @ fo
    return mean, cov


def orthonormal(rng, d, k):
    q, r = np.linalg.qr(rng.standard_normal((d, k)))
    return q * np.sign(np.diag(r))
