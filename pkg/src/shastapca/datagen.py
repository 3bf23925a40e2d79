"""Seeded synthetic data for the planted low-rank heteroscedastic model.

A planted model fixes an orthonormal basis, a descending spectrum of squared
singular values, and per-group noise variances; samples are y = U sqrt(lam) z
+ eps.  Scenario scripts chain epochs that can redraw the basis, rescale one
group's variance, and change the observation probability, emitting each
sample together with the ground truth active at that instant.

All randomness flows from one integer seed through a splittable counter-based
generator (Philox), so identical seeds give identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import ObservedSample


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class PlantedModel:
    u: np.ndarray             # (d, k) orthonormal basis
    spectrum: np.ndarray      # (k,) squared singular values, descending
    v_star: np.ndarray        # (L,) true noise variances
    group_probs: np.ndarray | None = None   # sampling law for group labels
    group_counts: np.ndarray | None = None  # exact per-group counts

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        spectrum = np.asarray(self.spectrum, dtype=np.float64)
        v_star = np.asarray(self.v_star, dtype=np.float64)
        if np.linalg.norm(u.T @ u - np.eye(u.shape[1])) > 1e-10:
            raise ValueError("basis columns must be orthonormal")
        if np.any(np.diff(spectrum) > 0) or np.any(spectrum <= 0):
            raise ValueError("spectrum must be positive and descending")
        if np.any(v_star <= 0):
            raise ValueError("true variances must be positive")
        if (self.group_probs is None) == (self.group_counts is None):
            raise ValueError("specify exactly one of group_probs / group_counts")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "spectrum", spectrum)
        object.__setattr__(self, "v_star", v_star)
        if self.group_probs is not None:
            p = np.asarray(self.group_probs, dtype=np.float64)
            if p.size != v_star.size or abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
                raise ValueError("group_probs must be a distribution over groups")
            object.__setattr__(self, "group_probs", p)
        if self.group_counts is not None:
            c = np.asarray(self.group_counts, dtype=np.int64)
            if c.size != v_star.size or np.any(c < 0):
                raise ValueError("group_counts must be nonnegative, one per group")
            object.__setattr__(self, "group_counts", c)

    @property
    def d(self) -> int:
        return self.u.shape[0]

    @property
    def k(self) -> int:
        return self.u.shape[1]

    @property
    def num_groups(self) -> int:
        return self.v_star.size

    @property
    def factors(self) -> np.ndarray:
        return self.u * np.sqrt(self.spectrum)


def draw_orthonormal(rng, d: int, k: int) -> np.ndarray:
    """Uniform-at-random basis: QR of a Gaussian matrix, signs canonicalized
    so the triangular factor has a positive diagonal."""
    q, r = np.linalg.qr(make_rng(rng).standard_normal((d, k)))
    return q * np.sign(np.diag(r))


def draw_model(seed, d: int, k: int, spectrum, v_star,
               group_probs=None, group_counts=None) -> PlantedModel:
    if k > d:
        raise ValueError("rank cannot exceed the ambient dimension")
    u = draw_orthonormal(make_rng(seed), d, k)
    return PlantedModel(u=u, spectrum=spectrum, v_star=v_star,
                        group_probs=group_probs, group_counts=group_counts)


def draw_group(model: PlantedModel, rng) -> int:
    if model.group_probs is None:
        raise ValueError("model has fixed counts; use a scripted label order")
    return int(rng.choice(model.num_groups, p=model.group_probs))


def draw_sample(model: PlantedModel, rng, group: int | None = None) -> ObservedSample:
    """Fully observed draw y = F z + eps with the model's group law."""
    rng = make_rng(rng)
    if group is None:
        group = draw_group(model, rng)
    z = rng.standard_normal(model.k)
    eps = np.sqrt(model.v_star[group]) * rng.standard_normal(model.d)
    return ObservedSample.full(model.factors @ z + eps, group)


def mask_uniform(sample: ObservedSample, p: float, rng) -> ObservedSample:
    """Keep each observed coordinate independently with probability p."""
    if not 0.0 < p <= 1.0:
        raise ValueError("observation probability must lie in (0, 1]")
    if p == 1.0:
        return sample
    keep = make_rng(rng).random(sample.nobs) < p
    return ObservedSample(sample.omega[keep], sample.values[keep], sample.group)


@dataclass(frozen=True)
class Epoch:
    """One scripted phase of a stream."""

    samples: int
    observe_prob: float | None = None     # None inherits the script default
    redraw_subspace: bool = False
    scale_variance: tuple[int, float] | None = None  # (group, factor)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("epoch needs at least one sample")
        if self.observe_prob is not None and not 0.0 < self.observe_prob <= 1.0:
            raise ValueError("observation probability must lie in (0, 1]")


@dataclass(frozen=True)
class ScenarioScript:
    """Base planted model parameters plus an ordered list of epochs."""

    d: int
    k: int
    spectrum: tuple
    v_star: tuple
    epochs: tuple
    observe_prob: float = 1.0
    group_probs: tuple | None = None
    group_counts: tuple | None = None

    def __post_init__(self):
        if not self.epochs:
            raise ValueError("script needs at least one epoch")
        if not 0.0 < self.observe_prob <= 1.0:
            raise ValueError("observation probability must lie in (0, 1]")
        object.__setattr__(self, "epochs", tuple(self.epochs))
        if self.group_counts is not None:
            total = sum(e.samples for e in self.epochs)
            if int(np.sum(self.group_counts)) != total:
                raise ValueError("group_counts must sum to the scripted length")

    @property
    def total_samples(self) -> int:
        return sum(e.samples for e in self.epochs)


def static_script(d, k, spectrum, v_star, group_counts, observe_prob=1.0):
    """Single-epoch script with exact group counts in shuffled order."""
    return ScenarioScript(
        d=d, k=k, spectrum=tuple(spectrum), v_star=tuple(v_star),
        epochs=(Epoch(samples=int(np.sum(group_counts))),),
        observe_prob=observe_prob, group_counts=tuple(group_counts),
    )


def run_script(script: ScenarioScript, seed):
    """Yield (sample, ground_truth) pairs for the scripted stream.

    The ground truth is the planted model active when the sample was drawn;
    epoch mutations apply before their first sample.  Subspace redraws keep
    the spectrum fixed.
    """
    rng = make_rng(seed)
    model = PlantedModel(
        u=draw_orthonormal(rng, script.d, script.k),
        spectrum=np.asarray(script.spectrum),
        v_star=np.asarray(script.v_star),
        group_probs=script.group_probs,
        group_counts=script.group_counts,
    )
    labels = None
    if script.group_counts is not None:
        labels = np.repeat(np.arange(len(script.group_counts)),
                           script.group_counts)
        rng.shuffle(labels)
    position = 0
    for epoch in script.epochs:
        if epoch.redraw_subspace:
            model = replace(model, u=draw_orthonormal(rng, script.d, script.k))
        if epoch.scale_variance is not None:
            group, factor = epoch.scale_variance
            v_new = model.v_star.copy()
            v_new[group] *= factor
            model = replace(model, v_star=v_new)
        p = epoch.observe_prob if epoch.observe_prob is not None else script.observe_prob
        for _ in range(epoch.samples):
            group = int(labels[position]) if labels is not None else None
            sample = draw_sample(model, rng, group=group)
            yield mask_uniform(sample, p, rng), model
            position += 1
