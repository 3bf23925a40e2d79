"""Streaming estimator of factors and per-group noise variances.

One sample arrives per tick.  The engine maintains exponentially weighted
surrogate statistics (per-row quadratic systems for the factors, per-group
scalar accumulators for the variances) and alternates two stochastic
minorize-maximize updates: variances first with the factors frozen, then the
factors at the just-updated variances.  State size is O(d (k^2 + k) + L)
regardless of how many samples have streamed.

Row j's surrogate maximizer solves rbar_j fhat_j = sbar_j.  Because both
sides of each unobserved row's system decay by the same factor, their
solutions are unchanged; only rows observed by the current sample are
re-solved, and the last solution per row is cached in the state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model import (
    ObservedSample,
    check_factors,
    floor_variances,
    posterior_stats,
)

GROUPED = "grouped"
MEMORYLESS_SINGLE = "memoryless-single"

CHECKPOINT_MAGIC = b"SHASTAPCA-STATE1"


@dataclass(frozen=True)
class WeightSchedule:
    """Per-tick surrogate weight w_t in (0, 1].

    kinds: "inv_t" (w_t = 1/t), "const" (w_t = w), "inv_sqrt" (w_t = a/sqrt(t),
    clipped into (0, 1]).  Ticks are 1-based.
    """

    kind: str
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("inv_t", "const", "inv_sqrt"):
            raise ValueError(f"unknown weight schedule kind: {self.kind!r}")
        if self.kind == "const" and not 0.0 < self.value <= 1.0:
            raise ValueError("constant weight must lie in (0, 1]")
        if self.kind == "inv_sqrt" and self.value <= 0.0:
            raise ValueError("inv_sqrt scale must be positive")

    def __call__(self, t: int) -> float:
        if t < 1:
            raise ValueError("tick index is 1-based")
        if self.kind == "inv_t":
            return 1.0 / t
        if self.kind == "const":
            return self.value
        return min(1.0, self.value / np.sqrt(t))

    @staticmethod
    def parse(spec) -> "WeightSchedule":
        """Accepts a number (constant), "1/t", or "a/sqrt(t)" strings."""
        if isinstance(spec, WeightSchedule):
            return spec
        if isinstance(spec, (int, float)):
            return WeightSchedule("const", float(spec))
        text = str(spec).replace(" ", "")
        if text == "1/t":
            return WeightSchedule("inv_t")
        if text.endswith("/sqrt(t)"):
            return WeightSchedule("inv_sqrt", float(text[: -len("/sqrt(t)")]))
        return WeightSchedule("const", float(text))


@dataclass(frozen=True)
class ShastaConfig:
    rank: int
    num_groups: int
    weights: WeightSchedule = field(default_factory=lambda: WeightSchedule("inv_t"))
    c_f: float = 0.1
    c_v: float = 0.1
    delta: float = 0.1
    variance_mode: str = GROUPED

    def __post_init__(self):
        object.__setattr__(self, "weights", WeightSchedule.parse(self.weights))
        if self.rank < 1 or self.num_groups < 1:
            raise ValueError("rank and num_groups must be >= 1")
        if not 0.0 < self.c_f <= 1.0 or not 0.0 < self.c_v <= 1.0:
            raise ValueError("averaging factors must lie in (0, 1]")
        if self.delta <= 0.0:
            raise ValueError("surrogate init scale delta must be positive")
        if self.variance_mode not in (GROUPED, MEMORYLESS_SINGLE):
            raise ValueError(f"unknown variance mode: {self.variance_mode!r}")
        if self.variance_mode == MEMORYLESS_SINGLE and self.num_groups != 1:
            raise ValueError("memoryless-single variance mode requires one group")


@dataclass
class ShastaState:
    """Mutable streaming state; single-writer, bounded size for fixed shapes."""

    f: np.ndarray          # (d, k) current factors
    v: np.ndarray          # (L,)  current variances
    r_bar: np.ndarray      # (d, k, k) per-row surrogate systems
    s_bar: np.ndarray      # (d, k) per-row surrogate right-hand sides
    fhat: np.ndarray       # (d, k) cached row solutions rbar_j^-1 sbar_j
    theta_bar: np.ndarray  # (L,) weighted observed-entry counts
    rho_bar: np.ndarray    # (L,) weighted residual-power accumulators
    t: int = 0

    @property
    def d(self) -> int:
        return self.f.shape[0]

    @property
    def k(self) -> int:
        return self.f.shape[1]

    @property
    def num_groups(self) -> int:
        return self.v.size


def init_state(cfg: ShastaConfig, f0: np.ndarray, v0: np.ndarray) -> ShastaState:
    """Fresh state: rbar_j = delta I, sbar_j = 0, accumulators zero."""
    f0 = check_factors(f0)
    v0 = floor_variances(v0)
    d, k = f0.shape
    if k != cfg.rank:
        raise ValueError(f"f0 has rank {k}, config says {cfg.rank}")
    if v0.size != cfg.num_groups:
        raise ValueError(f"v0 has {v0.size} groups, config says {cfg.num_groups}")
    return ShastaState(
        f=f0.copy(),
        v=v0.copy(),
        r_bar=np.broadcast_to(cfg.delta * np.eye(k), (d, k, k)).copy(),
        s_bar=np.zeros((d, k)),
        fhat=np.zeros((d, k)),
        theta_bar=np.zeros(cfg.num_groups),
        rho_bar=np.zeros(cfg.num_groups),
        t=0,
    )


def v_step(state: ShastaState, sample: ObservedSample, w: float,
           c_v: float) -> ShastaState:
    """Variance update at frozen factors.

    Folds the sample's observed-entry count and posterior residual power into
    the group accumulators (other groups decay by 1 - w, which leaves their
    ratios invariant), then averages each seen group's variance toward its
    accumulator ratio.  Never-seen groups keep their initial value.
    """
    if not 0.0 < w <= 1.0:
        raise ValueError("weight must lie in (0, 1]")
    g = sample.group
    stats = posterior_stats(state.f, state.v, sample)
    fo = state.f[sample.omega]
    resid = sample.values - fo @ stats.zbar
    vg = float(state.v[g])
    rho_t = float(resid @ resid) + vg * float(np.sum((fo @ stats.m) * fo))

    state.theta_bar *= 1.0 - w
    state.rho_bar *= 1.0 - w
    state.theta_bar[g] += w * sample.nobs
    state.rho_bar[g] += w * rho_t

    seen = state.theta_bar > 0
    ratio = np.where(seen, state.rho_bar, 0.0) / np.where(seen, state.theta_bar, 1.0)
    state.v[seen] = floor_variances((1.0 - c_v) * state.v[seen] + c_v * ratio[seen])
    return state


def f_step(state: ShastaState, sample: ObservedSample, w: float,
           c_f: float) -> ShastaState:
    """Factor update at the variances already updated this tick.

    Observed rows fold in the sample's posterior moments and are re-solved;
    unobserved rows decay (solution unchanged, cached value reused).  The new
    factors average the previous ones toward the surrogate maximizer.
    """
    if not 0.0 < w <= 1.0:
        raise ValueError("weight must lie in (0, 1]")
    omega = sample.omega
    stats = posterior_stats(state.f, state.v, sample)
    vg = float(floor_variances(state.v)[sample.group])

    state.r_bar *= 1.0 - w
    state.s_bar *= 1.0 - w
    if omega.size:
        contrib = np.outer(stats.zbar, stats.zbar) / vg + stats.m
        state.r_bar[omega] += w * contrib
        state.s_bar[omega] += (w / vg) * np.outer(sample.values, stats.zbar)
        state.fhat[omega] = _solve_observed_rows(state.r_bar[omega],
                                                 state.s_bar[omega])
    state.f = (1.0 - c_f) * state.f + c_f * state.fhat
    return state


def _solve_observed_rows(r: np.ndarray, s: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(r, s[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.stack([
            linalg.lu_solve(linalg.lu_factor(rj, check_finite=False), sj,
                            check_finite=False)
            for rj, sj in zip(r, s)
        ])


def ingest(state: ShastaState, sample: ObservedSample,
           cfg: ShastaConfig) -> ShastaState:
    """Advance one tick: variance update first, then the factor update."""
    if not 0 <= sample.group < cfg.num_groups:
        raise ValueError(f"sample group {sample.group} outside "
                         f"[0, {cfg.num_groups})")
    if sample.omega.size and sample.omega[-1] >= state.d:
        raise ValueError("sample observes a coordinate beyond the state's d")
    state.t += 1
    w = cfg.weights(state.t)
    if cfg.variance_mode == MEMORYLESS_SINGLE:
        v_step(state, sample, w=1.0, c_v=1.0)
    else:
        v_step(state, sample, w, cfg.c_v)
    f_step(state, sample, w, cfg.c_f)
    return state


def save_state(state: ShastaState, path) -> None:
    """Checkpoint to a flat fixed-width binary file.

    Layout: 16-byte magic, four little-endian uint64 (d, k, L, t), then
    float64 arrays in order f, v, fhat, r_bar, s_bar, theta_bar, rho_bar.
    Byte size depends only on (d, k, L).
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<QQQQ", state.d, state.k, state.num_groups, state.t))
        for arr in (state.f, state.v, state.fhat, state.r_bar, state.s_bar,
                    state.theta_bar, state.rho_bar):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_state(path) -> ShastaState:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a state checkpoint: bad magic {magic!r}")
        d, k, num_groups, t = struct.unpack("<QQQQ", fh.read(32))

        def read(shape):
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("truncated state checkpoint")
            return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

        state = ShastaState(
            f=read((d, k)),
            v=read((num_groups,)),
            fhat=read((d, k)),
            r_bar=read((d, k, k)),
            s_bar=read((d, k)),
            theta_bar=read((num_groups,)),
            rho_bar=read((num_groups,)),
            t=int(t),
        )
        if fh.read(1):
            raise ValueError("trailing bytes in state checkpoint")
        return state


class ShastaPCA:
    """Streaming-estimator facade over the state and config."""

    def __init__(self, cfg: ShastaConfig, f0: np.ndarray, v0: np.ndarray):
        self.cfg = cfg
        self.state = init_state(cfg, f0, v0)

    def ingest(self, sample: ObservedSample) -> None:
        ingest(self.state, sample, self.cfg)

    @property
    def factors(self) -> np.ndarray:
        return self.state.f

    @property
    def variances(self) -> np.ndarray:
        return self.state.v

    def current_subspace(self) -> np.ndarray:
        """Orthonormal basis: the k left singular vectors of the factors."""
        u, _, _ = np.linalg.svd(self.state.f, full_matrices=False)
        return u
