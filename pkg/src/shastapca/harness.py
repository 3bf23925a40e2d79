"""Config-driven experiment runner.

A YAML config declares a scenario (synthetic script or external CSV), one
estimator with its hyperparameters, and run settings (seeds, checkpoint
cadence, output directory).  Each seed produces one `trace_seed<N>.csv`; a
`summary.json` aggregates final metrics across seeds.  Given a config and a
seed, every numeric output byte is deterministic except elapsed-time fields.

CSV dataset format: a header row with a `group` column, an optional
`variance` column (reporting only), and d value columns; an empty value cell
marks a missing entry.  Rows stream lazily, so file length never affects
memory use.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .baselines import Grouse, Petrels
from .batch import BatchProblem, batch_f_step, batch_solve, batch_v_step, ppca_closed_form
from .datagen import Epoch, ScenarioScript, run_script
from .metrics import MetricTrace, subspace_error
from .model import DatasetEvaluator, ObservedSample
from .shasta import ShastaConfig, ShastaPCA

ESTIMATOR_KINDS = ("shasta", "petrels", "grouse", "batch-mm", "ppca")


class ConfigError(ValueError):
    """Invalid experiment config; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class CsvFormatError(ValueError):
    """Malformed dataset CSV; message carries the 1-based line number."""


# ---------------------------------------------------------------------------
# Config parsing


def _get(mapping, key, path, required=True, default=None):
    if not isinstance(mapping, dict):
        raise ConfigError(path, "expected a mapping")
    if key not in mapping:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    return mapping[key]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: dict
    estimator: dict
    seeds: tuple
    checkpoint_every: int
    output_dir: str
    loglik_gap: bool
    raw: dict


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file does not exist")
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    scenario = _parse_scenario(_get(raw, "scenario", "config"))
    estimator = _parse_estimator(_get(raw, "estimator", "config"), "estimator")
    run = _get(raw, "run", "config")
    seeds = tuple(int(s) for s in _get(run, "seeds", "run"))
    if not seeds:
        raise ConfigError("run.seeds", "need at least one seed")
    cadence = int(_get(run, "checkpoint_every", "run", required=False, default=100))
    if cadence < 1:
        raise ConfigError("run.checkpoint_every", "must be >= 1")
    loglik = bool(_get(run, "loglik_gap", "run", required=False, default=False))
    if loglik and scenario["kind"] == "synthetic" and len(scenario["epochs"]) > 1:
        raise ConfigError("run.loglik_gap",
                          "only defined for single-epoch synthetic scenarios")
    if loglik and scenario["kind"] == "csv":
        raise ConfigError("run.loglik_gap", "needs a planted synthetic scenario")
    output_dir = str(_get(run, "output_dir", "run"))
    return ExperimentConfig(scenario=scenario, estimator=estimator, seeds=seeds,
                            checkpoint_every=cadence, output_dir=output_dir,
                            loglik_gap=loglik, raw=raw)


def _parse_scenario(raw) -> dict:
    kind = _get(raw, "kind", "scenario", required=False, default="synthetic")
    if kind == "csv":
        path = _get(raw, "path", "scenario")
        if not Path(path).exists():
            raise ConfigError("scenario.path", f"dataset not found: {path}")
        return {"kind": "csv", "path": str(path),
                "num_groups": int(_get(raw, "num_groups", "scenario"))}
    if kind != "synthetic":
        raise ConfigError("scenario.kind", f"unknown scenario kind {kind!r}")

    d = int(_get(raw, "d", "scenario"))
    rank = int(_get(raw, "rank", "scenario"))
    spectrum = tuple(float(x) for x in _get(raw, "spectrum", "scenario"))
    variances = tuple(float(x) for x in _get(raw, "variances", "scenario"))
    if len(spectrum) != rank:
        raise ConfigError("scenario.spectrum", "needs one value per rank")
    observe_prob = float(_get(raw, "observe_prob", "scenario",
                              required=False, default=1.0))
    group_probs = _get(raw, "group_probs", "scenario", required=False)
    group_counts = _get(raw, "group_counts", "scenario", required=False)
    if (group_probs is None) == (group_counts is None):
        raise ConfigError("scenario",
                          "specify exactly one of group_probs / group_counts")

    epochs_raw = _get(raw, "epochs", "scenario", required=False)
    if epochs_raw is None:
        if group_counts is None:
            raise ConfigError("scenario.epochs",
                              "required unless group_counts fixes the length")
        epochs = [{"samples": int(np.sum(group_counts))}]
    else:
        epochs = epochs_raw
    parsed_epochs = []
    for i, e in enumerate(epochs):
        epath = f"scenario.epochs[{i}]"
        scale = _get(e, "scale_variance", epath, required=False)
        if scale is not None:
            scale = (int(_get(scale, "group", f"{epath}.scale_variance")),
                     float(_get(scale, "factor", f"{epath}.scale_variance")))
            if not 0 <= scale[0] < len(variances):
                raise ConfigError(f"{epath}.scale_variance.group", "out of range")
        op = _get(e, "observe_prob", epath, required=False)
        parsed_epochs.append(dict(
            samples=int(_get(e, "samples", epath)),
            observe_prob=None if op is None else float(op),
            redraw_subspace=bool(_get(e, "redraw_subspace", epath,
                                      required=False, default=False)),
            scale_variance=scale,
        ))
    return {
        "kind": "synthetic", "d": d, "rank": rank, "spectrum": spectrum,
        "variances": variances, "observe_prob": observe_prob,
        "group_probs": None if group_probs is None else tuple(map(float, group_probs)),
        "group_counts": None if group_counts is None else tuple(map(int, group_counts)),
        "epochs": parsed_epochs,
    }


def _parse_estimator(raw, path) -> dict:
    kind = _get(raw, "kind", path)
    if kind not in ESTIMATOR_KINDS:
        raise ConfigError(f"{path}.kind",
                          f"unknown estimator {kind!r}; expected one of "
                          f"{', '.join(ESTIMATOR_KINDS)}")
    out = {"kind": kind, "rank": int(_get(raw, "rank", path))}
    if kind == "shasta":
        out.update(
            weights=_get(raw, "weights", path, required=False, default="1/t"),
            c_f=float(_get(raw, "c_f", path, required=False, default=0.1)),
            c_v=float(_get(raw, "c_v", path, required=False, default=0.1)),
            delta=float(_get(raw, "delta", path, required=False, default=0.1)),
            variance_mode=_get(raw, "variance_mode", path, required=False,
                               default="grouped"),
        )
    elif kind == "petrels":
        out.update(
            forgetting=float(_get(raw, "forgetting", path, required=False,
                                  default=1.0)),
            delta=float(_get(raw, "delta", path, required=False, default=0.1)),
        )
    elif kind == "grouse":
        out.update(step=float(_get(raw, "step", path, required=False,
                                   default=0.01)))
    elif kind == "batch-mm":
        out.update(
            iterations=int(_get(raw, "iterations", path, required=False,
                                default=100)),
            tol=_get(raw, "tol", path, required=False),
        )
        if out["tol"] is not None:
            out["tol"] = float(out["tol"])
    elif kind == "ppca":
        group = _get(raw, "group", path, required=False)
        out.update(group=None if group is None else int(group))
    return out


def scenario_script(scenario: dict) -> ScenarioScript:
    return ScenarioScript(
        d=scenario["d"], k=scenario["rank"], spectrum=scenario["spectrum"],
        v_star=scenario["variances"], observe_prob=scenario["observe_prob"],
        group_probs=scenario["group_probs"], group_counts=scenario["group_counts"],
        epochs=tuple(Epoch(**e) for e in scenario["epochs"]),
    )


# ---------------------------------------------------------------------------
# CSV ingestion


def read_csv_samples(path):
    """Lazily yield ObservedSample rows (and their optional variances).

    Yields (sample, variance_or_none).  Raises CsvFormatError with the 1-based
    line number on malformed rows.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("line 1: empty file") from None
        if "group" not in header:
            raise CsvFormatError("line 1: missing required 'group' column")
        group_col = header.index("group")
        var_col = header.index("variance") if "variance" in header else None
        value_cols = [i for i in range(len(header))
                      if i not in (group_col, var_col)]
        if not value_cols:
            raise CsvFormatError("line 1: no value columns")

        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"line {lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                group = int(row[group_col])
            except ValueError:
                raise CsvFormatError(
                    f"line {lineno}: group {row[group_col]!r} is not an integer"
                ) from None
            omega, values = [], []
            for j, col in enumerate(value_cols):
                cell = row[col]
                if cell == "":
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvFormatError(
                        f"line {lineno}: value {cell!r} is not a number"
                    ) from None
                omega.append(j)
            variance = None
            if var_col is not None and row[var_col] != "":
                variance = float(row[var_col])
            try:
                sample = ObservedSample(np.array(omega, dtype=np.intp),
                                        np.array(values), group)
            except ValueError as exc:
                raise CsvFormatError(f"line {lineno}: {exc}") from None
            yield sample, variance


def csv_dimension(path) -> int:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    return len([c for c in header if c not in ("group", "variance")])


def load_csv_problem(path, rank: int, num_groups: int) -> BatchProblem:
    d = csv_dimension(path)
    samples = [s for s, _ in read_csv_samples(path)]
    return BatchProblem(samples=samples, num_groups=num_groups, d=d, k=rank)


def ingest_csv(path, num_groups: int, rank: int | None = None,
               streaming: bool = True):
    """Dataset entry point: a lazy sample stream, or a materialized batch
    problem when `streaming` is false (then `rank` is required)."""
    if streaming:
        return (sample for sample, _ in read_csv_samples(path))
    if rank is None:
        raise ValueError("batch ingestion needs the target rank")
    return load_csv_problem(path, rank=rank, num_groups=num_groups)


def write_csv_stream(samples, d: int, path, variances=None) -> None:
    """Serialize samples to the dataset CSV format (round-trips exactly)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["group"] + [f"y{j}" for j in range(d)]
        if variances is not None:
            header.insert(1, "variance")
        writer.writerow(header)
        for i, s in enumerate(samples):
            cells = [""] * d
            for j, val in zip(s.omega, s.values):
                cells[j] = repr(float(val))
            row = [str(s.group)] + cells
            if variances is not None:
                row.insert(1, repr(float(variances[i])))
            writer.writerow(row)


def zero_fill(samples, d: int) -> np.ndarray:
    """Dense n x d matrix with zeros at missing entries, for estimators that
    need fully sampled data."""
    out = np.zeros((len(samples), d))
    for i, s in enumerate(samples):
        out[i, s.omega] = s.values
    return out


# ---------------------------------------------------------------------------
# Running experiments


def _seeded_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence((int(seed), int(stream)))))


def shared_init(seed: int, d: int, rank: int, num_groups: int):
    """The (F0, v0) initialization shared by every estimator for one seed."""
    rng = _seeded_rng(seed, 1)
    f0 = rng.standard_normal((d, rank)) / np.sqrt(d)
    v0 = rng.uniform(0.0, 1.0, size=num_groups)
    return f0, v0


def _orthonormalize(f: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(f)
    return q * np.sign(np.diag(r))


def build_estimator(spec: dict, d: int, num_groups: int, f0, v0):
    kind = spec["kind"]
    if kind == "shasta":
        cfg = ShastaConfig(rank=spec["rank"], num_groups=num_groups,
                           weights=spec["weights"], c_f=spec["c_f"],
                           c_v=spec["c_v"], delta=spec["delta"],
                           variance_mode=spec["variance_mode"])
        return ShastaPCA(cfg, f0, v0)
    if kind == "petrels":
        return Petrels(f0, forgetting=spec["forgetting"], delta=spec["delta"])
    if kind == "grouse":
        return Grouse(_orthonormalize(f0), step=spec["step"])
    raise ConfigError("estimator.kind", f"{kind!r} is not a streaming estimator")


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every seed, write one trace CSV per seed plus summary.json."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_seed = {}
    for seed in config.seeds:
        trace, final = _run_one_seed(config, seed)
        trace.write_csv(out_dir / f"trace_seed{seed}.csv")
        per_seed[seed] = final
    summary = _summarize(config, per_seed)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _run_one_seed(config: ExperimentConfig, seed: int):
    scenario = config.scenario
    kind = config.estimator["kind"]
    if scenario["kind"] == "csv":
        return _run_csv_seed(config, seed)
    script = scenario_script(scenario)
    num_groups = len(scenario["variances"])
    f0, v0 = shared_init(seed, scenario["d"], config.estimator["rank"], num_groups)
    stream = run_script(script, seed=np.random.SeedSequence((seed, 0)))
    if kind in ("batch-mm", "ppca"):
        return _run_batch_seed(config, seed, script, stream, f0, v0)
    return _run_streaming_seed(config, seed, script, stream, f0, v0)


def _run_streaming_seed(config: ExperimentConfig, seed, script, stream, f0, v0):
    scenario = config.scenario
    num_groups = len(scenario["variances"])
    est = build_estimator(config.estimator, scenario["d"], num_groups, f0, v0)
    has_v = config.estimator["kind"] == "shasta"
    collect = [] if config.loglik_gap else None

    trace = MetricTrace(num_groups=num_groups)
    checkpoints = []  # deferred log-likelihood work: (t, f, v, elapsed)
    start = time.perf_counter()
    t = 0
    total = script.total_samples
    truth = None
    for sample, truth in stream:
        t += 1
        est.ingest(sample)
        if collect is not None:
            collect.append(sample)
        if t % config.checkpoint_every == 0 or t == total:
            err = subspace_error(est.current_subspace(), truth.u)
            elapsed = time.perf_counter() - start
            v_est = est.variances.copy() if has_v else None
            if collect is not None and has_v:
                checkpoints.append((t, est.factors.copy(), v_est, err, elapsed))
            else:
                trace.append(t, err, v_estimates=v_est, elapsed_seconds=elapsed)

    gaps = {}
    if checkpoints:
        evaluator = DatasetEvaluator(collect, scenario["d"])
        ref = evaluator(truth.factors, truth.v_star)
        for (tc, f, v_est, err, elapsed) in checkpoints:
            gaps[tc] = evaluator(f, v_est) - ref
            trace.append(tc, err, loglik_gap=gaps[tc], v_estimates=v_est,
                         elapsed_seconds=elapsed)

    last = trace.records[-1]
    final = {
        "final_subspace_error": last.subspace_error,
        "final_loglik_gap": last.loglik_gap,
        "final_variances": (None if last.v_estimates is None
                            else [float(x) for x in last.v_estimates]),
        "elapsed_seconds": last.elapsed_seconds,
        "samples": t,
    }
    return trace, final


def _run_batch_seed(config: ExperimentConfig, seed, script, stream, f0, v0):
    scenario = config.scenario
    num_groups = len(scenario["variances"])
    pairs = list(stream)
    samples = [s for s, _ in pairs]
    truth = pairs[-1][1]
    trace = MetricTrace(num_groups=num_groups)
    start = time.perf_counter()

    if config.estimator["kind"] == "ppca":
        group = config.estimator["group"]
        subset = (samples if group is None
                  else [s for s in samples if s.group == group])
        data = zero_fill(subset, scenario["d"])
        f, sigma_sq = ppca_closed_form(data, config.estimator["rank"])
        err = subspace_error(np.linalg.svd(f, full_matrices=False)[0], truth.u)
        gap = None
        if config.loglik_gap:
            evaluator = DatasetEvaluator(samples, scenario["d"])
            v_hat = np.full(num_groups, max(sigma_sq, 1e-12))
            gap = (evaluator(f, v_hat)
                   - evaluator(truth.factors, truth.v_star))
        trace.append(1, err, loglik_gap=gap,
                     elapsed_seconds=time.perf_counter() - start)
        final = {
            "final_subspace_error": err,
            "final_loglik_gap": gap,
            "final_variances": [float(sigma_sq)] * num_groups,
            "elapsed_seconds": trace.records[-1].elapsed_seconds,
            "samples": len(subset),
        }
        return trace, final

    problem = BatchProblem(samples=samples, num_groups=num_groups,
                           d=scenario["d"], k=config.estimator["rank"])
    evaluator = problem.dense
    ref = (evaluator(truth.factors, truth.v_star) if config.loglik_gap else None)
    iterates = batch_solve(problem, f0, v0, iters=config.estimator["iterations"],
                           tol=config.estimator["tol"])
    for it in iterates:
        u_hat = np.linalg.svd(it.f, full_matrices=False)[0]
        err = subspace_error(u_hat, truth.u)
        gap = None if ref is None else it.loglik - ref
        trace.append(it.iteration, err, loglik_gap=gap,
                     v_estimates=it.v,
                     elapsed_seconds=time.perf_counter() - start)
    last = trace.records[-1]
    final = {
        "final_subspace_error": last.subspace_error,
        "final_loglik_gap": last.loglik_gap,
        "final_variances": [float(x) for x in iterates[-1].v],
        "elapsed_seconds": last.elapsed_seconds,
        "samples": len(samples),
    }
    return trace, final


def _run_csv_seed(config: ExperimentConfig, seed: int):
    """External dataset: stream lazily; no planted truth exists, so the trace
    reports distance to the run's final subspace (a convergence diagnostic)."""
    scenario = config.scenario
    d = csv_dimension(scenario["path"])
    num_groups = scenario["num_groups"]
    f0, v0 = shared_init(seed, d, config.estimator["rank"], num_groups)
    est = build_estimator(config.estimator, d, num_groups, f0, v0)
    has_v = config.estimator["kind"] == "shasta"

    bases = []
    start = time.perf_counter()
    t = 0
    for sample, _ in read_csv_samples(scenario["path"]):
        t += 1
        est.ingest(sample)
        if t % config.checkpoint_every == 0:
            bases.append((t, est.current_subspace(),
                          est.variances.copy() if has_v else None,
                          time.perf_counter() - start))
    final_t = t
    if not bases or bases[-1][0] != final_t:
        bases.append((final_t, est.current_subspace(),
                      est.variances.copy() if has_v else None,
                      time.perf_counter() - start))
    final_basis = bases[-1][1]
    trace = MetricTrace(num_groups=num_groups)
    for (tc, basis, v_est, elapsed) in bases:
        trace.append(tc, subspace_error(basis, final_basis),
                     v_estimates=v_est, elapsed_seconds=elapsed)
    last = trace.records[-1]
    final = {
        "final_subspace_error": last.subspace_error,
        "final_loglik_gap": None,
        "final_variances": (None if last.v_estimates is None
                            else [float(x) for x in last.v_estimates]),
        "elapsed_seconds": last.elapsed_seconds,
        "samples": final_t,
    }
    return trace, final


def _summarize(config: ExperimentConfig, per_seed: dict) -> dict:
    def agg(key):
        vals = [m[key] for m in per_seed.values() if m[key] is not None]
        if not vals:
            return None
        return {
            "mean": float(np.mean(vals)),
            "std": float(np.std(vals)),
            "median": float(np.median(vals)),
        }

    return {
        "config": config.raw,
        "seeds": {str(s): m for s, m in per_seed.items()},
        "aggregate": {
            "final_subspace_error": agg("final_subspace_error"),
            "final_loglik_gap": agg("final_loglik_gap"),
        },
    }


# ---------------------------------------------------------------------------
# Timing comparison


def parse_timing_config(raw: dict) -> dict:
    scenario = _parse_scenario(_get(raw, "scenario", "config"))
    if scenario["kind"] != "synthetic" or len(scenario["epochs"]) != 1:
        raise ConfigError("scenario", "timing runs need a single-epoch "
                                      "synthetic scenario")
    streaming_raw = _get(raw, "streaming_estimator", "config", required=False)
    streaming = None
    if streaming_raw is not None:
        # Without a streaming estimator the run degenerates to a batch trace.
        streaming = _parse_estimator(streaming_raw, "streaming_estimator")
        if streaming["kind"] not in ("shasta", "petrels", "grouse"):
            raise ConfigError("streaming_estimator.kind", "must be streaming")
    batch = _parse_estimator(_get(raw, "batch_estimator", "config"),
                             "batch_estimator")
    if batch["kind"] != "batch-mm":
        raise ConfigError("batch_estimator.kind", "must be batch-mm")
    run = _get(raw, "run", "config")
    return {
        "scenario": scenario,
        "streaming": streaming,
        "batch": batch,
        "seeds": tuple(int(s) for s in _get(run, "seeds", "run")),
        "checkpoint_every": int(_get(run, "checkpoint_every", "run",
                                     required=False, default=1000)),
        "output_dir": str(_get(run, "output_dir", "run")),
    }


def load_timing_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file does not exist")
    with open(path) as fh:
        return parse_timing_config(yaml.safe_load(fh))


def timing_run(config: dict) -> dict:
    """Metric-versus-wallclock comparison of a streaming and a batch solver
    on the same data from the same random initialization."""
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = config["scenario"]
    script = scenario_script(scenario)
    num_groups = len(scenario["variances"])
    rows = {}
    for seed in config["seeds"]:
        pairs = list(run_script(script, seed=np.random.SeedSequence((seed, 0))))
        samples = [s for s, _ in pairs]
        truth = pairs[-1][1]
        evaluator = DatasetEvaluator(samples, scenario["d"])
        ref = evaluator(truth.factors, truth.v_star)
        rank = (config["streaming"] or config["batch"])["rank"]
        f0, v0 = shared_init(seed, scenario["d"], rank, num_groups)
        init_gap = evaluator(f0, np.maximum(v0, 1e-12)) - ref

        row = {"init_gap": init_gap}
        if config["streaming"] is not None:
            est = build_estimator(config["streaming"], scenario["d"],
                                  num_groups, f0, v0)
            s_trace = MetricTrace(num_groups=num_groups)
            start = time.perf_counter()
            for t, sample in enumerate(samples, start=1):
                est.ingest(sample)
                if t % config["checkpoint_every"] == 0 or t == len(samples):
                    elapsed = time.perf_counter() - start
                    err = subspace_error(est.current_subspace(), truth.u)
                    gap = (evaluator(est.factors, est.variances) - ref
                           if hasattr(est, "factors") else None)
                    s_trace.append(t, err, loglik_gap=gap,
                                   elapsed_seconds=elapsed)
            stream_time = time.perf_counter() - start
            s_trace.write_csv(out_dir / f"streaming_seed{seed}.csv")
            row.update(
                streaming_final_gap=s_trace.records[-1].loglik_gap,
                streaming_final_subspace_error=s_trace.records[-1].subspace_error,
                streaming_seconds=stream_time,
            )

        problem = BatchProblem(samples=samples, num_groups=num_groups,
                               d=scenario["d"], k=config["batch"]["rank"])
        b_trace = MetricTrace(num_groups=num_groups)
        f, v = f0.copy(), np.maximum(v0, 1e-12)
        start = time.perf_counter()
        prev = None
        for it in range(1, config["batch"]["iterations"] + 1):
            v = batch_v_step(f, v, problem)
            f = batch_f_step(f, v, problem)
            loglik = evaluator(f, v)
            u_hat = np.linalg.svd(f, full_matrices=False)[0]
            b_trace.append(it, subspace_error(u_hat, truth.u),
                           loglik_gap=loglik - ref, v_estimates=v,
                           elapsed_seconds=time.perf_counter() - start)
            tol = config["batch"]["tol"]
            if tol is not None and prev is not None and \
                    abs(loglik - prev) <= tol * max(1.0, abs(prev)):
                break
            prev = loglik
        batch_time = time.perf_counter() - start
        b_trace.write_csv(out_dir / f"batch_seed{seed}.csv")

        row.update(
            batch_final_gap=b_trace.records[-1].loglik_gap,
            batch_final_subspace_error=b_trace.records[-1].subspace_error,
            batch_seconds=batch_time,
            batch_iterations=b_trace.records[-1].t,
        )
        rows[seed] = row

    def med(key):
        vals = [r[key] for r in rows.values() if key in r]
        return float(np.median(vals)) if vals else None

    table = {
        "seeds": {str(s): r for s, r in rows.items()},
        "median_streaming_seconds": med("streaming_seconds"),
        "median_batch_seconds": med("batch_seconds"),
        "median_streaming_final_gap": med("streaming_final_gap"),
        "median_batch_final_gap": med("batch_final_gap"),
    }
    with open(out_dir / "timing_summary.json", "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return table
