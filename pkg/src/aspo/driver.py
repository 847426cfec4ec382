"""The optimization loop: warm start, surrogate, cooled acquisition, accounting.

One run proceeds as: evaluate the orthogonal-array warm-start set, then loop
(fit the surrogate on all valid results, maximize the constrained cooled
acquisition, short-circuit database hits, evaluate, insert, periodically
re-learn the distance weights) until the iteration budget, the virtual-time
limit, or the stagnation rule (default ten non-improving iterations) stops
it.  Baseline generators (random, conventional BO, hill climbing) run under
the identical harness and accounting with only the proposal step swapped.

All times are virtual: evaluation minutes come from the synthetic model
(scaled by the run's time-compression factor) and accumulate on a virtual
clock, which also drives the stored checkpoints' timestamps.  Optimizer
wall-clock overhead is measured and reported in memory but kept out of the
emitted files and out of the stopping rule, so identical run configurations
produce byte-identical reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .acquisition import (
    EXPONENT,
    PAPER_RATIO,
    AcquisitionContext,
    CoolingSchedule,
    alpha_cool,
    expected_improvement,
    maximize_acquisition,
    maximize_ei_unconstrained,
)
from .checkpoints import (
    CheckpointRecord,
    CheckpointStore,
    DistanceWeights,
    RelaxedCost,
    artifact_path,
    cost_estimate,
    learn_weights,
)
from .constraints import exact_configuration, load_constraints
from .errors import InvalidConfigurationError, NumericalError
from .evaluation import (
    RETRIEVAL,
    STRATEGIES,
    EvalHarness,
    EvaluationResult,
    ResourceBudget,
    SyntheticModel,
    estimated_execution_time,
)
from .gp import fit
from .space import ParameterSpace, encode
from .warmstart import warm_start_configs

BASELINES = ("random", "vanilla-bo", "hill-climb")

#: distance weights are re-learned after this many database insertions
RELEARN_EVERY = 5
STAGNATION_LIMIT = 10
STAGNATION_RTOL = 1e-3

#: virtual epoch for deterministic checkpoint timestamps
_EPOCH = datetime(2000, 1, 1)

#: SLSQP iteration cap inside the driver loop (speed; accuracy is recovered
#: by the discrete polish step)
INNER_MAXITER = 30


@dataclass
class RunConfig:
    space_file: str
    model_file: str
    constraint_file: str | None = None
    benchmark: str = "multiply"
    budget_iterations: int = 30
    tdt_limit_minutes: float = 2100.0
    warm_start_budget: int = 10
    seed: int = 0
    acquisition_mode: str = PAPER_RATIO
    strategy: str = RETRIEVAL
    max_luts: int | None = None
    lambda0: float = 1.0
    cooling_k: float = 0.1
    time_compression: float = 1.0 / 60.0
    # consecutive non-improving iterations before stopping; None disables the
    # rule for fixed-budget comparisons
    stagnation_limit: int | None = STAGNATION_LIMIT

    def __post_init__(self):
        if self.budget_iterations < 0:
            raise ValueError("iteration budget must be non-negative")
        if self.warm_start_budget < 1:
            raise ValueError("warm-start budget must be positive")
        if self.tdt_limit_minutes <= 0:
            raise ValueError("time limit must be positive")
        if self.time_compression <= 0:
            raise ValueError("time compression must be positive")
        if self.acquisition_mode not in (PAPER_RATIO, EXPONENT):
            raise ValueError(f"unknown acquisition mode {self.acquisition_mode!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass
class HistoryEntry:
    iteration: int                  # 0 for warm start
    config: dict
    result: EvaluationResult
    alpha_value: float | None
    cost_estimate: float | None

    def eet_ms(self) -> float | None:
        return estimated_execution_time(self.result) if self.result.valid else None


@dataclass
class RunReport:
    history: list[HistoryEntry]
    best_config: dict | None
    best_eet_ms: float | None
    idr: float | None
    tdt_minutes: float
    overhead_minutes: float
    stop_reason: str
    space: ParameterSpace
    error: str | None = None

    @property
    def evaluations(self) -> int:
        return len(self.history)


def load_inputs(rc: RunConfig):
    space = ParameterSpace.load(rc.space_file)
    tree = load_constraints(rc.constraint_file, space) \
        if rc.constraint_file else None
    model = SyntheticModel.load(rc.model_file, space)
    if rc.benchmark not in model.benchmarks:
        raise InvalidConfigurationError(
            f"benchmark {rc.benchmark!r} not in model file; available: "
            f"{', '.join(sorted(model.benchmarks))}")
    return space, tree, model


class _AspoGenerator:
    """Constraint-aware cooled-acquisition proposals."""

    def __init__(self, rc, space, tree, store, warm, state):
        self.rc = rc
        self.space = space
        self.tree = tree
        self.store = store
        self.warm = warm
        self.state = state  # shares weights + history with the loop

    def _training_set(self):
        X, y = [], []
        for entry in self.state["history"]:
            if entry.result.valid:
                X.append(encode(self.space, entry.config))
                y.append(entry.eet_ms())
        return X, y

    def propose(self, t):
        X, y = self._training_set()
        if len({tuple(np.round(x, 12)) for x in X}) < 2:
            return self._feasible_draw(t), None
        model = fit(self.space, X, y, seed=self.rc.seed)
        ctx = AcquisitionContext(
            model=model,
            best_feasible=float(min(y)),
            tree=self.tree,
            cost=RelaxedCost(self.store, self.state["weights"]),
            schedule=CoolingSchedule(self.rc.lambda0, self.rc.cooling_k,
                                     self.rc.acquisition_mode),
            iteration=t - 1,
        )
        cfg = maximize_acquisition(ctx, self.space, self.tree,
                                   seed=self.rc.seed, warm_configs=self.warm,
                                   maxiter=INNER_MAXITER)
        return cfg, alpha_cool(ctx, encode(self.space, cfg))

    def _feasible_draw(self, t):
        rng = np.random.default_rng([self.rc.seed, t, 11])
        for _ in range(100_000):
            cfg = {p.name: p.values[int(rng.integers(p.count))]
                   for p in self.space.params}
            if exact_configuration(self.tree, self.space, cfg):
                return cfg
        raise NumericalError("could not draw a feasible fallback configuration")

    def observe(self, cfg, result):
        pass


class _RandomGenerator:
    """Seeded uniform draws over the whole space, constraints ignored."""

    def __init__(self, rc, space):
        self.space = space
        self.rng = np.random.default_rng([rc.seed, 17])

    def propose(self, t):
        cfg = {p.name: p.values[int(self.rng.integers(p.count))]
               for p in self.space.params}
        return cfg, None

    def observe(self, cfg, result):
        pass


class _VanillaBoGenerator:
    """Conventional BO: plain EI, no snap awareness, no constraints, no cost."""

    def __init__(self, rc, space, warm, state):
        self.rc = rc
        self.space = space
        self.warm = warm
        self.state = state
        self.rng = np.random.default_rng([rc.seed, 23])

    def propose(self, t):
        X, y = [], []
        for entry in self.state["history"]:
            if entry.result.valid:
                X.append(encode(self.space, entry.config))
                y.append(entry.eet_ms())
        if len({tuple(np.round(x, 12)) for x in X}) < 2:
            cfg = {p.name: p.values[int(self.rng.integers(p.count))]
                   for p in self.space.params}
            return cfg, None
        model = fit(self.space, X, y, seed=self.rc.seed)
        best = float(min(y))
        cfg = maximize_ei_unconstrained(model, self.space, best,
                                        seed=self.rc.seed, iteration=t - 1,
                                        warm_configs=self.warm,
                                        maxiter=INNER_MAXITER)
        return cfg, expected_improvement(model, encode(self.space, cfg), best)

    def observe(self, cfg, result):
        pass


class _HillClimbGenerator:
    """Best-improvement ascent over single-parameter moves from the default."""

    def __init__(self, space, start_cfg):
        self.space = space
        self.current = dict(start_cfg)
        self.current_eet = math.inf
        self.known: dict[tuple, float] = {}
        self.queue: list[dict] | None = None
        self.started = False

    def _key(self, cfg):
        return tuple(cfg[p.name] for p in self.space.params)

    def _neighbors(self, cfg):
        for p in self.space.params:
            for v in p.values:
                if v != cfg[p.name]:
                    yield dict(cfg, **{p.name: v})

    def propose(self, t):
        if not self.started:
            self.started = True
            if self._key(self.current) not in self.known:
                return self.current, None
            self.current_eet = self.known[self._key(self.current)]
        while True:
            if self.queue is None:
                self.queue = list(self._neighbors(self.current))
            while self.queue:
                cfg = self.queue.pop(0)
                if self._key(cfg) not in self.known:
                    return cfg, None
            best_cfg, best_eet = None, self.current_eet
            for n in self._neighbors(self.current):
                eet = self.known.get(self._key(n), math.inf)
                if eet < best_eet:
                    best_cfg, best_eet = n, eet
            if best_cfg is None:
                return None  # converged: no improving neighbor
            self.current, self.current_eet = best_cfg, best_eet
            self.queue = None

    def observe(self, cfg, result):
        eet = estimated_execution_time(result) if result.valid else math.inf
        self.known[self._key(cfg)] = eet
        if self._key(cfg) == self._key(self.current):
            self.current_eet = min(self.current_eet, eet)


def _virtual_timestamp(clock_minutes: float) -> str:
    stamp = _EPOCH + timedelta(minutes=clock_minutes)
    return stamp.isoformat(timespec="seconds") + "Z"


def _run(rc: RunConfig, generator_factory) -> RunReport:
    space, tree, model = load_inputs(rc)
    budget = ResourceBudget(rc.max_luts or model.lut_budget)
    harness = EvalHarness(model, tree=tree, resource_budget=budget,
                          benchmark=rc.benchmark,
                          time_scale=rc.time_compression)
    store = CheckpointStore(space)
    state = {"history": [], "weights": DistanceWeights.ones(space)}
    history: list[HistoryEntry] = state["history"]
    clock = 0.0
    limit = rc.tdt_limit_minutes * rc.time_compression
    inserts = 0
    overhead_s = 0.0
    stop_reason = "budget-exhausted"
    error = None

    def t_syn(cfg, ref_record):
        return model.synthesis_time(cfg, ref_record.config)

    def run_eval(iteration, cfg, alpha_value):
        nonlocal clock, inserts
        cost_before = cost_estimate(store, cfg, state["weights"])
        cache_hit = rc.strategy == RETRIEVAL and store.lookup(cfg) is not None
        result = harness.evaluate(cfg, rc.strategy, db=store,
                                  weights=state["weights"], seed=rc.seed)
        clock += result.eval_minutes
        history.append(HistoryEntry(iteration, cfg, result, alpha_value,
                                    cost_before))
        if result.valid and not cache_hit:
            store.insert(CheckpointRecord(
                config=cfg, encoded=encode(space, cfg), metrics=result,
                artifact=artifact_path(space, cfg),
                synthesis_minutes=result.eval_minutes,
                inserted_at=_virtual_timestamp(clock)))
            inserts += 1
            if inserts % RELEARN_EVERY == 0 and len(store) >= 3:
                state["weights"] = learn_weights(store, t_syn, seed=rc.seed)
        return result

    def best_valid():
        best_entry, best_eet = None, math.inf
        for entry in history:
            eet = entry.eet_ms()
            if eet is not None and eet < best_eet:
                best_entry, best_eet = entry, eet
        return best_entry, (best_eet if best_entry else None)

    warm = warm_start_configs(space, tree, rc.seed, rc.warm_start_budget)
    for cfg in warm:
        if clock >= limit:
            stop_reason = "tdt-limit"
            break
        run_eval(0, cfg, None)

    generator = generator_factory(rc, space, tree, model, store, warm, state)
    for entry in history:
        generator.observe(entry.config, entry.result)

    _, prev_best = best_valid()
    stagnant = 0
    try:
        for t in range(1, rc.budget_iterations + 1):
            if clock >= limit:
                stop_reason = "tdt-limit"
                break
            t0 = time.perf_counter()
            proposal = generator.propose(t)
            overhead_s += time.perf_counter() - t0
            if proposal is None:
                stop_reason = "converged"
                break
            cfg, alpha_value = proposal
            result = run_eval(t, cfg, alpha_value)
            generator.observe(cfg, result)

            _, new_best = best_valid()
            improved = (prev_best is None and new_best is not None) or (
                prev_best is not None and new_best is not None
                and prev_best - new_best > STAGNATION_RTOL * prev_best)
            stagnant = 0 if improved else stagnant + 1
            prev_best = new_best
            if rc.stagnation_limit is not None and \
                    stagnant >= rc.stagnation_limit:
                stop_reason = "stagnation"
                break
    except NumericalError as exc:
        stop_reason = "numerical-failure"
        error = str(exc)

    best_entry, best_eet = best_valid()
    invalid = sum(1 for e in history if not e.result.valid)
    return RunReport(
        history=history,
        best_config=best_entry.config if best_entry else None,
        best_eet_ms=best_eet,
        idr=(invalid / len(history)) if history else None,
        tdt_minutes=clock,
        overhead_minutes=overhead_s / 60.0,
        stop_reason=stop_reason,
        space=space,
        error=error,
    )


def run_optimization(rc: RunConfig) -> RunReport:
    def factory(rc, space, tree, model, store, warm, state):
        return _AspoGenerator(rc, space, tree, store, warm, state)

    return _run(rc, factory)


def run_baseline(rc: RunConfig, baseline: str) -> RunReport:
    if baseline not in BASELINES:
        raise ValueError(f"unknown baseline {baseline!r}; "
                         f"choose from {', '.join(BASELINES)}")

    def factory(rc, space, tree, model, store, warm, state):
        if baseline == "random":
            return _RandomGenerator(rc, space)
        if baseline == "vanilla-bo":
            return _VanillaBoGenerator(rc, space, warm, state)
        return _HillClimbGenerator(space, space.default_configuration())

    return _run(rc, factory)


# --------------------------------------------------------------------------
# report emission


def _history_row(space: ParameterSpace, entry: HistoryEntry) -> dict:
    row = {"iteration": entry.iteration}
    row["config"] = {p.name: entry.config[p.name] for p in space.params}
    r = entry.result
    row.update(cycles=r.cycles, fmax_mhz=r.fmax_mhz, luts=r.luts,
               power_w=r.power_w, eval_minutes=r.eval_minutes, valid=r.valid,
               failure_stage=r.failure_stage, eet_ms=entry.eet_ms(),
               alpha=entry.alpha_value, cost_estimate=entry.cost_estimate)
    return row


def _summary(report: RunReport) -> dict:
    return {
        "summary": True,
        "evaluations": report.evaluations,
        "idr": report.idr,
        "tdt_minutes": report.tdt_minutes,
        "best_eet_ms": report.best_eet_ms,
        "best_config": report.best_config,
        "stop_reason": report.stop_reason,
    }


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: RunReport, out_dir, formats=("jsonl", "csv")) -> list[Path]:
    """Write history plus a summary row; byte-identical across equal runs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    space = report.space
    written = []

    if "jsonl" in formats:
        path = out_dir / "report.jsonl"
        with path.open("w", newline="\n") as fh:
            for entry in report.history:
                fh.write(json.dumps(_history_row(space, entry)) + "\n")
            fh.write(json.dumps(_summary(report)) + "\n")
        written.append(path)

    if "csv" in formats:
        path = out_dir / "report.csv"
        param_names = [p.name for p in space.params]
        header = (["iteration"] + param_names +
                  ["cycles", "fmax_mhz", "luts", "power_w", "eval_minutes",
                   "valid", "failure_stage", "eet_ms", "alpha",
                   "cost_estimate", "idr", "tdt_minutes", "best_eet_ms"])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for entry in report.history:
            r = entry.result
            writer.writerow([_csv_cell(c) for c in (
                [entry.iteration] +
                [entry.config[n] for n in param_names] +
                [r.cycles, r.fmax_mhz, r.luts, r.power_w, r.eval_minutes,
                 r.valid, r.failure_stage, entry.eet_ms(),
                 entry.alpha_value, entry.cost_estimate, None, None, None])])
        best = report.best_config or {}
        writer.writerow([_csv_cell(c) for c in (
            ["summary"] +
            [best.get(n) for n in param_names] +
            [None] * 8 +
            [report.idr, report.tdt_minutes, report.best_eet_ms])])
        path.write_text(buf.getvalue(), newline="\n")
        written.append(path)

    return written


# --------------------------------------------------------------------------
# evaluation-strategy comparison


def run_eval_bench(rc: RunConfig, n_configs: int = 10) -> dict:
    """Evaluate one random feasible config set under all three strategies.

    The retrieval database is pre-populated with the default configuration
    plus a warm-start round, mirroring how the strategies are meant to be
    compared; returns per-strategy mean/min/max virtual minutes.
    """
    space, tree, model = load_inputs(rc)
    harness = EvalHarness(model, tree=tree,
                          resource_budget=ResourceBudget(
                              rc.max_luts or model.lut_budget),
                          benchmark=rc.benchmark,
                          time_scale=rc.time_compression)
    rng = np.random.default_rng([rc.seed, 31])
    configs = []
    while len(configs) < n_configs:
        cfg = {p.name: p.values[int(rng.integers(p.count))]
               for p in space.params}
        if exact_configuration(tree, space, cfg):
            configs.append(cfg)

    store = CheckpointStore(space)
    prepop = [space.default_configuration()] + \
        warm_start_configs(space, tree, rc.seed, rc.warm_start_budget)
    clock = 0.0
    for cfg in prepop:
        if store.lookup(cfg) is not None:
            continue
        res = harness.evaluate(cfg, "direct")
        clock += res.eval_minutes
        if res.valid:
            store.insert(CheckpointRecord(
                config=cfg, encoded=encode(space, cfg), metrics=res,
                artifact=artifact_path(space, cfg),
                synthesis_minutes=res.eval_minutes,
                inserted_at=_virtual_timestamp(clock)))

    out = {"configs": configs, "strategies": {}}
    for strategy in STRATEGIES:
        minutes = [harness.evaluate(c, strategy, db=store).eval_minutes
                   for c in configs]
        out["strategies"][strategy] = {
            "mean_minutes": float(np.mean(minutes)),
            "min_minutes": float(np.min(minutes)),
            "max_minutes": float(np.max(minutes)),
        }
    return out
