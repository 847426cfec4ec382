import math

import numpy as np
import pytest
from scipy.stats import norm

from aspo import assets
from aspo.acquisition import (
    EXPONENT,
    PAPER_RATIO,
    AcquisitionContext,
    CoolingSchedule,
    alpha_cool,
    cooled_value,
    cooling_factor,
    ei_value,
    expected_improvement,
    maximize_acquisition,
    maximize_ei_unconstrained,
)
from aspo.checkpoints import (
    CheckpointRecord,
    CheckpointStore,
    DistanceWeights,
    RelaxedCost,
    artifact_path,
)
from aspo.constraints import exact_configuration, parse_constraints
from aspo.errors import NoFeasibleCandidateError
from aspo.evaluation import EvaluationResult
from aspo.gp import KernelParams, fit
from aspo.space import ParameterDef, ParameterSpace, encode


def ok_metrics():
    return EvaluationResult(cycles=1, fmax_mhz=1.0, luts=1, power_w=0.1,
                            eval_minutes=1.0, valid=True)


def small_space():
    return ParameterSpace([
        ParameterDef("alg", "categorical", ("red", "green", "blue"), "red"),
        ParameterDef("width", "ordinal", (1, 2, 4, 8), 1),
        ParameterDef("depth", "ordinal", (2, 4, 8, 16, 32), 2),
        ParameterDef("banks", "ordinal", (1, 2, 3), 1),
    ])


def synthetic_objective(space, cfg):
    # smooth-ish landscape with categorical offsets
    x = [p.scaled_rank(cfg[p.name]) for p in space.params if p.kind == "ordinal"]
    offs = {"red": 0.0, "green": -0.4, "blue": 0.3}[cfg["alg"]]
    return (x[0] - 0.6) ** 2 + 0.5 * (x[1] - 0.3) ** 2 + 0.2 * x[2] + offs


def fitted_context(space, seed, n_train=14, with_store=True, mode=PAPER_RATIO,
                   k=0.1, iteration=0):
    rng = np.random.default_rng(seed)
    cfgs, seen = [], set()
    while len(cfgs) < n_train:
        cfg = {p.name: p.values[rng.integers(p.count)] for p in space.params}
        key = tuple(cfg.values())
        if key not in seen:
            seen.add(key)
            cfgs.append(cfg)
    X = [encode(space, c) for c in cfgs]
    y = [synthetic_objective(space, c) for c in cfgs]
    model = fit(space, X, y, seed=seed)
    store = CheckpointStore(space)
    if with_store:
        for cfg in cfgs[: n_train // 2]:
            store.insert(CheckpointRecord(
                config=cfg, encoded=encode(space, cfg), metrics=ok_metrics(),
                artifact=artifact_path(space, cfg), synthesis_minutes=1.0))
    cost = RelaxedCost(store, DistanceWeights.ones(space))
    ctx = AcquisitionContext(model=model, best_feasible=float(min(y)),
                             cost=cost,
                             schedule=CoolingSchedule(mode=mode, k=k),
                             iteration=iteration)
    return ctx, cfgs, y


class TestEiValue:
    def test_at_incumbent_mean_unit_sigma(self):
        # EI = phi(0) when mean equals best and sigma is 1
        assert ei_value(0.0, 1.0, 0.0) == pytest.approx(norm.pdf(0.0), rel=1e-12)
        assert ei_value(0.0, 1.0, 0.0) == pytest.approx(0.3989423, abs=1e-7)

    def test_deterministic_improvement(self):
        assert ei_value(1.0, 0.0, 3.0) == 2.0
        assert ei_value(5.0, 0.0, 3.0) == 0.0

    def test_far_above_best_is_negligible(self):
        # z = -8; Mills-ratio bound keeps EI far below 1e-14
        assert ei_value(8.0, 1.0, 0.0) < 1e-14

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            ei = ei_value(rng.normal(), abs(rng.normal()), rng.normal())
            assert ei >= 0.0

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(1)
        draws = rng.standard_normal(200_000)
        for mean, sigma, best in [(0.0, 1.0, 0.0), (1.0, 2.0, 0.5),
                                  (-0.5, 0.3, 0.0)]:
            mc = np.maximum(best - (mean + sigma * draws), 0.0).mean()
            assert ei_value(mean, sigma, best) == pytest.approx(mc, rel=0.02)


class TestCooling:
    def test_at_zero(self):
        assert cooling_factor(CoolingSchedule(1.0, 0.1), 0) == 1.0

    def test_no_decay(self):
        s = CoolingSchedule(1.0, 0.0)
        for t in (0, 5, 1000):
            assert cooling_factor(s, t) == 1.0

    def test_closed_form(self):
        assert cooling_factor(CoolingSchedule(2.0, 0.1), 10) == \
            pytest.approx(2 * math.exp(-1), rel=1e-12)

    def test_strictly_decreasing_when_k_positive(self):
        s = CoolingSchedule(1.0, 0.3)
        values = [cooling_factor(s, t) for t in range(10)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_invalid_schedule(self):
        with pytest.raises(ValueError):
            CoolingSchedule(lambda0=0.0)
        with pytest.raises(ValueError):
            CoolingSchedule(k=-1.0)
        with pytest.raises(ValueError):
            CoolingSchedule(mode="linear")


class TestCooledValue:
    def test_neutral_cost(self):
        assert cooled_value(0.7, 1.0, 1.0, PAPER_RATIO) == pytest.approx(0.7)
        assert cooled_value(0.7, 1.0, 1.0, EXPONENT) == pytest.approx(0.7)

    def test_cheaper_wins_at_equal_alpha(self):
        for mode in (PAPER_RATIO, EXPONENT):
            assert cooled_value(0.5, 0.2, 1.0, mode) > \
                cooled_value(0.5, 0.8, 1.0, mode)

    def test_zero_cost_floored(self):
        v = cooled_value(1.0, 0.0, 1.0, PAPER_RATIO)
        assert math.isfinite(v)

    def test_ratio_argmax_invariant_in_t(self):
        rng = np.random.default_rng(2)
        schedule = CoolingSchedule(1.0, 0.1, PAPER_RATIO)
        alphas = rng.uniform(0.01, 1.0, size=20)
        costs = rng.uniform(0.05, 2.0, size=20)
        picks = []
        for t in (0, 10, 100):
            lam = cooling_factor(schedule, t)
            vals = [cooled_value(a, c, lam, PAPER_RATIO)
                    for a, c in zip(alphas, costs)]
            picks.append(int(np.argmax(vals)))
        assert picks[0] == picks[1] == picks[2]

    def test_exponent_witness_ranking_flips(self):
        # alpha=(1,2), cost=(1,4): cheap-low-alpha wins early, loses late
        schedule = CoolingSchedule(1.0, 0.1, EXPONENT)
        lam0 = cooling_factor(schedule, 0)
        early = [cooled_value(1.0, 1.0, lam0, EXPONENT),
                 cooled_value(2.0, 4.0, lam0, EXPONENT)]
        assert early[0] > early[1]
        lam_inf = cooling_factor(schedule, 1000)  # effectively zero
        late = [cooled_value(1.0, 1.0, lam_inf, EXPONENT),
                cooled_value(2.0, 4.0, lam_inf, EXPONENT)]
        assert late[1] > late[0]


class TestExpectedImprovement:
    def test_translation_invariance(self):
        space = small_space()
        rng = np.random.default_rng(3)
        cfgs = []
        seen = set()
        while len(cfgs) < 10:
            cfg = {p.name: p.values[rng.integers(p.count)] for p in space.params}
            if tuple(cfg.values()) not in seen:
                seen.add(tuple(cfg.values()))
                cfgs.append(cfg)
        X = [encode(space, c) for c in cfgs]
        y = np.array([synthetic_objective(space, c) for c in cfgs])
        m0 = fit(space, X, y, seed=0)
        m1 = fit(space, X, y + 100.0, seed=0)
        best = float(y.min())
        for _ in range(20):
            q = rng.uniform(size=space.encoded_dim)
            a = expected_improvement(m0, q, best)
            b = expected_improvement(m1, q, best + 100.0)
            assert a == pytest.approx(b, abs=1e-9)

    def test_zero_at_visited_incumbent(self):
        space = small_space()
        ctx, cfgs, y = fitted_context(space, seed=4)
        incumbent = cfgs[int(np.argmin(y))]
        assert expected_improvement(ctx.model, encode(space, incumbent),
                                    ctx.best_feasible) == 0.0

    def test_positive_at_unvisited_point(self):
        space = small_space()
        ctx, cfgs, _ = fitted_context(space, seed=5)
        visited = {tuple(c.values()) for c in cfgs}
        rng = np.random.default_rng(6)
        while True:
            cfg = {p.name: p.values[rng.integers(p.count)] for p in space.params}
            if tuple(cfg.values()) not in visited:
                break
        assert expected_improvement(ctx.model, encode(space, cfg),
                                    ctx.best_feasible) > 0.0


class TestAlphaCool:
    def test_snap_invariance(self):
        space = small_space()
        ctx, _, _ = fitted_context(space, seed=7)
        rng = np.random.default_rng(8)
        from aspo.space import snap
        for _ in range(20):
            u = rng.uniform(size=space.encoded_dim)
            assert alpha_cool(ctx, u) == alpha_cool(ctx, snap(space, u))

    def test_visited_points_never_attractive(self):
        # the cost floor must not amplify residual EI at stored designs
        space = small_space()
        ctx, cfgs, y = fitted_context(space, seed=9)
        incumbent = encode(space, cfgs[int(np.argmin(y))])
        assert alpha_cool(ctx, incumbent) == 0.0


class TestMaximizeAcquisition:
    def test_single_categorical_returns_predicted_best(self):
        space = ParameterSpace([
            ParameterDef("c", "categorical", ("a", "b", "x"), "a")])
        X = [encode(space, {"c": "a"}), encode(space, {"c": "x"})]
        model = fit(space, X, [5.0, 4.0],
                    init=KernelParams(np.full(3, 0.5), noise_variance=1e-6),
                    optimize=False)
        ctx = AcquisitionContext(model=model, best_feasible=4.0)
        got = maximize_acquisition(ctx, space, None, seed=0,
                                   warm_configs=[{"c": "a"}, {"c": "b"}],
                                   n_uniform=8)
        # "b" is the only unvisited configuration, hence the only EI mass
        assert got == {"c": "b"}

    def test_boom_candidates_always_feasible(self):
        bundle = assets.load_bundle("boom")
        space, tree = bundle.space, bundle.tree
        rng = np.random.default_rng(10)
        cfgs = []
        while len(cfgs) < 12:
            cfg = {p.name: p.values[rng.integers(p.count)] for p in space.params}
            if exact_configuration(tree, space, cfg):
                cfgs.append(cfg)
        X = [encode(space, c) for c in cfgs]
        y = rng.normal(size=len(cfgs))
        model = fit(space, X, y, seed=0)
        ctx = AcquisitionContext(model=model, best_feasible=float(y.min()))
        for seed in range(5):
            cfg = maximize_acquisition(ctx, space, tree, seed=seed)
            assert exact_configuration(tree, space, cfg)

    def test_matches_enumeration_on_small_space(self):
        space = small_space()
        tree = parse_constraints(
            {"all": [{"ineq": {"xa": "depth", "xb": "width"}}]}, space)
        hits = 0
        runs = 10
        for seed in range(runs):
            ctx, _, _ = fitted_context(space, seed=100 + seed)
            got = maximize_acquisition(ctx, space, tree, seed=seed)
            assert exact_configuration(tree, space, got)
            best_val = -np.inf
            for cfg in space.iter_configurations():
                if not exact_configuration(tree, space, cfg):
                    continue
                best_val = max(best_val, alpha_cool(ctx, encode(space, cfg)))
            if alpha_cool(ctx, encode(space, got)) >= best_val - 1e-9:
                hits += 1
        assert hits >= int(0.9 * runs)

    def test_rejection_fallback_when_unsatisfiable(self):
        space = small_space()
        # depth >= width + 100 is impossible on this grid
        tree = parse_constraints(
            {"all": [{"ineq": {"xa": "depth", "xb": "width", "t": -100}}]}, space)
        ctx, _, _ = fitted_context(space, seed=11)
        with pytest.raises(NoFeasibleCandidateError):
            maximize_acquisition(ctx, space, tree, seed=0, n_uniform=4)

    def test_deterministic(self):
        space = small_space()
        tree = parse_constraints(
            {"all": [{"ineq": {"xa": "depth", "xb": "width"}}]}, space)
        ctx, _, _ = fitted_context(space, seed=12)
        a = maximize_acquisition(ctx, space, tree, seed=5)
        b = maximize_acquisition(ctx, space, tree, seed=5)
        assert a == b


class TestMaximizeEiUnconstrained:
    def test_returns_some_configuration(self):
        space = small_space()
        ctx, _, _ = fitted_context(space, seed=13, with_store=False)
        cfg = maximize_ei_unconstrained(ctx.model, space, ctx.best_feasible,
                                        seed=0)
        space.validate(cfg)

    def test_ignores_constraints(self):
        # proposals may be infeasible: that is the point of the baseline
        bundle = assets.load_bundle("boom")
        space = bundle.space
        rng = np.random.default_rng(14)
        cfgs = []
        seen = set()
        while len(cfgs) < 10:
            cfg = {p.name: p.values[rng.integers(p.count)] for p in space.params}
            if tuple(cfg.values()) not in seen:
                seen.add(tuple(cfg.values()))
                cfgs.append(cfg)
        X = [encode(space, c) for c in cfgs]
        y = rng.normal(size=10)
        model = fit(space, X, y, seed=1)
        cfg = maximize_ei_unconstrained(model, space, float(y.min()), seed=2)
        space.validate(cfg)
