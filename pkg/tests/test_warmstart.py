import itertools

import numpy as np
import pytest

from aspo import assets
from aspo.constraints import exact_configuration
from aspo.errors import InfeasibleSpaceError
from aspo.space import ParameterDef, ParameterSpace
from aspo.warmstart import generate_oa, pair_balance_deficit, warm_start_configs


def count_pairs(rows, a, b):
    counts = {}
    for row in rows:
        counts[(row[a], row[b])] = counts.get((row[a], row[b]), 0) + 1
    return counts


class TestGenerateOA:
    def test_three_level_four_factor_is_exact(self):
        oa = generate_oa((3, 3, 3, 3), seed=0)
        assert oa.rows.shape == (9, 4)
        assert oa.exact
        # brute-force pair coverage: every ordered pair exactly once
        for a, b in itertools.combinations(range(4), 2):
            counts = count_pairs(oa.rows, a, b)
            assert len(counts) == 9
            assert set(counts.values()) == {1}

    def test_two_level_three_factor_is_exact(self):
        oa = generate_oa((2, 2, 2), seed=0)
        assert oa.rows.shape == (4, 3)
        assert oa.exact
        for a, b in itertools.combinations(range(3), 2):
            counts = count_pairs(oa.rows, a, b)
            assert len(counts) == 4
            assert set(counts.values()) == {1}

    def test_single_factor_degenerate(self):
        oa = generate_oa((5,), seed=0)
        assert oa.rows.shape == (5, 1)
        assert sorted(oa.rows[:, 0]) == [0, 1, 2, 3, 4]
        assert oa.exact

    def test_mixed_levels_cover_all_values(self):
        oa = generate_oa((2, 3, 4), seed=1)
        for col, count in enumerate((2, 3, 4)):
            assert set(oa.rows[:, col]) == set(range(count))

    def test_mixed_levels_flagged_by_verifier(self):
        oa = generate_oa((2, 3, 4), seed=1)
        assert oa.exact == (pair_balance_deficit(oa.rows, oa.levels) == 0)

    def test_collapsed_columns_nearly_balanced(self):
        # each column's level counts may differ by at most the collapse group
        # size difference times the row multiplicity
        oa = generate_oa((2, 4, 6, 6, 5), seed=3)
        n = len(oa.rows)
        for col, count in enumerate((2, 4, 6, 6, 5)):
            _, freq = np.unique(oa.rows[:, col], return_counts=True)
            assert len(freq) == count
            assert freq.min() >= n // count // 2

    def test_deterministic_per_seed(self):
        a = generate_oa((2, 3, 4, 6), seed=9)
        b = generate_oa((2, 3, 4, 6), seed=9)
        assert np.array_equal(a.rows, b.rows)

    def test_levels_in_range(self):
        oa = generate_oa((4, 6, 2, 3, 5, 6, 6, 3, 5, 6), seed=4)
        for col, count in enumerate(oa.levels):
            assert oa.rows[:, col].min() >= 0
            assert oa.rows[:, col].max() < count


class TestWarmStartConfigs:
    def test_boom_budget_ten(self):
        bundle = assets.load_bundle("boom")
        configs = warm_start_configs(bundle.space, bundle.tree, seed=0, budget=10)
        assert len(configs) == 10
        keys = {tuple(c[p.name] for p in bundle.space.params) for c in configs}
        assert len(keys) == 10
        for cfg in configs:
            assert exact_configuration(bundle.tree, bundle.space, cfg)

    def test_unconstrained_two_by_two_full_factorial(self):
        space = ParameterSpace([
            ParameterDef("a", "ordinal", (0, 1), 0),
            ParameterDef("b", "ordinal", (0, 1), 0),
        ])
        configs = warm_start_configs(space, None, seed=0, budget=4)
        assert len(configs) == 4
        assert len({(c["a"], c["b"]) for c in configs}) == 4

    def test_budget_one_takes_first_feasible_row(self):
        space = ParameterSpace([
            ParameterDef("a", "ordinal", (0, 1, 2), 0),
            ParameterDef("b", "ordinal", (0, 1, 2), 0),
        ])
        oa_first = generate_oa((3, 3), seed=5).rows[0]
        configs = warm_start_configs(space, None, seed=5, budget=1)
        assert configs == [{"a": int(oa_first[0]), "b": int(oa_first[1])}]

    def test_deterministic(self):
        bundle = assets.load_bundle("boom")
        a = warm_start_configs(bundle.space, bundle.tree, seed=3, budget=12)
        b = warm_start_configs(bundle.space, bundle.tree, seed=3, budget=12)
        assert a == b

    def test_infeasible_space_raises(self):
        from aspo.constraints import Conj, Inequality
        space = ParameterSpace([
            ParameterDef("a", "ordinal", (1, 2), 1),
            ParameterDef("b", "ordinal", (5, 6), 5),
        ])
        impossible = Conj((Inequality(1.0, "a", 1.0, "b", 0.0),))  # a >= b never
        with pytest.raises(InfeasibleSpaceError):
            warm_start_configs(space, impossible, seed=0, budget=1)

    def test_top_up_used_when_rows_run_out(self):
        # 2-parameter space has a 4-row array; budget 6 forces sampling
        space = ParameterSpace([
            ParameterDef("a", "ordinal", (0, 1, 2), 0),
            ParameterDef("b", "ordinal", (0, 1, 2), 0),
        ])
        configs = warm_start_configs(space, None, seed=0, budget=9)
        assert len(configs) == 9
        assert len({(c["a"], c["b"]) for c in configs}) == 9
