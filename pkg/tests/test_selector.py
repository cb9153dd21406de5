"""Three-stage selection: worked examples, properties, oracle equivalence."""
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import oracle_models
from oracle import reference_selection

from cnnselect.budget import BudgetRange
from cnnselect.profiles import ModelProfile
from cnnselect.selector import (
    NoModelsError,
    SelectorConfig,
    exploration_range,
    fastest_select,
    greedy_select,
    select,
    stage1_base,
    stage2_explore,
    stage3_select,
)

INF = float("inf")
CFG = SelectorConfig()


def profile(name, top1, mean, std, top5=None):
    return ModelProfile(
        name=name,
        accuracy_top1=top1,
        accuracy_top5=top5 if top5 is not None else min(1.0, top1 + 0.1),
        mean_ms=mean,
        std_ms=std,
        observation_count=100,
    )


@st.composite
def random_stores(draw, max_models=8):
    n = draw(st.integers(2, max_models))
    profiles = []
    for i in range(n):
        top1 = draw(st.floats(0.0, 1.0, allow_nan=False))
        top5 = draw(st.floats(top1, 1.0, allow_nan=False))
        profiles.append(
            profile(
                f"m{i:02d}",
                top1,
                draw(st.floats(10.0, 200.0, allow_nan=False)),
                draw(st.floats(0.0, 20.0, allow_nan=False)),
                top5=top5,
            )
        )
    return tuple(profiles)


@st.composite
def random_budgets(draw):
    upper = draw(st.floats(-50.0, 300.0, allow_nan=False))
    threshold = draw(st.floats(0.0, 100.0, allow_nan=False))
    return BudgetRange.of(upper, upper - threshold)


class TestStage1:
    def test_worked_example(self, fixture_profiles):
        base = stage1_base(fixture_profiles, BudgetRange.of(60.0, 50.0), CFG)
        assert base.name == "MobileNetV1 1.0"
        # NasNet Mobile and InceptionV3 fail the lower-limit constraint.
        nasnet = next(p for p in fixture_profiles if p.name == "NasNet Mobile")
        assert nasnet.mean_ms - nasnet.std_ms >= 50.0
        inception = next(p for p in fixture_profiles if p.name == "InceptionV3")
        assert inception.mean_ms - inception.std_ms >= 50.0

    def test_unbounded_budget_picks_most_accurate(self, fixture_profiles):
        base = stage1_base(fixture_profiles, BudgetRange.of(INF, INF), CFG)
        assert base.name == "NasNet Large"

    def test_infeasible_budget_returns_fallback_marker(self, fixture_profiles):
        assert stage1_base(fixture_profiles, BudgetRange.of(1.0, 0.0), CFG) is None
        assert fastest_select(fixture_profiles).name == "MobileNetV1 0.25"

    def test_boundary_equality_is_infeasible(self):
        # Constraints are strict: sitting exactly on a limit excludes.
        p = profile("edge", 0.9, 50.0, 10.0)
        assert stage1_base([p], BudgetRange.of(60.0, 40.0), CFG) is None
        assert stage1_base([p], BudgetRange.of(60.001, 40.001), CFG) is p

    def test_tie_breaks_smaller_mean_then_name(self):
        a = profile("b-slow", 0.8, 40.0, 1.0)
        b = profile("a-slow", 0.8, 40.0, 1.0)
        c = profile("fast", 0.8, 30.0, 1.0)
        base = stage1_base([a, b, c], BudgetRange.of(100.0, 90.0), CFG)
        assert base.name == "fast"
        base = stage1_base([a, b], BudgetRange.of(100.0, 90.0), CFG)
        assert base.name == "a-slow"

    def test_empty_store(self):
        with pytest.raises(NoModelsError):
            stage1_base([], BudgetRange.of(10.0, 5.0), CFG)

    @given(stores=random_stores(), budget=random_budgets())
    def test_monotone_accuracy_transform_invariance(self, stores, budget):
        base = stage1_base(stores, budget, CFG)
        squeezed = tuple(
            ModelProfile(
                name=p.name,
                accuracy_top1=0.5 * p.accuracy_top1,
                accuracy_top5=0.5 * p.accuracy_top5,
                mean_ms=p.mean_ms,
                std_ms=p.std_ms,
                observation_count=p.observation_count,
            )
            for p in stores
        )
        transformed = stage1_base(squeezed, budget, CFG)
        if base is None:
            assert transformed is None
        else:
            assert transformed.name == base.name


class TestStage2:
    def test_worked_example(self, fixture_profiles):
        budget = BudgetRange.of(60.0, 50.0)
        base = stage1_base(fixture_profiles, budget, CFG)
        (low, high), eligible = stage2_explore(fixture_profiles, base, budget, CFG)
        assert low == pytest.approx(29.37)
        assert high == pytest.approx(73.07)
        assert {p.name for p in eligible} == {
            "MobileNetV1 1.0",
            "DenseNet",
            "NasNet Mobile",
            "InceptionV3",
        }
        # InceptionResNetV2 fails the upper-limit test.
        resnet = next(p for p in fixture_profiles if p.name == "InceptionResNetV2")
        assert resnet.mean_ms + resnet.std_ms >= 60.0

    def test_literal_reading_excludes_base(self, fixture_profiles):
        cfg = SelectorConfig(include_base_in_exploration=False)
        budget = BudgetRange.of(60.0, 50.0)
        base = stage1_base(fixture_profiles, budget, cfg)
        _, eligible = stage2_explore(fixture_profiles, base, budget, cfg)
        assert {p.name for p in eligible} == {
            "DenseNet",
            "NasNet Mobile",
            "InceptionV3",
        }

    def test_lower_limit_at_base_mean_degenerates_to_point(self):
        base = profile("base", 0.9, 30.0, 2.0)
        budget = BudgetRange.of(100.0, 30.0)
        (low, high), eligible = stage2_explore([base], base, budget, CFG)
        assert low == high == 32.0
        assert [p.name for p in eligible] == ["base"]

    def test_single_model_store(self):
        base = profile("only", 0.9, 30.0, 2.0)
        budget = BudgetRange.of(100.0, 90.0)
        _, eligible = stage2_explore([base], base, budget, CFG)
        assert [p.name for p in eligible] == ["only"]

    @given(
        mu=st.floats(1.0, 300.0, allow_nan=False),
        sigma=st.floats(0.0, 50.0, allow_nan=False),
        lower=st.floats(-100.0, 400.0, allow_nan=False),
    )
    def test_range_well_formed_in_both_branches(self, mu, sigma, lower):
        base = profile("b", 0.5, mu, sigma)
        low, high = exploration_range(base, BudgetRange.of(lower + 10.0, lower))
        assert low <= high


class TestStage3:
    def test_worked_example_utilities(self, fixture_profiles):
        budget = BudgetRange.of(60.0, 50.0)
        decision = select(fixture_profiles, budget, CFG, np.random.default_rng(0))
        assert decision.utilities["MobileNetV1 1.0"] == pytest.approx(1.007, abs=1e-3)
        assert decision.utilities["DenseNet"] == pytest.approx(10.33, abs=1e-2)
        assert decision.utilities["NasNet Mobile"] == pytest.approx(0.084, abs=1e-3)
        assert decision.utilities["InceptionV3"] == pytest.approx(0.413, abs=1e-3)
        assert decision.probabilities["DenseNet"] == pytest.approx(0.873, abs=1e-3)

    def test_singleton_eligible_set(self):
        p = profile("only", 0.7, 30.0, 1.0)
        decision = stage3_select([p], BudgetRange.of(60.0, 50.0), CFG)
        assert decision.probabilities == {"only": 1.0}
        assert decision.chosen == "only"

    def test_accuracy_scaling_cancels(self, fixture_profiles):
        budget = BudgetRange.of(60.0, 50.0)
        scaled = tuple(
            ModelProfile(
                name=p.name,
                accuracy_top1=p.accuracy_top1 * 0.25,
                accuracy_top5=p.accuracy_top5,
                mean_ms=p.mean_ms,
                std_ms=p.std_ms,
                observation_count=p.observation_count,
            )
            for p in fixture_profiles
        )
        d1 = select(fixture_profiles, budget, CFG, np.random.default_rng(0))
        d2 = select(scaled, budget, CFG, np.random.default_rng(0))
        for name, prob in d1.probabilities.items():
            assert d2.probabilities[name] == pytest.approx(prob, rel=1e-12)

    def test_all_zero_accuracies_degrade_to_uniform(self):
        models = [
            ModelProfile(
                name=f"z{i}", accuracy_top1=0.0, accuracy_top5=0.0,
                mean_ms=30.0 + i, std_ms=0.0, observation_count=0,
            )
            for i in range(4)
        ]
        decision = stage3_select(models, BudgetRange.of(100.0, 90.0), CFG)
        assert all(p == pytest.approx(0.25) for p in decision.probabilities.values())

    def test_epsilon_floors_denominator(self):
        # A model sitting exactly on the lower limit gets a finite utility.
        on_limit = profile("limit", 0.5, 50.0, 1.0)
        decision = stage3_select([on_limit], BudgetRange.of(60.0, 50.0), CFG)
        expected = 0.5 * (60.0 - 51.0) / CFG.denominator_epsilon_ms
        assert decision.utilities["limit"] == pytest.approx(expected)

    def test_precondition_enforced(self):
        too_slow = profile("slow", 0.5, 70.0, 5.0)
        with pytest.raises(ValueError, match="upper_ms"):
            stage3_select([too_slow], BudgetRange.of(60.0, 50.0), CFG)
        with pytest.raises(NoModelsError):
            stage3_select([], BudgetRange.of(60.0, 50.0), CFG)


class TestSelect:
    def test_walkthrough_shape(self):
        # Three models with A(m3) > A(m1) > A(m2); m3 feasible, so it
        # anchors exploration and m1 stays out of the eligible set.
        m1 = profile("m1", 0.7, 90.0, 5.0)
        m2 = profile("m2", 0.6, 72.0, 2.0)
        m3 = profile("m3", 0.9, 65.0, 3.0)
        budget = BudgetRange.of(100.0, 70.0)
        decision = select([m1, m2, m3], budget, CFG, np.random.default_rng(1))
        assert decision.base_model == "m3"
        assert set(decision.eligible_set) <= {"m2", "m3"}
        assert not decision.fallback

    def test_negative_budget_falls_back_to_fastest(self, fixture_profiles):
        decision = select(
            fixture_profiles, BudgetRange.of(-20.0, -50.0), CFG,
            np.random.default_rng(2),
        )
        assert decision.fallback
        assert decision.chosen == "MobileNetV1 0.25"
        assert decision.probabilities == {"MobileNetV1 0.25": 1.0}
        assert decision.base_model is None
        assert decision.eligible_set == ()

    def test_deterministic_given_seed(self, fixture_profiles):
        budget = BudgetRange.of(74.0, 44.0)
        d1 = select(fixture_profiles, budget, CFG, np.random.default_rng(99))
        d2 = select(fixture_profiles, budget, CFG, np.random.default_rng(99))
        assert d1 == d2

    def test_sampling_matches_probabilities(self, fixture_profiles):
        budget = BudgetRange.of(74.0, 44.0)
        rng = np.random.default_rng(5)
        reference = select(fixture_profiles, budget, CFG, rng).probabilities
        counts = Counter()
        rng = np.random.default_rng(6)
        n = 4000
        for _ in range(n):
            counts[select(fixture_profiles, budget, CFG, rng).chosen] += 1
        for name, prob in reference.items():
            assert counts[name] / n == pytest.approx(prob, abs=0.03)

    def test_decision_serializes(self, fixture_profiles):
        decision = select(
            fixture_profiles, BudgetRange.of(60.0, 50.0), CFG,
            np.random.default_rng(3),
        )
        trace = decision.to_dict()
        assert trace["chosen"] == decision.chosen
        assert trace["base_model"] == "MobileNetV1 1.0"
        assert sum(trace["probabilities"].values()) == pytest.approx(1.0)
        import json

        json.dumps(trace)  # must be JSON-serializable as-is

    @given(stores=random_stores(), budget=random_budgets(), seed=st.integers(0, 2**32))
    @settings(max_examples=200, deadline=None)
    def test_invariants_on_random_stores(self, stores, budget, seed):
        decision = select(stores, budget, CFG, np.random.default_rng(seed))
        by_name = {p.name: p for p in stores}
        chosen = by_name[decision.chosen]
        feasible_exists = any(
            p.mean_ms + p.std_ms < budget.upper_ms
            and p.mean_ms - p.std_ms < budget.lower_ms
            for p in stores
        )
        if feasible_exists:
            # Feasibility guarantee: the choice respects the soft limit.
            assert not decision.fallback
            assert chosen.mean_ms + chosen.std_ms < budget.upper_ms
            assert decision.chosen in decision.eligible_set
            assert sum(decision.probabilities.values()) == pytest.approx(1.0)
            assert all(p >= 0.0 for p in decision.probabilities.values())
            assert all(u >= 0.0 for u in decision.utilities.values())
        else:
            assert decision.fallback
            assert decision.chosen == fastest_select(stores).name

    @given(stores=random_stores(), budget=random_budgets(), seed=st.integers(0, 2**32))
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force_oracle(self, stores, budget, seed):
        decision = select(stores, budget, CFG, np.random.default_rng(seed))
        expected = reference_selection(
            oracle_models(stores), budget.upper_ms, budget.lower_ms
        )
        assert decision.fallback == expected["fallback"]
        if expected["fallback"]:
            assert decision.probabilities == expected["probabilities"]
            return
        assert decision.base_model == expected["base"]
        assert sorted(decision.eligible_set) == expected["eligible"]
        assert decision.exploration_range == pytest.approx(expected["t_e"], rel=1e-12)
        for name, value in expected["utilities"].items():
            assert decision.utilities[name] == pytest.approx(value, rel=1e-12, abs=1e-12)
        for name, value in expected["probabilities"].items():
            assert decision.probabilities[name] == pytest.approx(value, rel=1e-12, abs=1e-12)

    @given(stores=random_stores(), budget=random_budgets(), seed=st.integers(0, 2**32))
    @settings(max_examples=150, deadline=None)
    def test_utility_dominance(self, stores, budget, seed):
        decision = select(stores, budget, CFG, np.random.default_rng(seed))
        if decision.fallback:
            return
        by_name = {p.name: p for p in stores}
        eps = CFG.denominator_epsilon_ms
        members = [by_name[name] for name in decision.eligible_set]
        for p1 in members:
            for p2 in members:
                d1 = max(abs(budget.lower_ms - p1.mean_ms), eps)
                d2 = max(abs(budget.lower_ms - p2.mean_ms), eps)
                if (
                    p1.accuracy_top1 >= p2.accuracy_top1
                    and p1.mean_ms + p1.std_ms <= p2.mean_ms + p2.std_ms
                    and d1 <= d2
                ):
                    assert (
                        decision.utilities[p1.name]
                        >= decision.utilities[p2.name] - 1e-12
                    )


class TestBaselines:
    def test_greedy_picks_most_accurate_under_budget(self, fixture_profiles):
        chosen = greedy_select(fixture_profiles, BudgetRange.of(60.0, 60.0))
        assert chosen.name == "InceptionV3"

    def test_greedy_unbounded(self, fixture_profiles):
        chosen = greedy_select(fixture_profiles, BudgetRange.of(INF, INF))
        assert chosen.name == "NasNet Large"

    def test_greedy_falls_back_to_fastest(self, fixture_profiles):
        chosen = greedy_select(fixture_profiles, BudgetRange.of(10.0, 10.0))
        assert chosen.name == "MobileNetV1 0.25"

    def test_empty_store_errors(self):
        with pytest.raises(NoModelsError):
            greedy_select([], BudgetRange.of(10.0, 10.0))
        with pytest.raises(NoModelsError):
            fastest_select([])
        with pytest.raises(NoModelsError):
            select([], BudgetRange.of(10.0, 10.0))
