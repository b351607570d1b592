"""Plan memory, logit selection, mutations and convergence detection."""
import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtfleet.model import Activity, ConfigError, DailyPlan, Leg
from rtfleet.replanning import (
    ConvergenceMonitor, PlanMemory, StrategyWeights, end_time_shift, evolve_iteration, has_converged,
    logit_probabilities, mutate_end_times, mutate_mode, select_plan, write_iteration_scores,
)


def plan(ends=(8 * 3600.0, 17 * 3600.0), modes=None, score=None):
    acts = [Activity("Home", 1, ends[0])]
    acts += [Activity("Work", 2, e) for e in ends[1:]]
    acts.append(Activity("Home", 1))
    modes = modes or ["walk"] * (len(acts) - 1)
    return DailyPlan(acts, [Leg(m) for m in modes], score)


def scored(*scores):
    return PlanMemory([plan(ends=(3600.0 * (i + 1), 80000.0), score=s) for i, s in enumerate(scores)])


class TestWeights:
    def test_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            StrategyWeights(0.5, 0.1, 0.1)

    def test_switch_off(self):
        w = StrategyWeights(innovation_stop_iteration=10)
        assert w.active(10) == (0.8, 0.1, 0.1)
        assert w.active(11) == (1.0, 0.0, 0.0)


class TestSelection:
    def test_single_plan(self):
        assert select_plan(scored(3.0), 1.0, random.Random(0)) == 0

    def test_equal_scores(self):
        rng = random.Random(1)
        c = Counter(select_plan(scored(2.0, 2.0), 1.0, rng) for _ in range(10_000))
        assert abs(c[0] / 10_000 - 0.5) <= 0.02

    def test_log_three_gap(self):
        assert logit_probabilities([math.log(3), 0.0], 1.0) == pytest.approx([0.75, 0.25])
        rng = random.Random(2)
        c = Counter(select_plan(scored(math.log(3), 0.0), 1.0, rng) for _ in range(10_000))
        assert abs(c[0] / 10_000 - 0.75) <= 0.02

    def test_unscored(self):
        with pytest.raises(ValueError):
            select_plan(PlanMemory([plan(), plan(modes=["pt", "pt"])]), 1.0, random.Random(0))

    @given(st.lists(st.floats(-500, 500), min_size=1, max_size=6), st.floats(0.1, 5))
    def test_probabilities_sum_to_one(self, scores, beta):
        p = logit_probabilities(scores, beta)
        assert sum(p) == pytest.approx(1.0)
        assert p[scores.index(max(scores))] == max(p)


class TestModeMutation:
    def test_only_alternative(self):
        p = DailyPlan([Activity("Home", 1, 100.0), Activity("Home", 1)], [Leg("walk")])
        assert mutate_mode(p, [("walk", "pt")], random.Random(0)).legs[0].mode == "pt"

    def test_carless_never_drives(self):
        rng = random.Random(3)
        p = plan(modes=["walk", "pt"])
        for _ in range(10_000):
            child = mutate_mode(p, [("pt", "walk", "robotaxi")] * 2, rng)
            assert all(leg.mode != "car" for leg in child.legs)

    @given(st.integers(0, 10_000))
    def test_exactly_one_leg_changes(self, seed):
        p = plan(ends=(3600.0, 7200.0, 9000.0), modes=["walk", "pt", "car"])
        child = mutate_mode(p, [("car", "pt", "walk")] * 3, random.Random(seed))
        assert sum(a != b for a, b in zip(p.legs, child.legs)) == 1
        assert child.activities == p.activities and child.score is None


class TestTimeMutation:
    def test_single_activity(self):
        p = DailyPlan([Activity("Home", 1)], [])
        assert mutate_end_times(p, 1800, random.Random(0)).key() == p.key()

    def test_clamped_to_predecessor(self):
        p = plan(ends=(3600.0, 4000.0))

        class Down(random.Random):
            def random(self):
                return 0.99  # picks the last non-final activity

            def gauss(self, mu, sigma):
                return -10_000.0

        child = mutate_end_times(p, 1800, Down())
        assert child.activities[1].end_time == 3600.0 + 300.0

    def test_shift_statistics(self):
        rng = random.Random(4)
        x = np.array([end_time_shift(1800.0, rng) for _ in range(10_000)])
        assert abs(x.mean()) <= 60
        assert abs(x.std() - 1800) <= 0.15 * 1800

    @given(st.integers(0, 10_000), st.floats(60, 7200))
    def test_stays_valid_with_gaps(self, seed, sigma):
        p = plan(ends=(7 * 3600.0, 12 * 3600.0, 13 * 3600.0))
        child = mutate_end_times(p, sigma, random.Random(seed))
        child.validate()
        ends = [a.end_time for a in child.activities[:-1]]
        assert all(b - a >= 300 for a, b in zip(ends, ends[1:]))
        assert 300 <= ends[0] and ends[-1] <= 86400 - 300
        assert sum(a != b for a, b in zip(p.activities, child.activities)) <= 1


class TestMemory:
    def test_capacity_evicts_worst(self):
        mem = PlanMemory([plan(ends=(3600.0 * (i + 1), 80000.0), score=float(i)) for i in range(5)])
        mem.selected = 4
        assert mem.add(plan(ends=(30000.0, 80000.0)))
        assert len(mem.plans) == 5
        assert min(p.score for p in mem.plans if p.score is not None) == 1.0
        assert mem.current.score is None

    def test_duplicate_selects_existing(self):
        mem = scored(1.0, 2.0)
        assert not mem.add(plan(ends=(3600.0, 80000.0)))
        assert mem.selected == 0 and len(mem.plans) == 2

    def test_score_smoothing(self):
        mem = scored(4.0)
        mem.record_score(8.0, 0.5)
        assert mem.current.score == 6.0

    @given(st.lists(st.integers(0, 30), min_size=1, max_size=40))
    def test_never_exceeds_capacity(self, genes):
        mem = PlanMemory([plan(score=0.0)], max_plans=5)
        for g in genes:
            mem.add(plan(ends=(3600.0 + g, 80000.0)))
            chosen = mem.current
            mem.record_score(float(g))
            assert len(mem.plans) <= 5 and mem.current is chosen


class TestEvolve:
    def memories(self, n=50):
        return [PlanMemory([plan(ends=(3600.0 * (k + 1), 80000.0), score=float(k)) for k in range(5)])
                for _ in range(n)]

    def avail(self, i, p):
        return [("walk", "pt")] * len(p.legs)

    def test_pure_selection(self):
        mems = self.memories()
        before = [[p.key() for p in m.plans] for m in mems]
        st_ = evolve_iteration(mems, list(range(50)), StrategyWeights(1.0, 0.0, 0.0), 1, self.avail, seed=1)
        assert st_.new_plans == 0
        assert [[p.key() for p in m.plans] for m in mems] == before

    def test_mutation_at_capacity(self):
        mems = self.memories()
        evolve_iteration(mems, list(range(50)), StrategyWeights(0.0, 1.0, 0.0), 1, self.avail, seed=1)
        assert all(len(m.plans) == 5 for m in mems)
        assert all(min(p.score for p in m.plans if p.score is not None) == 1.0 for m in mems)

    def test_after_innovation_stop(self):
        mems = self.memories()
        w = StrategyWeights(0.0, 1.0, 0.0, innovation_stop_iteration=3)
        assert evolve_iteration(mems, list(range(50)), w, 4, self.avail, seed=1).new_plans == 0

    def test_deterministic(self):
        a, b = self.memories(), self.memories()
        for mems in (a, b):
            evolve_iteration(mems, list(range(50)), StrategyWeights(), 2, self.avail, seed=9)
        assert [m.current.key() for m in a] == [m.current.key() for m in b]


class TestConvergence:
    def test_constant(self):
        m = ConvergenceMonitor(10, 1e-3, [5.0] * 20)
        assert has_converged(m)

    def test_short(self):
        assert not has_converged(ConvergenceMonitor(10, 1e-3, [5.0] * 19))

    def test_rising_one_percent(self):
        m = ConvergenceMonitor(10, 1e-3, [100 * 1.01 ** k for k in range(20)])
        assert not has_converged(m)

    def test_scores_file(self, tmp_path):
        write_iteration_scores(tmp_path / "s.csv", [(0, 1.5, 2.0, 1.0)])
        assert (tmp_path / "s.csv").read_text().splitlines() == [
            "iteration,meanExecuted,meanBest,meanWorst", "0,1.5,2.0,1.0"]
