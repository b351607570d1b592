"""Co-evolutionary replanning: plan memories, mutation, logit selection."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .model import ConfigError, DailyPlan
from .rng import derive_random

MIN_ACTIVITY_SEC = 300.0
DAY_SEC = 86400.0


@dataclass
class StrategyWeights:
    select: float = 0.8
    mode_mutation: float = 0.1
    time_mutation: float = 0.1
    innovation_stop_iteration: int = 160

    def __post_init__(self):
        w = (self.select, self.mode_mutation, self.time_mutation)
        if min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
            raise ConfigError("strategy weights must be >= 0 and sum to 1")

    def active(self, iteration: int) -> tuple[float, float, float]:
        if iteration > self.innovation_stop_iteration:
            return (1.0, 0.0, 0.0)
        return (self.select, self.mode_mutation, self.time_mutation)


@dataclass
class PlanMemory:
    plans: list[DailyPlan]
    selected: int = 0
    max_plans: int = 5

    def __post_init__(self):
        if not self.plans:
            raise ValueError("plan memory needs at least one plan")

    @property
    def current(self) -> DailyPlan:
        return self.plans[self.selected]

    def add(self, plan: DailyPlan) -> bool:
        """Insert ``plan``, select it, and evict the worst scored plan on overflow.

        A plan identical to a memorized one selects that plan instead; returns
        whether anything was inserted.
        """
        key = plan.key()
        for i, p in enumerate(self.plans):
            if p.key() == key:
                self.selected = i
                return False
        self.plans.append(plan)
        self.selected = len(self.plans) - 1
        if len(self.plans) > self.max_plans:
            scored = [i for i, p in enumerate(self.plans) if i != self.selected and p.score is not None]
            pool = scored or [i for i in range(len(self.plans)) if i != self.selected]
            worst = min(pool, key=lambda i: (self.plans[i].score if self.plans[i].score is not None
                                             else -math.inf, -i))
            del self.plans[worst]
            if worst < self.selected:
                self.selected -= 1
        return True

    def record_score(self, score: float, smoothing: float = 0.5) -> None:
        plan = self.current
        plan.score = score if plan.score is None else (1 - smoothing) * plan.score + smoothing * score

    def best_score(self) -> float:
        return max(p.score for p in self.plans if p.score is not None)

    def worst_score(self) -> float:
        return min(p.score for p in self.plans if p.score is not None)


def logit_probabilities(scores, beta: float) -> list[float]:
    top = max(scores)
    w = [math.exp(beta * (s - top)) for s in scores]
    total = sum(w)
    return [x / total for x in w]


def select_plan(memory: PlanMemory, beta: float, rng) -> int:
    """Index chosen with probability proportional to ``exp(beta * (S_i - max S))``."""
    scores = [p.score for p in memory.plans]
    if any(s is None for s in scores):
        raise ValueError("cannot select among unscored plans")
    if len(scores) == 1:
        return 0
    probs = logit_probabilities(scores, beta)
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def mutate_mode(plan: DailyPlan, available_modes, rng) -> DailyPlan:
    """Give one leg a different available mode; legs without an alternative are skipped."""
    options = []
    for i, leg in enumerate(plan.legs):
        alts = [m for m in available_modes[i] if m != leg.mode]
        if alts:
            options.append((i, alts))
    if not options:
        return plan.copy()
    i, alts = options[int(rng.random() * len(options))]
    return plan.with_leg_mode(i, alts[int(rng.random() * len(alts))])


def end_time_shift(sigma: float, rng) -> float:
    return rng.gauss(0.0, sigma)


def mutate_end_times(plan: DailyPlan, sigma: float, rng) -> DailyPlan:
    """Shift one non-final planned end time, keeping every activity >= 5 minutes."""
    n = len(plan.activities)
    if n == 1:
        return plan.copy()
    i = int(rng.random() * (n - 1))
    ends = [a.end_time for a in plan.activities[:-1]]
    lo = (ends[i - 1] if i > 0 else 0.0) + MIN_ACTIVITY_SEC
    hi = ends[i + 1] - MIN_ACTIVITY_SEC if i + 1 < n - 1 else DAY_SEC - MIN_ACTIVITY_SEC
    new = float(round(ends[i] + end_time_shift(sigma, rng)))
    if lo > hi:
        return plan.copy()
    return plan.with_end_time(i, min(max(new, lo), hi))


@dataclass
class IterationStats:
    new_plans: int = 0
    strategies: dict = field(default_factory=lambda: {"select": 0, "mode_mutation": 0, "time_mutation": 0})


def evolve_iteration(memories: list[PlanMemory], person_ids: list[int], weights: StrategyWeights,
                     iteration: int, available_modes, seed: int, beta: float = 1.0,
                     sigma: float = 1800.0) -> IterationStats:
    """Choose every agent's plan for the next day, in place.

    ``available_modes(i, plan)`` lists the allowed modes per leg of agent
    ``i``. Each agent draws from its own stream keyed by
    ``(seed, personId, iteration)``.
    """
    w_sel, w_mode, _ = weights.active(iteration)
    stats = IterationStats()
    for i, mem in enumerate(memories):
        rng = derive_random(seed, "replan", person_ids[i], iteration)
        u = rng.random()
        if u < w_sel:
            mem.selected = select_plan(mem, beta, rng)
            stats.strategies["select"] += 1
            continue
        parent = mem.current
        if u < w_sel + w_mode:
            child = mutate_mode(parent, available_modes(i, parent), rng)
            stats.strategies["mode_mutation"] += 1
        else:
            child = mutate_end_times(parent, sigma, rng)
            stats.strategies["time_mutation"] += 1
        stats.new_plans += int(mem.add(child))
    return stats


@dataclass
class ConvergenceMonitor:
    window: int = 10
    epsilon: float = 1e-3
    history: list[float] = field(default_factory=list)

    def append(self, mean_executed: float) -> None:
        self.history.append(float(mean_executed))


def has_converged(monitor: ConvergenceMonitor) -> bool:
    W = monitor.window
    h = monitor.history
    if len(h) < 2 * W:
        return False
    last = sum(h[-W:]) / W
    prev = sum(h[-2 * W:-W]) / W
    return abs(last - prev) / max(abs(prev), 1.0) < monitor.epsilon


def write_iteration_scores(path, rows) -> None:
    """``rows`` of ``(iteration, meanExecuted, meanBest, meanWorst)``."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "meanExecuted", "meanBest", "meanWorst"])
        for it, ex, best, worst in rows:
            w.writerow([it, repr(float(ex)), repr(float(best)), repr(float(worst))])
