"""Scenario runs and fleet-size sweeps."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .activitygen import (ChainFrequencyTable, Facility, FacilityIndex, OdModel, TimeModels,
                          assign_activity_chain, available_modes, build_initial_plan, read_facilities,
                          write_plans)
from .config import ScenarioConfig
from .fleet import FleetConfig, write_fleet_tasks, write_requests
from .kernels import BACKEND
from .metrics import (KpiBundle, comparison_report, compute_kpis, write_charts, write_comparison,
                      write_kpi_tables)
from .mobsim import DayContext, run_day
from .model import ConfigError, DailyPlan
from .network import Network, TeleportConfig, TravelTimeField, read_network
from .replanning import (ConvergenceMonitor, PlanMemory, StrategyWeights, evolve_iteration, has_converged,
                         write_iteration_scores)
from .rng import derive_random, derive_rng
from .scenario import quadrant_depots, read_zones
from .scoring import (TasteFactorConfig, default_activity_params, load_scoring_params,
                      normalize_taste_factors, score_plan, taste_factors)
from .synthpop import (Population, default_controls, read_microdata, read_population, read_zone_targets,
                       synthesize_population, validate_population, write_population,
                       write_synthesis_report)

log = logging.getLogger(__name__)


@dataclass
class Inputs:
    """Everything a run needs besides the fleet size and taste toggle."""

    net: Network
    zones: dict
    facilities: FacilityIndex
    population: Population
    home_of: dict[int, int]  # household id -> home facility id
    plans: list[DailyPlan]
    fingerprint: str


def home_facility(household, zone_xy, jitter_m: float, fid: int, seed: int) -> Facility:
    rng = derive_random(seed, "home", household.household_id)
    x = zone_xy[0] + (2 * rng.random() - 1) * jitter_m
    y = zone_xy[1] + (2 * rng.random() - 1) * jitter_m
    return Facility(fid, household.zone_id, round(x, 1), round(y, 1), frozenset(["Home"]), 1.0)


def load_population(cfg: ScenarioConfig, out_dir: Path | None = None) -> Population:
    hh, pp = cfg.resolve("population_households"), cfg.resolve("population_persons")
    if hh is not None and pp is not None:
        pop = read_population(hh, pp)
    else:
        controls = default_controls()
        sample = read_microdata(cfg.resolve("microdata_households"), cfg.resolve("microdata_persons"))
        targets = read_zone_targets(cfg.resolve("zone_targets"), controls)
        pop, _ = synthesize_population(sample, targets, controls, cfg.seed,
                                       budget_factor=cfg.synthesis.budget_factor, plateau=cfg.synthesis.plateau)
        if out_dir is not None:
            write_population(out_dir, pop)
            write_synthesis_report(out_dir / "synthesis_report.csv", validate_population(pop, targets, controls))
    if cfg.population_fraction < 1.0:
        rng = derive_rng(cfg.seed, "sample_fraction")
        keep = rng.random(len(pop.households)) < cfg.population_fraction
        pop = Population([h for h, k in zip(pop.households, keep) if k])
    return pop


def prepare_inputs(cfg: ScenarioConfig, out_dir: Path | None = None) -> Inputs:
    net = read_network(cfg.resolve("nodes"), cfg.resolve("links"))
    zones = read_zones(cfg.resolve("zones"))
    facs = read_facilities(cfg.resolve("facilities"))
    od = OdModel.from_csv(cfg.resolve("od_model"))
    chains = ChainFrequencyTable.from_csv(cfg.resolve("chains"))
    times = TimeModels.from_csv(cfg.resolve("time_models"))
    pop = load_population(cfg, out_dir)
    base = max(f.facility_id for f in facs) + 1
    homes = {}
    for h in pop.households:
        if h.zone_id not in zones:
            raise ConfigError(f"household {h.household_id}: zone {h.zone_id} missing from zones.csv")
        homes[h.household_id] = home_facility(h, zones[h.zone_id][:2], cfg.activitygen.home_jitter_m,
                                              base + h.household_id, cfg.seed)
    index = FacilityIndex(facs + list(homes.values()))
    plans = []
    for h in pop.households:
        for p in h.members:
            rng = derive_random(cfg.seed, "activitygen", p.person_id)
            chain = assign_activity_chain(p, chains, rng)
            plans.append(build_initial_plan(p, h, chain, homes[h.household_id].facility_id, od, index, times,
                                            rng, cfg.activitygen.mode_seed_shares, cfg.activitygen.theta_m))
    return Inputs(net, zones, index, pop, {k: f.facility_id for k, f in homes.items()}, plans,
                  cfg.fingerprint())


def _facility_links(net: Network, index: FacilityIndex) -> dict[int, int]:
    mx, my = net.link_midpoints()
    ids = sorted(index.facilities)
    xs = np.array([index[f].x for f in ids])
    ys = np.array([index[f].y for f in ids])
    out = {}
    for lo in range(0, len(ids), 2048):
        d = np.hypot(xs[lo:lo + 2048, None] - mx[None, :], ys[lo:lo + 2048, None] - my[None, :])
        for fid, k in zip(ids[lo:lo + 2048], np.argmin(d, axis=1).tolist()):
            out[fid] = k
    return out


def build_context(cfg: ScenarioConfig, inputs: Inputs) -> DayContext:
    persons = inputs.population.persons
    cars_of = {h.household_id: h.cars for h in inputs.population.households}
    fleet = None
    if cfg.fleet.enabled:
        depots = cfg.fleet.depots or quadrant_depots(inputs.net)
        try:
            depot_idx = [inputs.net.link_index(d) for d in depots]
        except KeyError as e:
            raise ConfigError(f"fleet.depots: unknown link {e}") from None
        fleet = FleetConfig(cfg.fleet.size, depot_idx, cfg.fleet.ingress_sec, cfg.fleet.egress_sec,
                            cfg.fleet.dispatch_rule)
    m = cfg.mobsim
    return DayContext(
        net=inputs.net,
        persons=persons,
        household_cars=[cars_of[p.household_id] for p in persons],
        facility_link=_facility_links(inputs.net, inputs.facilities),
        facility_xy={fid: (f.x, f.y) for fid, f in inputs.facilities.facilities.items()},
        facility_parking={fid: inputs.zones[f.zone_id][2] for fid, f in inputs.facilities.facilities.items()},
        teleport=TeleportConfig(m.walk_speed_kmh, m.pt_speed_kmh, m.detour_factor, cfg.scoring.pt_fare_eur),
        fleet=fleet,
        stuck_time_sec=m.stuck_time_sec,
        stuck_penalty=m.stuck_penalty,
        cell_length_m=m.cell_length_m,
        infinite_capacity=m.infinite_capacity,
    )


@dataclass
class RunResult:
    kpis: KpiBundle
    iterations: int
    converged: bool
    innovation_stop: int
    score_rows: list = field(default_factory=list)
    out_dir: Path | None = None


def _taste_cfg(cfg: ScenarioConfig, persons, incomes) -> TasteFactorConfig:
    raw = TasteFactorConfig.from_mapping(cfg.taste_factors)
    if not raw.enabled:
        return raw
    return normalize_taste_factors(persons, incomes, raw)


def run_scenario(cfg: ScenarioConfig, out_dir=None, inputs: Inputs | None = None,
                 write_outputs: bool = True) -> RunResult:
    """Synthesize (or load), generate plans, iterate, and report KPIs."""
    out = Path(out_dir if out_dir is not None else cfg.base_dir / cfg.output_dir)
    if write_outputs:
        out.mkdir(parents=True, exist_ok=True)
    if inputs is None:
        inputs = prepare_inputs(cfg, out if write_outputs else None)
    ctx = build_context(cfg, inputs)
    persons = ctx.persons
    pids = [p.person_id for p in persons]
    hh_of = inputs.population.household_of()
    incomes = [hh_of[p.household_id].income_eur for p in persons]
    taste = _taste_cfg(cfg, persons, incomes)
    factors = [taste_factors(p, inc, taste) for p, inc in zip(persons, incomes)]
    params = load_scoring_params(cfg.resolve("scoring_params"),
                                 beta_money_per_eur=cfg.scoring.beta_money_per_eur,
                                 wait_multiplier=cfg.scoring.wait_multiplier,
                                 pt_fare_eur=cfg.scoring.pt_fare_eur,
                                 rt_constant_offset=cfg.scoring.rt_constant_offset,
                                 trust_sign_aware=cfg.scoring.trust_sign_aware)
    act_params = default_activity_params()
    rp = cfg.replanning
    max_it = cfg.run.max_iterations
    stop = int(math.floor(rp.innovation_stop_fraction * max_it))
    weights = StrategyWeights(rp.weights.select, rp.weights.mode_mutation, rp.weights.time_mutation, stop)
    memories = [PlanMemory([plan.copy()], max_plans=rp.max_plans) for plan in inputs.plans]
    modes = [available_modes(c, cfg.fleet.enabled) for c in ctx.household_cars]

    def avail(i, plan):
        return [modes[i]] * len(plan.legs)

    ttf = TravelTimeField(ctx._fftime, cfg.mobsim.tt_bin_sec, smoothing=cfg.mobsim.tt_smoothing)
    monitor = ConvergenceMonitor(cfg.convergence.window, cfg.convergence.epsilon)
    rows = []
    converged = False
    day = None
    it = 0
    for it in range(max_it):
        if it > 0:
            evolve_iteration(memories, pids, weights, it, avail, cfg.seed, rp.beta_select, rp.sigma_sec)
        plans = [m.current for m in memories]
        day = run_day(plans, ctx, ttf)
        ttf.update(*day.traversals)
        executed = np.empty(len(memories))
        for i, mem in enumerate(memories):
            s = score_plan(day.activities[i], day.legs[i], params, act_params, factors[i])
            executed[i] = s
            mem.record_score(s, rp.score_smoothing)
        best = float(np.mean([m.best_score() for m in memories])) if memories else 0.0
        worst = float(np.mean([m.worst_score() for m in memories])) if memories else 0.0
        mean_ex = float(executed.mean()) if len(executed) else 0.0
        rows.append((it, mean_ex, best, worst))
        monitor.append(mean_ex)
        log.info("iteration %d: executed %.4f best %.4f", it, mean_ex, best)
        if it > stop and has_converged(monitor):
            converged = True
            break
    iterations = it + 1

    rows_ev = day.events.rows()
    tasks = day.fleet.tasks if day.fleet else []
    requests = day.fleet.requests if day.fleet else []
    spc_of = {p.person_id: p.spc for p in persons}
    kpis = compute_kpis(rows_ev, requests, tasks, spc_of, cfg.fleet.size if cfg.fleet.enabled else 0,
                        inputs.fingerprint, taste.enabled, cfg.metrics.in_service_occupied_only)
    kpis.extra = {"iterations": iterations, "converged": converged}
    if write_outputs:
        write_plans(out / "plans_initial.csv", {p.person_id: pl for p, pl in zip(persons, inputs.plans)})
        write_iteration_scores(out / "iteration_scores.csv", rows)
        if cfg.output.events:
            day.events.write_csv(out / "events.csv")
        write_requests(out / "requests.csv", requests)
        write_fleet_tasks(out / "fleet_tasks.csv", tasks)
        write_kpi_tables(out, [kpis])
        (out / "kpis.json").write_text(kpis.to_json() + "\n", encoding="utf-8")
        if cfg.output.charts:
            write_charts(out, [kpis])
        write_manifest(out, cfg, {"iterations": iterations, "converged": converged, "innovationStop": stop})
    return RunResult(kpis, iterations, converged, stop, rows, out if write_outputs else None)


def write_manifest(out: Path, cfg: ScenarioConfig, extra: dict) -> None:
    manifest = {
        "configHash": cfg.hash(),
        "scenarioFingerprint": cfg.fingerprint(),
        "seed": cfg.seed,
        "versions": {"rtfleet": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "kernels": BACKEND},
        "config": cfg.to_dict(),
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _with(cfg: ScenarioConfig, fleet_size: int, taste_on: bool) -> ScenarioConfig:
    tf = dict(cfg.taste_factors)
    tf["enabled"] = taste_on
    return dataclasses.replace(cfg, fleet=dataclasses.replace(cfg.fleet, size=fleet_size, enabled=True),
                               taste_factors=tf)


def validate_fleet_sizes(sizes) -> list[int]:
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise ConfigError("fleet sizes must be positive")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("fleet sizes must be strictly increasing")
    return sizes


def run_sweep(cfg: ScenarioConfig, fleet_sizes, taste_mode: str = "both", out_dir=None,
              inputs: Inputs | None = None) -> dict[tuple[int, bool], KpiBundle]:
    """One run per (fleet size, taste toggle), all sharing one population and plan set."""
    sizes = validate_fleet_sizes(fleet_sizes)
    if taste_mode not in ("on", "off", "both"):
        raise ConfigError("taste mode must be on, off or both")
    toggles = {"on": [True], "off": [False], "both": [True, False]}[taste_mode]
    out = Path(out_dir if out_dir is not None else cfg.base_dir / cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if inputs is None:
        inputs = prepare_inputs(cfg, out)
    results: dict[tuple[int, bool], KpiBundle] = {}
    failure = None
    for on in toggles:
        for size in sizes:
            cell = out / f"fleet_{size}_taste_{'on' if on else 'off'}"
            try:
                r = run_scenario(_with(cfg, size, on), cell, inputs)
            except ConfigError:
                raise
            except Exception as e:  # abort this toggle, keep finished cells
                log.error("sweep cell %s failed: %s", cell.name, e)
                failure = e
                break
            results[(size, on)] = r.kpis
    bundles = [results[k] for k in sorted(results, key=lambda k: (not k[1], k[0]))]
    write_sweep_summary(out / "sweep_summary.csv", bundles)
    write_kpi_tables(out, bundles)
    if cfg.output.charts and bundles:
        write_charts(out, bundles)
    if taste_mode == "both":
        comp = [(s, comparison_report(results[(s, True)], results[(s, False)]))
                for s in sizes if (s, True) in results and (s, False) in results]
        write_comparison(out / "comparison.csv", comp)
    if failure is not None:
        raise RuntimeError(f"sweep incomplete: {failure}") from failure
    return results


def write_sweep_summary(path, bundles: list[KpiBundle]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["fleetSize", "tasteFactors", "rtShare", "served", "rejected", "meanWaitSec",
                    "inServiceAllDay", "rtUsers", "iterations", "converged"])
        for b in bundles:
            w.writerow([b.fleet_size, "on" if b.taste_enabled else "off", repr(b.rt_share), b.wait.served,
                        b.wait.rejected, "" if b.wait.mean is None else repr(b.wait.mean),
                        repr(b.peak_rates["allDay"]), sum(b.rt_users_by_spc.values()),
                        b.extra.get("iterations", ""), b.extra.get("converged", "")])
