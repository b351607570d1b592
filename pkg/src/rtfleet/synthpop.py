"""Fitness-based synthesis with multilevel controls.

Households are cloned from a microdata sample into each zone. A candidate
zone population is scored by the normalized absolute deviation of its
marginals (household-level and person-level control bins) from the zone
targets; a greedy swap search lowers that deviation.
"""
from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import SPCS, ConfigError, Household, Person
from .rng import derive_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlSpec:
    """A control on one attribute. ``bins`` are labels; ``edges`` (numeric
    attributes only) are the lower bounds of each bin, ascending."""

    level: str  # "household" | "person"
    attribute: str
    bins: tuple[str, ...]
    edges: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.level not in ("household", "person"):
            raise ConfigError(f"control {self.attribute}: bad level {self.level!r}")
        if len(set(self.bins)) != len(self.bins):
            raise ConfigError(f"control {self.attribute}: duplicate bins")
        if self.edges is not None and (
            len(self.edges) != len(self.bins) or list(self.edges) != sorted(self.edges)
        ):
            raise ConfigError(f"control {self.attribute}: edges must be ascending, one per bin")

    @property
    def name(self) -> str:
        return f"{self.level}.{self.attribute}"

    def bin_of(self, value) -> int:
        if self.edges is None:
            try:
                return self.bins.index(str(value))
            except ValueError:
                raise ConfigError(f"control {self.name}: value {value!r} has no bin") from None
        i = int(np.searchsorted(self.edges, value, side="right")) - 1
        if i < 0:
            raise ConfigError(f"control {self.name}: value {value!r} below first bin")
        return i


def default_controls() -> list[ControlSpec]:
    return [
        ControlSpec("household", "cars", ("0", "1", "2+"), (0, 1, 2)),
        ControlSpec("person", "age", ("<14", "14-44", "45-59", "60+"), (0, 14, 45, 60)),
        ControlSpec("person", "spc", SPCS),
    ]


@dataclass
class ZoneTargets:
    zone_id: int
    household_count: int
    targets: dict[str, dict[str, float]] = field(default_factory=dict)  # control name -> bin -> count

    def __post_init__(self):
        if self.household_count < 0:
            raise ConfigError(f"zone {self.zone_id}: negative household count")
        for name, bins in self.targets.items():
            if any(v < 0 for v in bins.values()):
                raise ConfigError(f"zone {self.zone_id}: negative target in {name}")


def _attr(obj, attribute):
    return getattr(obj, {"income": "income_eur"}.get(attribute, attribute))


def household_vector(hh: Household, controls: list[ControlSpec]) -> np.ndarray:
    """Contribution of one household to every control bin, concatenated."""
    parts = []
    for c in controls:
        v = np.zeros(len(c.bins))
        if c.level == "household":
            v[c.bin_of(_attr(hh, c.attribute))] += 1
        else:
            for p in hh.members:
                v[c.bin_of(_attr(p, c.attribute))] += 1
        parts.append(v)
    return np.concatenate(parts) if parts else np.zeros(0)


def target_vector(targets: ZoneTargets, controls: list[ControlSpec]) -> np.ndarray:
    parts = []
    for c in controls:
        bins = targets.targets.get(c.name)
        if bins is None or set(bins) != set(c.bins):
            raise ConfigError(f"zone {targets.zone_id}: bins of {c.name} do not match the control")
        parts.append(np.array([float(bins[b]) for b in c.bins]))
    return np.concatenate(parts) if parts else np.zeros(0)


def compute_fitness(synth_counts: dict[str, dict[str, float]], targets: ZoneTargets,
                    controls: list[ControlSpec]) -> float:
    """Sum of absolute bin deviations over all controls divided by total target."""
    num = 0.0
    den = 0.0
    for c in controls:
        s = synth_counts.get(c.name)
        t = targets.targets.get(c.name)
        if s is None or t is None or set(s) != set(c.bins) or set(t) != set(c.bins):
            raise ConfigError(f"fitness: bin sets of {c.name} do not match")
        for b in c.bins:
            num += abs(s[b] - t[b])
            den += t[b]
    return _normalize(num, den)


def _normalize(num: float, den: float) -> float:
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def counts_from_vector(vec: np.ndarray, controls: list[ControlSpec]) -> dict[str, dict[str, float]]:
    out, i = {}, 0
    for c in controls:
        out[c.name] = {b: float(vec[i + k]) for k, b in enumerate(c.bins)}
        i += len(c.bins)
    return out


@dataclass
class SynthesisResult:
    zone_id: int
    households: list[Household]
    fitness: float
    budget_exhausted: bool
    # (attempt, fitness after decision, accepted, forced)
    trace: list[tuple[int, float, bool, bool]] = field(default_factory=list)


def synthesize_zone(sample: list[Household], targets: ZoneTargets, controls: list[ControlSpec],
                    rng: np.random.Generator, budget_factor: int = 50, plateau: int = 100,
                    id_start: tuple[int, int] = (0, 0)) -> SynthesisResult:
    """Pick ``targets.household_count`` sample households for one zone.

    Starts from uniform draws with replacement, then tries ``budget_factor``
    swaps per household, accepting strict improvements. After ``plateau``
    consecutive rejections one proposal is accepted unconditionally. The
    best composition seen is returned; ``budget_exhausted`` is set when the
    search ended without an exact match.
    """
    n = targets.household_count
    if n == 0:
        return SynthesisResult(targets.zone_id, [], fitness_of_empty(targets, controls), False)
    if not sample:
        raise ConfigError(f"zone {targets.zone_id}: empty microdata sample with positive target")
    tgt = target_vector(targets, controls)
    den = float(tgt.sum())
    vecs = np.stack([household_vector(h, controls) for h in sample])
    chosen = rng.integers(0, len(sample), size=n)
    counts = vecs[chosen].sum(axis=0)
    fit = _normalize(float(np.abs(counts - tgt).sum()), den)
    best_fit, best = fit, chosen.copy()
    trace = [(0, fit, True, False)]
    rejects = 0
    attempts = budget_factor * n
    for k in range(1, attempts + 1):
        if best_fit == 0.0:
            break
        slot = int(rng.integers(n))
        cand = int(rng.integers(len(sample)))
        new_counts = counts - vecs[chosen[slot]] + vecs[cand]
        new_fit = _normalize(float(np.abs(new_counts - tgt).sum()), den)
        forced = False
        if new_fit < fit:
            accept = True
        elif rejects + 1 >= plateau:
            accept = forced = True
        else:
            accept = False
        if accept:
            chosen[slot] = cand
            counts, fit = new_counts, new_fit
            rejects = 0
            if fit < best_fit:
                best_fit, best = fit, chosen.copy()
        else:
            rejects += 1
        trace.append((k, fit, accept, forced))
    exhausted = best_fit > 0.0
    if exhausted:
        log.debug("zone %s: budget exhausted at fitness %.4f", targets.zone_id, best_fit)
    hh_id, p_id = id_start
    out = []
    for idx in best:
        src = sample[int(idx)]
        clone = copy.deepcopy(src)
        clone.household_id = hh_id
        clone.zone_id = targets.zone_id
        for p in clone.members:
            p.person_id = p_id
            p.household_id = hh_id
            p.zone_id = targets.zone_id
            p_id += 1
        hh_id += 1
        out.append(clone)
    return SynthesisResult(targets.zone_id, out, best_fit, exhausted, trace)


def fitness_of_empty(targets: ZoneTargets, controls: list[ControlSpec]) -> float:
    tgt = target_vector(targets, controls)
    return _normalize(float(np.abs(tgt).sum()), float(tgt.sum()))


@dataclass
class Population:
    households: list[Household]

    @property
    def persons(self) -> list[Person]:
        return [p for h in self.households for p in h.members]

    def household_of(self) -> dict[int, Household]:
        return {h.household_id: h for h in self.households}


def synthesize_population(sample: list[Household], zone_targets: list[ZoneTargets],
                          controls: list[ControlSpec], seed: int, **kw) -> tuple[Population, list[SynthesisResult]]:
    """Synthesize every zone with its own RNG stream keyed by ``(seed, zone)``.

    Zones are processed in ascending zone id so ids are stable; the result is
    independent of the order of ``zone_targets``.
    """
    ids = [z.zone_id for z in zone_targets]
    if len(set(ids)) != len(ids):
        raise ConfigError("zone ids must be unique")
    households, results = [], []
    hh_id = p_id = 0
    for zt in sorted(zone_targets, key=lambda z: z.zone_id):
        rng = derive_rng(seed, "synthpop", zt.zone_id)
        try:
            res = synthesize_zone(sample, zt, controls, rng, id_start=(hh_id, p_id), **kw)
        except ConfigError as e:
            raise ConfigError(f"zone {zt.zone_id}: {e}") from e
        results.append(res)
        households.extend(res.households)
        hh_id += len(res.households)
        p_id += sum(len(h.members) for h in res.households)
    return Population(households), results


@dataclass
class ZoneReport:
    zone_id: int
    fitness: float
    max_rel_error: float
    rel_errors: dict[str, float]  # "control:bin" -> relative error


def validate_population(population: Population, zone_targets: list[ZoneTargets],
                        controls: list[ControlSpec]) -> list[ZoneReport]:
    by_zone: dict[int, list[Household]] = {}
    for h in population.households:
        by_zone.setdefault(h.zone_id, []).append(h)
    out = []
    for zt in sorted(zone_targets, key=lambda z: z.zone_id):
        hhs = by_zone.get(zt.zone_id, [])
        vec = sum((household_vector(h, controls) for h in hhs), np.zeros(len(target_vector(zt, controls))))
        counts = counts_from_vector(vec, controls)
        fit = compute_fitness(counts, zt, controls)
        rel = {}
        for c in controls:
            for b in c.bins:
                t = zt.targets[c.name][b]
                s = counts[c.name][b]
                rel[f"{c.name}:{b}"] = abs(s - t) / t if t > 0 else (0.0 if s == 0 else math.inf)
        out.append(ZoneReport(zt.zone_id, fit, max(rel.values(), default=0.0), rel))
    return out


# ---------------------------------------------------------------------------
# files


def read_microdata(households_csv: str | Path, persons_csv: str | Path) -> list[Household]:
    hhs: dict[int, Household] = {}
    with open(households_csv, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            hid = int(row["householdId"])
            hhs[hid] = Household(hid, float(row["incomeEur"]), int(row["cars"]), [],
                                 int(row.get("zoneId") or -1))
            if hhs[hid].income_eur <= 0 or hhs[hid].cars < 0:
                raise ConfigError(f"household {hid}: income must be > 0 and cars >= 0")
    with open(persons_csv, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            hid = int(row["householdId"])
            if hid not in hhs:
                raise ConfigError(f"person {row['personId']}: unknown household {hid}")
            try:
                p = Person(int(row["personId"]), hid, int(row["age"]), row["sex"], row["spc"],
                           int(row.get("zoneId") or -1))
            except ValueError as e:
                raise ConfigError(str(e)) from e
            hhs[hid].members.append(p)
    out = [h for h in hhs.values() if h.members]
    if len(out) != len(hhs):
        raise ConfigError("households without members in microdata")
    return out


def read_zone_targets(path: str | Path, controls: list[ControlSpec]) -> list[ZoneTargets]:
    zones: dict[int, ZoneTargets] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            zid = int(row["zoneId"])
            zt = zones.setdefault(zid, ZoneTargets(zid, int(row["householdCount"])))
            zt.targets.setdefault(row["control"], {})[row["bin"]] = float(row["target"])
    for zt in zones.values():
        for c in controls:
            target_vector(zt, controls)  # raises on mismatch
    return [zones[k] for k in sorted(zones)]


def write_zone_targets(path: str | Path, zone_targets: list[ZoneTargets], controls: list[ControlSpec]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["zoneId", "householdCount", "control", "bin", "target"])
        for zt in zone_targets:
            for c in controls:
                for b in c.bins:
                    w.writerow([zt.zone_id, zt.household_count, c.name, b, _num(zt.targets[c.name][b])])


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_population(out_dir: str | Path, population: Population, prefix: str = "population") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{prefix}_households.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["householdId", "incomeEur", "cars", "zoneId"])
        for h in population.households:
            w.writerow([h.household_id, _num(h.income_eur), h.cars, h.zone_id])
    with open(out_dir / f"{prefix}_persons.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["personId", "householdId", "age", "sex", "spc", "zoneId"])
        for h in population.households:
            for p in h.members:
                w.writerow([p.person_id, p.household_id, p.age, p.sex, p.spc, p.zone_id])


def read_population(households_csv, persons_csv) -> Population:
    return Population(read_microdata(households_csv, persons_csv))


def write_synthesis_report(path: str | Path, reports: list[ZoneReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["zoneId", "fitness", "maxRelError", "bin", "relError"])
        for r in reports:
            for key, e in r.rel_errors.items():
                w.writerow([r.zone_id, f"{r.fitness:.6f}", f"{r.max_rel_error:.6f}", key, f"{e:.6f}"])
