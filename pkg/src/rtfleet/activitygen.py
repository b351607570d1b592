"""Initial daily plans: activity chains, locations, times and seed modes."""
from __future__ import annotations

import bisect
import csv
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .model import (ACTIVITY_CODES, ACTIVITY_TYPES, CODE_OF, SPCS, Activity, ConfigError,
                    DailyPlan, Household, Leg, Person)

log = logging.getLogger(__name__)

DEFAULT_MODE_SEED_SHARES = {"car": 0.55, "pt": 0.15, "walk": 0.30}
MIN_GAP_SEC = 900.0
DAY_SEC = 86400.0


def parse_chain(code: str) -> tuple[str, ...]:
    try:
        chain = tuple(ACTIVITY_CODES[c] for c in code.strip().split("-"))
    except KeyError as e:
        raise ConfigError(f"unknown activity code {e} in chain {code!r}") from None
    if chain[0] != "Home" or chain[-1] != "Home":
        raise ConfigError(f"chain {code!r} must start and end with Home")
    return chain


def chain_code(chain) -> str:
    return "-".join(CODE_OF[a] for a in chain)


@dataclass
class ChainFrequencyTable:
    rows: dict[str, list[tuple[tuple[str, ...], float]]]

    def __post_init__(self):
        for spc, row in self.rows.items():
            total = sum(f for _, f in row)
            if abs(total - 1.0) > 1e-9:
                raise ConfigError(f"chain frequencies for {spc} sum to {total}, not 1")
        self._cum = {spc: np.cumsum([f for _, f in row]) for spc, row in self.rows.items()}

    @classmethod
    def from_csv(cls, path=None, normalize: bool = True) -> "ChainFrequencyTable":
        if path is None:
            text = resources.files("rtfleet").joinpath("data/chains.csv").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        raw: dict[str, list] = {}
        for row in csv.DictReader(text.splitlines()):
            raw.setdefault(row["spc"], []).append((parse_chain(row["chain"]), float(row["frequency"])))
        if normalize:
            for spc, row in raw.items():
                s = sum(f for _, f in row)
                raw[spc] = [(c, f / s) for c, f in row]
        return cls(raw)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["spc", "chain", "frequency"])
            for spc, row in self.rows.items():
                for chain, freq in row:
                    w.writerow([spc, chain_code(chain), repr(freq)])


def assign_activity_chain(person: Person, table: ChainFrequencyTable, rng) -> tuple[str, ...]:
    row = table.rows.get(person.spc)
    if row is None:
        raise ConfigError(f"no activity chain row for SPC {person.spc}")
    cum = table._cum[person.spc]
    i = bisect.bisect_right(cum, rng.random() * cum[-1])
    return row[min(i, len(row) - 1)][0]


# ---------------------------------------------------------------------------
# destinations and facilities


@dataclass
class OdModel:
    rows: dict[tuple[int, str], tuple[np.ndarray, np.ndarray]]  # -> (dest zones, cumulative probs)

    @classmethod
    def from_probabilities(cls, probs: dict[tuple[int, str], dict[int, float]]) -> "OdModel":
        rows = {}
        for key, row in probs.items():
            zones = np.array(sorted(row), dtype=np.int64)
            p = np.array([row[z] for z in zones], dtype=float)
            if abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
                raise ConfigError(f"OD row {key} must be a probability vector")
            rows[key] = (zones, np.cumsum(p))
        return cls(rows)

    @classmethod
    def from_csv(cls, path) -> "OdModel":
        probs: dict = {}
        with open(path, newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                key = (int(row["originZone"]), row["activityType"])
                probs.setdefault(key, {})[int(row["destZone"])] = float(row["prob"])
        # rows are stored rounded; renormalize
        for key, row in probs.items():
            s = sum(row.values())
            probs[key] = {z: v / s for z, v in row.items()}
        return cls.from_probabilities(probs)

    def probability(self, origin: int, atype: str, dest: int) -> float:
        zones, cum = self.rows[(origin, atype)]
        i = int(np.searchsorted(zones, dest))
        if i >= len(zones) or zones[i] != dest:
            return 0.0
        return float(cum[i] - (cum[i - 1] if i else 0.0))


def choose_destination_zone(origin_zone: int, atype: str, od: OdModel, rng, home_zone: int | None = None) -> int:
    if atype == "Home" and home_zone is not None:
        return home_zone
    row = od.rows.get((origin_zone, atype))
    if row is None:
        raise ConfigError(f"no OD row for origin {origin_zone}, activity {atype}")
    zones, cum = row
    i = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return int(zones[min(i, len(zones) - 1)])


@dataclass(frozen=True)
class Facility:
    facility_id: int
    zone_id: int
    x: float
    y: float
    types: frozenset
    size: float

    def __post_init__(self):
        if self.size <= 0:
            raise ConfigError(f"facility {self.facility_id}: size must be > 0")


class FacilityIndex:
    def __init__(self, facilities: list[Facility]):
        self.facilities = {f.facility_id: f for f in facilities}
        self.by_zone_type: dict[tuple[int, str], list[Facility]] = {}
        self.by_type: dict[str, list[Facility]] = {}
        for f in sorted(facilities, key=lambda f: f.facility_id):
            for t in sorted(f.types):
                self.by_zone_type.setdefault((f.zone_id, t), []).append(f)
                self.by_type.setdefault(t, []).append(f)
        self._arrays = {}

    def __getitem__(self, fid: int) -> Facility:
        return self.facilities[fid]

    def candidates(self, zone: int, atype: str):
        key = (zone, atype)
        if key not in self._arrays:
            fs = self.by_zone_type.get(key, [])
            self._arrays[key] = (
                fs,
                np.array([f.x for f in fs]),
                np.array([f.y for f in fs]),
                np.array([f.size for f in fs]),
            )
        return self._arrays[key]


def gravity_weights(sizes, dists, theta: float) -> np.ndarray:
    """Normalized ``size * exp(-d / theta)``; shifted for numerical safety."""
    d = np.asarray(dists, dtype=float)
    w = np.asarray(sizes, dtype=float) * np.exp(-(d - d.min()) / theta)
    return w / w.sum()


def choose_facility(zone: int, atype: str, facilities: FacilityIndex, origin: tuple[float, float],
                    theta: float, rng) -> int:
    fs, xs, ys, sizes = facilities.candidates(zone, atype)
    if not fs:
        pool = facilities.by_type.get(atype)
        if not pool:
            raise ConfigError(f"no facility serves {atype}")
        nearest = min(pool, key=lambda f: (math.hypot(f.x - origin[0], f.y - origin[1]), f.facility_id))
        log.warning("no %s facility in zone %s; using nearest facility %s", atype, zone, nearest.facility_id)
        return nearest.facility_id
    if len(fs) == 1:
        return fs[0].facility_id
    p = gravity_weights(sizes, np.hypot(xs - origin[0], ys - origin[1]), theta)
    i = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return fs[min(i, len(fs) - 1)].facility_id


# ---------------------------------------------------------------------------
# time models


@dataclass
class EmpiricalDistribution:
    starts: np.ndarray
    ends: np.ndarray
    weights: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=float)
        self.ends = np.asarray(self.ends, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if (self.weights < 0).any() or self.weights.sum() <= 0:
            raise ConfigError("distribution weights must be >= 0 with a positive sum")
        if (np.diff(self.starts) < 0).any() or (self.ends <= self.starts).any():
            raise ConfigError("distribution bins must be sorted and non-empty")
        self._cum = np.cumsum(self.weights) / self.weights.sum()

    def mass_between(self, lo: float, hi: float) -> float:
        """Exact probability of a sample falling in ``[lo, hi)``."""
        overlap = np.clip(np.minimum(self.ends, hi) - np.maximum(self.starts, lo), 0, None)
        frac = overlap / (self.ends - self.starts)
        return float((frac * self.weights).sum() / self.weights.sum())


def sample_from_distribution(dist: EmpiricalDistribution, rng=None, u: tuple[float, float] | None = None) -> float:
    """Inverse-CDF bin choice, uniform jitter inside the bin."""
    u1, u2 = u if u is not None else (rng.random(), rng.random())
    i = min(bisect.bisect_right(dist._cum, u1), len(dist._cum) - 1)
    while dist.weights[i] == 0:  # only reachable through u1 == a cumulative boundary
        i += 1
    return float(dist.starts[i] + u2 * (dist.ends[i] - dist.starts[i]))


class TimeModels:
    def __init__(self, dists: dict[tuple[str, str], EmpiricalDistribution]):
        self.dists = dists

    def get(self, atype: str, kind: str) -> EmpiricalDistribution:
        try:
            return self.dists[(atype, kind)]
        except KeyError:
            raise ConfigError(f"no {kind} model for {atype}") from None

    @classmethod
    def from_csv(cls, path=None) -> "TimeModels":
        if path is None:
            text = resources.files("rtfleet").joinpath("data/time_models.csv").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        raw: dict = {}
        for row in csv.DictReader(text.splitlines()):
            key = (row["activityType"], row["kind"])
            raw.setdefault(key, []).append(
                (float(row["binStartSec"]), float(row["binEndSec"]), float(row["weight"])))
        dists = {}
        for key, rows in raw.items():
            rows.sort()
            a = np.array(rows)
            dists[key] = EmpiricalDistribution(a[:, 0], a[:, 1], a[:, 2])
        return cls(dists)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["activityType", "kind", "binStartSec", "binEndSec", "weight"])
            for (atype, kind), d in self.dists.items():
                for s, e, wt in zip(d.starts, d.ends, d.weights):
                    w.writerow([atype, kind, int(s), int(e), f"{wt:.6f}"])


# ---------------------------------------------------------------------------
# plans


def available_modes(cars: int, robotaxi: bool = False) -> tuple[str, ...]:
    modes = ("car", "pt", "walk") if cars >= 1 else ("pt", "walk")
    return modes + ("robotaxi",) if robotaxi else modes


def draw_mode(shares: dict[str, float], cars: int, rng) -> str:
    allowed = [(m, w) for m, w in sorted(shares.items()) if w > 0 and (m != "car" or cars >= 1)]
    if not allowed:
        raise ConfigError("no available seed mode")
    total = sum(w for _, w in allowed)
    r = rng.random() * total
    acc = 0.0
    for m, w in allowed:
        acc += w
        if r < acc:
            return m
    return allowed[-1][0]


def plan_times(chain, times: TimeModels, rng, max_tries: int = 10) -> list[float]:
    """Planned end times of all but the final activity.

    The first out-of-home activity's start time is sampled; each later
    activity ends after a sampled duration. Draws reaching past midnight are
    retried, then activities are spaced at 15 minute gaps.
    """
    n = len(chain)
    if n == 1:
        return []
    for _ in range(max_tries):
        t = sample_from_distribution(times.get(chain[1], "startTime"), rng)
        ends = [t]
        for atype in chain[1:-1]:
            t = t + max(60.0, sample_from_distribution(times.get(atype, "duration"), rng))
            ends.append(t)
        if ends[-1] < DAY_SEC:
            return [float(round(e)) for e in ends]
    log.warning("chain %s: infeasible times after %d draws; spacing at 15 min", chain_code(chain), max_tries)
    start = min(ends[0], DAY_SEC - MIN_GAP_SEC * n)
    return [float(round(start + i * MIN_GAP_SEC)) for i in range(n - 1)]


def build_initial_plan(person: Person, household: Household, chain, home_facility: int, od: OdModel,
                       facilities: FacilityIndex, times: TimeModels, rng,
                       mode_seed_shares: dict[str, float] | None = None, theta: float = 2000.0) -> DailyPlan:
    shares = mode_seed_shares or DEFAULT_MODE_SEED_SHARES
    home = facilities[home_facility]
    fac_ids = [home_facility]
    anchors: dict[str, int] = {}
    prev = home
    for atype in chain[1:]:
        if atype == "Home":
            fid = home_facility
        elif atype in ("Work", "Study") and atype in anchors:
            fid = anchors[atype]
        else:
            zone = choose_destination_zone(prev.zone_id, atype, od, rng, home.zone_id)
            fid = choose_facility(zone, atype, facilities, (prev.x, prev.y), theta, rng)
            if atype in ("Work", "Study"):
                anchors[atype] = fid
        fac_ids.append(fid)
        prev = facilities[fid]
    ends = plan_times(chain, times, rng)
    acts = [Activity(a, f, ends[i] if i < len(ends) else None) for i, (a, f) in enumerate(zip(chain, fac_ids))]
    legs = [Leg(draw_mode(shares, household.cars, rng)) for _ in range(len(chain) - 1)]
    plan = DailyPlan(acts, legs)
    plan.validate()
    return plan


def write_plans(path, plans: dict[int, DailyPlan]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["personId", "elemIndex", "kind", "activityTypeOrMode", "facilityId", "plannedEndTimeSec"])
        for pid in sorted(plans):
            plan = plans[pid]
            k = 0
            for i, act in enumerate(plan.activities):
                end = "" if act.end_time is None else int(act.end_time)
                w.writerow([pid, k, "activity", act.type, act.facility_id, end])
                k += 1
                if i < len(plan.legs):
                    w.writerow([pid, k, "leg", plan.legs[i].mode, "", ""])
                    k += 1


def read_plans(path) -> dict[int, DailyPlan]:
    acts: dict[int, list] = {}
    legs: dict[int, list] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in sorted(csv.DictReader(f), key=lambda r: (int(r["personId"]), int(r["elemIndex"]))):
            pid = int(row["personId"])
            if row["kind"] == "activity":
                end = row["plannedEndTimeSec"]
                acts.setdefault(pid, []).append(
                    Activity(row["activityTypeOrMode"], int(row["facilityId"]), float(end) if end else None))
            else:
                legs.setdefault(pid, []).append(Leg(row["activityTypeOrMode"]))
    return {pid: DailyPlan(a, legs.get(pid, [])) for pid, a in acts.items()}


def read_facilities(path) -> list[Facility]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            types = frozenset(t for t in row["types"].split(";") if t)
            bad = types - set(ACTIVITY_TYPES)
            if bad:
                raise ConfigError(f"facility {row['facilityId']}: unknown types {sorted(bad)}")
            out.append(Facility(int(row["facilityId"]), int(row["zoneId"]), float(row["x"]), float(row["y"]),
                                types, float(row["size"])))
    return out


def write_facilities(path, facilities: list[Facility]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["facilityId", "zoneId", "x", "y", "types", "size"])
        for fac in facilities:
            w.writerow([fac.facility_id, fac.zone_id, f"{fac.x:.1f}", f"{fac.y:.1f}",
                        ";".join(sorted(fac.types)), f"{fac.size:.3f}"])


def write_od_model(path, probs: dict[tuple[int, str], dict[int, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["originZone", "activityType", "destZone", "prob"])
        for (o, t), row in sorted(probs.items()):
            for d, p in sorted(row.items()):
                w.writerow([o, t, d, f"{p:.10f}"])


# ---------------------------------------------------------------------------
# shipped defaults

_CHAINS = {
    "Employed": {
        "H-W-H": 40, "H": 6, "H-W-H-L-H": 6, "H-W-P-H": 5, "H-W-H-W-H": 5, "H-W-H-P-H": 4,
        "H-O-H": 3, "H-W-L-H": 3, "H-C-W-H": 3, "H-W-E-H": 3, "H-W-C-H": 2, "H-W-O-W-H": 2,
        "H-P-H": 2, "H-L-H": 2, "H-E-H": 2, "H-W-H-E-H": 2, "H-O-W-H": 2, "H-C-W-C-H": 2,
        "H-W-P-L-H": 2, "H-O-H-O-H": 2,
    },
    "Unemployed": {
        "H": 18, "H-P-H": 14, "H-L-H": 12, "H-E-H": 10, "H-O-H": 6, "H-P-H-L-H": 5, "H-C-H": 4,
        "H-L-P-H": 4, "H-E-P-H": 4, "H-W-H": 4, "H-P-E-H": 3, "H-L-H-L-H": 3, "H-C-H-C-H": 3,
        "H-E-H-P-H": 2, "H-P-L-H": 2, "H-S-H": 2, "H-L-E-H": 1, "H-O-P-H": 1, "H-P-H-P-H": 1, "H-E-L-H": 1,
    },
    "Retired": {
        "H": 20, "H-P-H": 18, "H-L-H": 14, "H-E-H": 10, "H-P-H-L-H": 6, "H-P-E-H": 5,
        "H-L-H-P-H": 4, "H-P-L-H": 4, "H-C-H": 3, "H-E-P-H": 3, "H-P-H-P-H": 3, "H-L-H-L-H": 2,
        "H-E-H-L-H": 2, "H-L-P-H": 1, "H-C-H-C-H": 1, "H-O-H": 1, "H-W-H": 1, "H-E-L-H": 1,
        "H-P-E-L-H": 0.5, "H-L-E-H": 0.5,
    },
    "Student14Plus": {
        "H-S-H": 46, "H-S-H-S-H": 8, "H-S-L-H": 8, "H": 6, "H-S-H-L-H": 6, "H-L-H": 4,
        "H-S-P-H": 4, "H-W-H": 3, "H-S-W-H": 2, "H-P-H": 2, "H-S-L-S-H": 2, "H-S-E-H": 2,
        "H-L-S-H": 1.5, "H-E-H": 1, "H-S-H-P-H": 1, "H-S-W-S-H": 0.5, "H-S-P-L-H": 1,
        "H-S-H-E-H": 0.5, "H-L-H-L-H": 0.5, "H-W-L-H": 0.5,
    },
    "Under14": {
        "H-S-H": 52, "H-S-H-S-H": 14, "H-S-L-H": 6, "H": 6, "H-L-H": 5, "H-S-H-L-H": 4,
        "H-S-P-H": 2, "H-P-H": 2, "H-S-E-H": 1.5, "H-E-H": 1, "H-S-L-S-H": 1, "H-L-S-H": 1,
        "H-S-H-P-H": 1, "H-S-H-E-H": 0.5, "H-L-H-L-H": 0.5, "H-S-P-L-H": 0.5, "H-S-E-L-H": 0.5,
        "H-P-L-H": 0.5, "H-E-S-H": 0.3, "H-S-L-P-H": 0.2,
    },
    "Homemaker": {
        "H-C-H-C-H": 16, "H-P-H": 14, "H": 12, "H-C-H": 10, "H-C-P-H": 8, "H-E-H": 6,
        "H-L-H": 5, "H-C-H-P-H": 5, "H-P-H-C-H": 4, "H-C-E-H": 4, "H-C-H-C-H-C-H": 3, "H-P-E-H": 3,
        "H-C-L-H": 2, "H-E-P-H": 2, "H-P-L-H": 2, "H-C-H-L-H": 1, "H-L-P-H": 1, "H-O-H": 1,
        "H-C-P-C-H": 0.5, "H-E-H-C-H": 0.5,
    },
}

# (peak hour, sd hours, weight) mixtures; bins are 15 minutes
_START_MIX = {
    "Home": [(12.5, 1.0, 0.35), (17.5, 1.5, 0.65)],
    "Work": [(8.0, 0.75, 0.72), (13.5, 0.6, 0.2), (11.0, 3.0, 0.08)],
    "OtherWork": [(9.0, 1.0, 0.55), (14.0, 1.0, 0.35), (12.0, 3.0, 0.10)],
    "Study": [(8.25, 0.35, 0.82), (13.5, 0.4, 0.13), (11.0, 2.5, 0.05)],
    "Shopping": [(10.5, 1.2, 0.45), (17.0, 1.6, 0.45), (14.0, 3.0, 0.10)],
    "Errands": [(10.0, 1.2, 0.5), (16.5, 1.2, 0.4), (13.0, 3.0, 0.10)],
    "LeisureVisit": [(12.5, 1.2, 0.35), (19.0, 1.5, 0.5), (15.0, 3.0, 0.15)],
    "Escort": [(8.0, 0.4, 0.55), (16.5, 0.6, 0.35), (12.0, 2.0, 0.10)],
}
_DURATION_MIX = {
    "Home": [(0.75, 0.5, 0.5), (2.5, 1.5, 0.5)],
    "Work": [(4.0, 0.8, 0.3), (9.0, 1.0, 0.7)],
    "OtherWork": [(1.0, 0.6, 0.5), (3.5, 1.5, 0.5)],
    "Study": [(3.5, 0.7, 0.3), (8.0, 0.8, 0.7)],
    "Shopping": [(0.4, 0.25, 0.7), (1.5, 0.8, 0.3)],
    "Errands": [(0.3, 0.2, 0.7), (1.2, 0.7, 0.3)],
    "LeisureVisit": [(1.0, 0.5, 0.5), (2.5, 1.2, 0.5)],
    "Escort": [(0.15, 0.08, 0.8), (0.6, 0.4, 0.2)],
}


def _mixture_bins(mix, lo_h, hi_h, step_h=0.25):
    edges = np.arange(lo_h, hi_h + 1e-9, step_h)
    mids = (edges[:-1] + edges[1:]) / 2
    w = np.zeros_like(mids)
    for mu, sd, wt in mix:
        w += wt * np.exp(-0.5 * ((mids - mu) / sd) ** 2) / sd
    return edges[:-1] * 3600, edges[1:] * 3600, w / w.sum()


def default_time_models() -> TimeModels:
    dists = {}
    for atype in ACTIVITY_TYPES:
        s, e, w = _mixture_bins(_START_MIX[atype], 5.0, 23.0)
        dists[(atype, "startTime")] = EmpiricalDistribution(s, e, w)
        s, e, w = _mixture_bins(_DURATION_MIX[atype], 0.0 if atype != "Escort" else 0.0, 12.0)
        s, e, w = s[w > 1e-6], e[w > 1e-6], w[w > 1e-6]
        s[0] = max(s[0], 300.0) if s[0] == 0 else s[0]
        dists[(atype, "duration")] = EmpiricalDistribution(s, e, w)
    return TimeModels(dists)


def default_chain_table() -> ChainFrequencyTable:
    rows = {}
    for spc in SPCS:
        items = _CHAINS[spc]
        total = sum(items.values())
        rows[spc] = [(parse_chain(c), f / total) for c, f in items.items()]
    return ChainFrequencyTable(rows)
