"""Synthetic demo scenario: grid network, zones, facilities, microdata, targets.

Stands in for real survey and census inputs. Everything is a deterministic
function of ``(grid_n, zones_per_side, persons_target, seed)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .activitygen import Facility, gravity_weights, write_facilities, write_od_model
from .model import Household, Person
from .network import Network, grid_network, write_network
from .rng import derive_rng
from .synthpop import (ZoneTargets, counts_from_vector, default_controls, household_vector,
                       write_zone_targets)

# facilities per zone; central zones get WORK_CENTRAL_BOOST times the work size
FACILITY_COUNTS = {"Work": 3, "OtherWork": 2, "Study": 1, "Shopping": 2, "LeisureVisit": 2,
                   "Errands": 2, "Escort": 1}
WORK_CENTRAL_BOOST = 3.0
OD_DECAY_M = {"Work": 3000.0, "OtherWork": 2500.0, "Study": 1500.0, "Shopping": 1200.0,
              "LeisureVisit": 2000.0, "Errands": 1200.0, "Escort": 1000.0}

# (spc, age range, female share); means echo the survey population structure
PERSON_PROFILES = {
    "Employed": ((20, 64), 0.51),
    "Unemployed": ((18, 55), 0.49),
    "Retired": ((60, 90), 0.57),
    "Student14Plus": ((14, 26), 0.47),
    "Under14": ((0, 13), 0.49),
    "Homemaker": ((25, 75), 0.98),
}
HOUSEHOLD_TYPES = (  # name, weight
    ("single_worker", 0.18), ("single_other", 0.07), ("couple", 0.17), ("family", 0.30),
    ("single_parent", 0.06), ("retired", 0.17), ("student_shared", 0.05),
)
DEMO_RT_CONSTANT_OFFSET = 0.0


@dataclass
class Zone:
    zone_id: int
    x: float
    y: float
    x0: float
    x1: float
    y0: float
    y1: float
    parking: str
    centrality: float  # 1 at the center, 0 at the corners


def make_zones(net: Network, zones_per_side: int) -> list[Zone]:
    xmax, ymax = float(net.node_x.max()), float(net.node_y.max())
    cx, cy = xmax / 2, ymax / 2
    rmax = math.hypot(cx, cy) or 1.0
    out = []
    for zy in range(zones_per_side):
        for zx in range(zones_per_side):
            x0, x1 = xmax * zx / zones_per_side, xmax * (zx + 1) / zones_per_side
            y0, y1 = ymax * zy / zones_per_side, ymax * (zy + 1) / zones_per_side
            x, y = (x0 + x1) / 2, (y0 + y1) / 2
            r = math.hypot(x - cx, y - cy) / rmax
            parking = "high" if r < 0.3 else ("medium" if r < 0.6 else "low")
            out.append(Zone(zy * zones_per_side + zx + 1, x, y, x0, x1, y0, y1, parking, 1.0 - r))
    return out


def write_zones(path, zones: list[Zone]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["zoneId", "x", "y", "parkingLevel"])
        for z in zones:
            w.writerow([z.zone_id, f"{z.x:.1f}", f"{z.y:.1f}", z.parking])


def read_zones(path) -> dict[int, tuple[float, float, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return {int(r["zoneId"]): (float(r["x"]), float(r["y"]), r["parkingLevel"]) for r in csv.DictReader(f)}


def make_facilities(zones: list[Zone], rng) -> list[Facility]:
    out = []
    fid = 1
    for z in zones:
        for atype, n in FACILITY_COUNTS.items():
            for _ in range(n):
                size = float(rng.lognormal(0.0, 0.5))
                if atype in ("Work", "OtherWork", "Shopping"):
                    size *= 1.0 + (WORK_CENTRAL_BOOST - 1.0) * z.centrality
                x = float(rng.uniform(z.x0, z.x1))
                y = float(rng.uniform(z.y0, z.y1))
                out.append(Facility(fid, z.zone_id, round(x, 1), round(y, 1), frozenset([atype]), round(size, 3)))
                fid += 1
    return out


def od_probabilities(zones: list[Zone], facilities: list[Facility]) -> dict[tuple[int, str], dict[int, float]]:
    attract: dict[tuple[int, str], float] = {}
    for f in facilities:
        for t in f.types:
            attract[(f.zone_id, t)] = attract.get((f.zone_id, t), 0.0) + f.size
    out = {}
    for o in zones:
        for atype, decay in OD_DECAY_M.items():
            dests = [z for z in zones if attract.get((z.zone_id, atype), 0.0) > 0]
            d = np.array([math.hypot(z.x - o.x, z.y - o.y) for z in dests])
            sizes = np.array([attract[(z.zone_id, atype)] for z in dests])
            p = gravity_weights(sizes, d, decay)
            out[(o.zone_id, atype)] = {z.zone_id: float(pi) for z, pi in zip(dests, p)}
    return out


def _person(rng, pid, hid, spc) -> Person:
    (lo, hi), female = PERSON_PROFILES[spc]
    if spc == "Retired":
        age = int(min(hi, lo + rng.gamma(2.0, 6.5)))
    else:
        age = int(rng.integers(lo, hi + 1))
    sex = "female" if rng.random() < female else "male"
    return Person(pid, hid, age, sex, spc)


def _adult_spc(rng) -> str:
    return str(rng.choice(["Employed", "Unemployed", "Homemaker"], p=[0.82, 0.10, 0.08]))


def make_microdata(n_households: int, rng) -> list[Household]:
    names = [n for n, _ in HOUSEHOLD_TYPES]
    weights = np.array([w for _, w in HOUSEHOLD_TYPES])
    out = []
    pid = 1
    for hid in range(1, n_households + 1):
        kind = str(rng.choice(names, p=weights / weights.sum()))
        if kind == "single_worker":
            spcs = ["Employed"]
        elif kind == "single_other":
            spcs = [str(rng.choice(["Unemployed", "Homemaker", "Student14Plus"], p=[0.6, 0.15, 0.25]))]
        elif kind == "couple":
            spcs = ["Employed", _adult_spc(rng)]
        elif kind == "family":
            spcs = ["Employed", _adult_spc(rng)]
            spcs += ["Under14"] * int(rng.integers(1, 3)) + ["Student14Plus"] * int(rng.integers(0, 2))
        elif kind == "single_parent":
            spcs = [_adult_spc(rng)] + ["Under14"] * int(rng.integers(1, 3))
        elif kind == "retired":
            spcs = ["Retired"] * int(rng.integers(1, 3))
        else:
            spcs = ["Student14Plus"] * int(rng.integers(2, 4))
        members = []
        for spc in spcs:
            members.append(_person(rng, pid, hid, spc))
            pid += 1
        income = float(np.round(26000 * rng.lognormal(0.0, 0.45), 0))
        adults = sum(p.age >= 18 for p in members)
        lam = 0.4 + 0.9 * adults * min(income / 26000, 2.0) / 2
        cars = int(min(rng.poisson(lam), 3))
        out.append(Household(hid, income, cars, members))
    return out


def write_microdata(out_dir: Path, households: list[Household]) -> None:
    with open(out_dir / "microdata_households.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["householdId", "incomeEur", "cars"])
        for h in households:
            w.writerow([h.household_id, int(h.income_eur), h.cars])
    with open(out_dir / "microdata_persons.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["personId", "householdId", "age", "sex", "spc"])
        for h in households:
            for p in h.members:
                w.writerow([p.person_id, p.household_id, p.age, p.sex, p.spc])


def make_zone_targets(zones: list[Zone], sample: list[Household], persons_target: int, rng) -> list[ZoneTargets]:
    """Targets tabulated from a reference population drawn per zone.

    Central zones lean to smaller, carless households. Each zone keeps drawing
    until its person quota is met, so the total lands close to the target.
    """
    controls = default_controls()
    density = np.array([0.6 + 0.8 * z.centrality for z in zones])
    quota = persons_target * density / density.sum()
    size = np.array([len(h.members) for h in sample], dtype=float)
    cars = np.array([h.cars for h in sample], dtype=float)
    vecs = np.array([household_vector(h, controls) for h in sample])
    out = []
    for z, q in zip(zones, quota):
        w = np.exp(-z.centrality * (0.35 * (size - 2) + 0.5 * cars))
        w /= w.sum()
        total = np.zeros(vecs.shape[1])
        n_hh = 0
        persons = 0
        while persons < q:
            i = int(rng.choice(len(sample), p=w))
            if persons + size[i] - q > q - persons:  # overshoot worse than stopping
                break
            total += vecs[i]
            persons += int(size[i])
            n_hh += 1
        out.append(ZoneTargets(z.zone_id, n_hh, counts_from_vector(total, controls)))
    return out


def quadrant_depots(net: Network) -> list[int]:
    """Link ids nearest to the four quadrant centroids."""
    xmax, ymax = float(net.node_x.max()), float(net.node_y.max())
    pts = [(xmax / 4, ymax / 4), (3 * xmax / 4, ymax / 4), (xmax / 4, 3 * ymax / 4), (3 * xmax / 4, 3 * ymax / 4)]
    return [int(net.link_ids[net.nearest_link(x, y)]) for x, y in pts]


def demo_config(grid_n: int, seed: int, fleet_size: int, depots: list[int]) -> dict:
    return {
        "seed": seed,
        "output_dir": "out",
        "paths": {
            "nodes": "nodes.csv", "links": "links.csv", "zones": "zones.csv",
            "facilities": "facilities.csv", "microdata_households": "microdata_households.csv",
            "microdata_persons": "microdata_persons.csv", "zone_targets": "zone_targets.csv",
            "od_model": "od_model.csv",
        },
        "scoring": {"rt_constant_offset": DEMO_RT_CONSTANT_OFFSET},
        "taste_factors": {"enabled": True},
        "fleet": {"enabled": True, "size": fleet_size, "depots": depots, "ingress_sec": 60, "egress_sec": 120},
        "replanning": {"max_plans": 5, "weights": {"select": 0.7, "mode_mutation": 0.2, "time_mutation": 0.1},
                       "innovation_stop_fraction": 0.4, "beta_select": 1.0},
        "convergence": {"window": 10, "epsilon": 1e-3},
        "run": {"max_iterations": 100},
    }


def generate_demo_scenario(grid_n: int = 10, zones_per_side: int = 4, persons_target: int = 3000,
                           seed: int = 1, out_dir="demo", fleet_size: int = 100) -> Path:
    """Write a complete input file set plus ``config.yaml`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net = grid_network(grid_n)
    write_network(net, out / "nodes.csv", out / "links.csv")
    zones = make_zones(net, min(zones_per_side, grid_n - 1) if grid_n > 2 else 1)
    write_zones(out / "zones.csv", zones)
    facilities = make_facilities(zones, derive_rng(seed, "demo", "facilities"))
    write_facilities(out / "facilities.csv", facilities)
    write_od_model(out / "od_model.csv", od_probabilities(zones, facilities))
    n_sample = max(200, persons_target // 40)
    sample = make_microdata(n_sample, derive_rng(seed, "demo", "microdata"))
    write_microdata(out, sample)
    targets = make_zone_targets(zones, sample, persons_target, derive_rng(seed, "demo", "targets"))
    write_zone_targets(out / "zone_targets.csv", targets, default_controls())
    cfg = demo_config(grid_n, seed, fleet_size, quadrant_depots(net))
    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return out
