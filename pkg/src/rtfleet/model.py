"""Domain types shared across modules: persons, households, plans."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

SPCS = ("Employed", "Unemployed", "Retired", "Student14Plus", "Under14", "Homemaker")
SEXES = ("female", "male")
MODES = ("car", "pt", "walk", "robotaxi")
NETWORK_MODES = ("car", "robotaxi")
TELEPORTED_MODES = ("walk", "pt")
PARKING_LEVELS = ("low", "medium", "high")

ACTIVITY_TYPES = (
    "Home", "Work", "OtherWork", "Study", "Shopping", "LeisureVisit", "Errands", "Escort",
)
# one-letter codes used in chains.csv, e.g. ``H-W-H``
ACTIVITY_CODES = {
    "H": "Home", "W": "Work", "O": "OtherWork", "S": "Study",
    "P": "Shopping", "L": "LeisureVisit", "E": "Errands", "C": "Escort",
}
CODE_OF = {v: k for k, v in ACTIVITY_CODES.items()}


class ConfigError(ValueError):
    """Invalid configuration or input data (CLI exit code 2)."""


@dataclass
class Person:
    person_id: int
    household_id: int
    age: int
    sex: str
    spc: str
    zone_id: int = -1

    def __post_init__(self):
        if self.age < 0:
            raise ValueError(f"person {self.person_id}: negative age")
        if self.sex not in SEXES:
            raise ValueError(f"person {self.person_id}: unknown sex {self.sex!r}")
        if self.spc not in SPCS:
            raise ValueError(f"person {self.person_id}: unknown SPC {self.spc!r}")
        if (self.spc == "Under14") != (self.age < 14):
            raise ValueError(f"person {self.person_id}: Under14 must match age < 14")


@dataclass
class Household:
    household_id: int
    income_eur: float
    cars: int
    members: list[Person] = field(default_factory=list)
    zone_id: int = -1

    @property
    def member_ids(self) -> list[int]:
        return [p.person_id for p in self.members]


@dataclass(frozen=True)
class Activity:
    type: str
    facility_id: int
    end_time: float | None = None  # None for the open-ended final activity


@dataclass(frozen=True)
class Leg:
    mode: str


@dataclass
class DailyPlan:
    """Alternating activities and legs; ``score`` is None until executed."""

    activities: list[Activity]
    legs: list[Leg]
    score: float | None = None

    def copy(self) -> "DailyPlan":
        return DailyPlan(list(self.activities), list(self.legs), None)

    def with_leg_mode(self, i: int, mode: str) -> "DailyPlan":
        new = self.copy()
        new.legs[i] = Leg(mode)
        return new

    def with_end_time(self, i: int, t: float) -> "DailyPlan":
        new = self.copy()
        new.activities[i] = replace(new.activities[i], end_time=t)
        return new

    def validate(self) -> None:
        acts, legs = self.activities, self.legs
        if not acts:
            raise ValueError("plan has no activities")
        if len(legs) != len(acts) - 1:
            raise ValueError("leg count must equal activity count - 1")
        ends = [a.end_time for a in acts[:-1]]
        if any(e is None for e in ends):
            raise ValueError("only the final activity may be open-ended")
        if any(b <= a for a, b in zip(ends, ends[1:])):
            raise ValueError("planned end times must be strictly increasing")
        for leg in legs:
            if leg.mode not in MODES:
                raise ValueError(f"unknown mode {leg.mode!r}")

    def key(self) -> tuple:
        """Hashable identity of the plan's genes (modes and end times)."""
        return (
            tuple((a.type, a.facility_id, a.end_time) for a in self.activities),
            tuple(leg.mode for leg in self.legs),
        )
