"""Categorized leg scoring with Robo-Taxi taste factors, and activity scoring.

Leg utilities are indexed by socio-professional category (SPC) and mode.
Robo-Taxi legs reuse the car travel-time coefficient, weight waiting time by
``wait_multiplier`` and scale the mode constant with a user-trust factor;
in-vehicle and waiting time are scaled by income-driven willingness-to-use
factors. All other modes score with every factor fixed at one.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .model import ACTIVITY_TYPES, SPCS, ConfigError, Person

TABLE_MODES = ("car", "pt", "walk")
PARAM_NAMES = ("C", "beta_trav", "beta_dist", "nu_1", "nu_2plus", "gamma_med", "gamma_high")


@dataclass(frozen=True)
class ModeCoefficients:
    C: float = 0.0
    beta_trav: float = 0.0  # utils per minute
    beta_dist: float = 0.0  # utils per km
    nu_1: float = 0.0
    nu_2plus: float = 0.0
    gamma_med: float = 0.0
    gamma_high: float = 0.0

    def nu(self, cars: int) -> float:
        if cars >= 2:
            return self.nu_2plus
        if cars == 1:
            return self.nu_1
        return 0.0

    def gamma(self, parking: str) -> float:
        if parking == "medium":
            return self.gamma_med
        if parking == "high":
            return self.gamma_high
        return 0.0


@dataclass
class ScoringParams:
    """Per-(SPC, mode) coefficients plus the global money/wait/fare constants.

    ``rt_constant_offset`` is the Robo-Taxi calibration constant added to the
    category's car constant (the subscription cost is folded in here).
    """

    table: dict[tuple[str, str], ModeCoefficients]
    beta_money_per_eur: float = -1.0
    wait_multiplier: float = 10.0
    pt_fare_eur: float = 1.43
    rt_constant_offset: float = 0.0
    trust_sign_aware: bool = True

    def __post_init__(self):
        if self.wait_multiplier < 1:
            raise ConfigError("wait_multiplier must be >= 1")
        for spc in SPCS:
            walk = self.table.get((spc, "walk"))
            if walk and (walk.nu_1 or walk.nu_2plus or walk.gamma_med or walk.gamma_high or walk.beta_dist):
                raise ConfigError(f"walk row for {spc} must not carry ownership/parking/distance terms")

    def coefficients(self, spc: str, mode: str) -> ModeCoefficients:
        if mode == "robotaxi":
            car = self.coefficients(spc, "car")
            return ModeCoefficients(C=car.C + self.rt_constant_offset, beta_trav=car.beta_trav)
        try:
            return self.table[(spc, mode)]
        except KeyError:
            raise ConfigError(f"no scoring parameters for ({spc}, {mode})") from None

    def with_overrides(self, **kw) -> "ScoringParams":
        return replace(self, **kw)


def load_scoring_params(path: str | Path | None = None, **overrides) -> ScoringParams:
    """Read ``spc,mode,param,value`` rows; defaults to the shipped table."""
    if path is None:
        text = resources.files("rtfleet").joinpath("data/scoring_params.csv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    raw: dict[tuple[str, str], dict[str, float]] = {}
    for row in csv.DictReader(text.splitlines()):
        spc, mode, param = row["spc"], row["mode"], row["param"]
        if spc not in SPCS or mode not in TABLE_MODES or param not in PARAM_NAMES:
            raise ConfigError(f"scoring_params: bad row {row}")
        raw.setdefault((spc, mode), {})[param] = float(row["value"])
    table = {k: ModeCoefficients(**v) for k, v in raw.items()}
    return ScoringParams(table=table, **overrides)


def table_cells(params: ScoringParams) -> dict[tuple[str, str, str], str]:
    """Every stored coefficient formatted at four decimals."""
    out = {}
    for (spc, mode), co in params.table.items():
        for name in PARAM_NAMES:
            v = getattr(co, name)
            out[(spc, mode, name)] = f"{v:.4f}"
    return out


# ---------------------------------------------------------------------------
# taste factors


@dataclass
class TasteFactorConfig:
    enabled: bool = True
    sex_female: float = 0.8
    sex_male: float = 1.2
    age_young_value: float = 1.15
    age_old_value: float = 0.70
    age_young_max: float = 45.0
    age_old_min: float = 60.0
    income_lambda: float = 0.25
    income_ref_eur: float | None = None  # population median when normalized
    income_clip_lo: float = 0.5
    income_clip_hi: float = 2.0
    # multiplicative rescaling applied by normalize_taste_factors
    sex_scale: float = 1.0
    age_scale: float = 1.0
    income_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.income_clip_lo <= self.income_clip_hi:
            raise ConfigError("taste factors: need 0 < income.clip_lo <= income.clip_hi")
        if self.age_old_min <= self.age_young_max:
            raise ConfigError("taste factors: age.old_min must exceed age.young_max")

    @classmethod
    def from_mapping(cls, m: dict | None) -> "TasteFactorConfig":
        m = m or {}
        keys = {
            "enabled": "enabled",
            "sex.male": "sex_male", "sex.female": "sex_female",
            "age.young_value": "age_young_value", "age.old_value": "age_old_value",
            "age.young_max": "age_young_max", "age.old_min": "age_old_min",
            "income.lambda": "income_lambda", "income.ref_eur": "income_ref_eur",
            "income.clip_lo": "income_clip_lo", "income.clip_hi": "income_clip_hi",
        }
        flat = _flatten(m)
        unknown = set(flat) - set(keys)
        if unknown:
            raise ConfigError(f"taste_factors: unknown keys {sorted(unknown)}")
        return cls(**{keys[k]: v for k, v in flat.items()})

    # raw curves, before normalization scales
    def raw_sex(self, sex: str) -> float:
        return self.sex_male if sex == "male" else self.sex_female

    def raw_age(self, age: float) -> float:
        lo, hi = self.age_young_max, self.age_old_min
        if age < lo:
            return self.age_young_value
        if age >= hi:
            return self.age_old_value
        frac = (age - lo) / (hi - lo)
        return self.age_young_value + frac * (self.age_old_value - self.age_young_value)

    def raw_income(self, income: float) -> float:
        ref = self.income_ref_eur
        if ref is None:
            raise ConfigError("taste factors: income.ref_eur unset (normalize first)")
        k = 1.0 + self.income_lambda * math.log(income / ref)
        return min(max(k, self.income_clip_lo), self.income_clip_hi)

    def kappa_sex(self, sex: str) -> float:
        return self.raw_sex(sex) / self.sex_scale

    def kappa_age(self, age: float) -> float:
        return self.raw_age(age) / self.age_scale

    def kappa_income(self, income: float) -> float:
        return self.raw_income(income) / self.income_scale


def _flatten(m: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in m.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def taste_factors(person: Person, income: float, cfg: TasteFactorConfig) -> tuple[float, float, float]:
    """``(k_ut, k_ivt, k_wt)`` for one person; ``(1, 1, 1)`` when disabled."""
    if not cfg.enabled:
        return (1.0, 1.0, 1.0)
    k_ut = 2.0 - (cfg.kappa_age(person.age) + cfg.kappa_sex(person.sex)) / 2.0
    k_inc = cfg.kappa_income(income)
    return (k_ut, 1.0 / k_inc, k_inc)


def normalize_taste_factors(persons: list[Person], incomes, raw: TasteFactorConfig) -> TasteFactorConfig:
    """Rescale each raw factor curve so its population mean is exactly one.

    ``incomes`` are household incomes aligned with ``persons``. When the raw
    config has no income reference the population median is used.
    """
    if not persons:
        raise ValueError("cannot normalize taste factors on an empty population")
    incomes = np.asarray(incomes, dtype=float)
    ref = raw.income_ref_eur if raw.income_ref_eur is not None else float(np.median(incomes))
    cfg = replace(raw, income_ref_eur=ref, sex_scale=1.0, age_scale=1.0, income_scale=1.0)
    sex = np.array([cfg.raw_sex(p.sex) for p in persons])
    age = np.array([cfg.raw_age(p.age) for p in persons])
    inc = np.array([cfg.raw_income(x) for x in incomes])
    return replace(cfg, sex_scale=float(sex.mean()), age_scale=float(age.mean()),
                   income_scale=float(inc.mean()))


# ---------------------------------------------------------------------------
# legs


@dataclass(slots=True)
class LegRecord:
    mode: str
    spc: str
    t_ivt_min: float
    t_wait_min: float = 0.0
    dist_km: float = 0.0
    cost_eur: float = 0.0
    household_cars: int = 0
    parking: str = "low"


def trust_term(k_ut: float, constant: float, sign_aware: bool) -> float:
    """User-trust scaled mode constant.

    The multiplicative form ``k_ut * C`` only lowers utility for distrustful
    users when ``C`` is negative; ``sign_aware`` applies the same relative
    shift to a positive constant so low trust always lowers utility.
    """
    if sign_aware and constant > 0:
        return constant - (k_ut - 1.0) * constant
    return k_ut * constant


def score_leg(leg: LegRecord, params: ScoringParams, factors=(1.0, 1.0, 1.0)) -> float:
    co = params.coefficients(leg.spc, leg.mode)
    if leg.mode == "robotaxi":
        k_ut, k_ivt, k_wt = factors
        return trust_term(k_ut, co.C, params.trust_sign_aware) + co.beta_trav * (
            k_ivt * leg.t_ivt_min + params.wait_multiplier * k_wt * leg.t_wait_min
        )
    if leg.mode == "walk":
        return co.C + co.beta_trav * (leg.t_ivt_min + leg.t_wait_min)
    return (
        co.C
        + co.beta_trav * (leg.t_ivt_min + leg.t_wait_min)
        + co.beta_dist * leg.dist_km
        + params.beta_money_per_eur * leg.cost_eur
        + co.nu(leg.household_cars)
        + co.gamma(leg.parking)
    )


# ---------------------------------------------------------------------------
# activities


@dataclass(frozen=True)
class ActivityParams:
    beta_perf_per_hour: float
    typical_duration_sec: float
    zero_utility_duration_sec: float
    beta_late_per_hour: float = 0.0
    latest_start_sec: float | None = None

    def __post_init__(self):
        if not self.typical_duration_sec > self.zero_utility_duration_sec > 0:
            raise ConfigError("activity params need t_typ > t_0 > 0")
        if self.beta_late_per_hour > 0:
            raise ConfigError("beta_late must be <= 0")


def default_activity_params() -> dict[str, ActivityParams]:
    typical_h = {t: 1.0 for t in ACTIVITY_TYPES}
    typical_h.update(Home=12.0, Work=8.0, Study=6.0)
    out = {}
    for t, h in typical_h.items():
        late = t in ("Work", "Study")
        out[t] = ActivityParams(
            beta_perf_per_hour=6.0,
            typical_duration_sec=h * 3600.0,
            zero_utility_duration_sec=h * 3600.0 / math.e,
            beta_late_per_hour=-18.0 if late else 0.0,
            latest_start_sec=9 * 3600.0 if late else None,
        )
    return out


def score_activity(activity_type: str, duration_sec: float, start_sec: float | None,
                   params: dict[str, ActivityParams]) -> float:
    p = params[activity_type]
    t_typ_h = p.typical_duration_sec / 3600.0
    dur = max(duration_sec, 1.0)
    s = p.beta_perf_per_hour * t_typ_h * math.log(dur / p.zero_utility_duration_sec)
    if p.latest_start_sec is not None and start_sec is not None and start_sec > p.latest_start_sec:
        s += p.beta_late_per_hour * (start_sec - p.latest_start_sec) / 3600.0
    return s


DAY_SEC = 86400.0


@dataclass(slots=True)
class ExecutedActivity:
    type: str
    start: float | None  # None for the first activity (starts at midnight)
    end: float | None  # None for the final, open-ended activity


@dataclass(slots=True)
class ExecutedLeg:
    record: LegRecord
    departure: float = math.nan
    arrival: float = math.nan
    penalty: float = 0.0  # stuck / rejected penalties


def activity_scores(activities: list[ExecutedActivity], params: dict[str, ActivityParams]) -> float:
    """Sum of performing utilities; first and last activity of the same type wrap overnight."""
    if len(activities) == 1:
        a = activities[0]
        return score_activity(a.type, DAY_SEC, None, params)
    total = 0.0
    first, last = activities[0], activities[-1]
    middle = activities[1:-1]
    for a in middle:
        total += score_activity(a.type, a.end - a.start, a.start, params)
    if first.type == last.type:
        dur = first.end + max(0.0, DAY_SEC - last.start)
        total += score_activity(first.type, dur, None, params)
    else:
        total += score_activity(first.type, first.end, None, params)
        total += score_activity(last.type, max(0.0, DAY_SEC - last.start), last.start, params)
    return total


def score_plan(activities: list[ExecutedActivity], legs: list[ExecutedLeg], params: ScoringParams,
               act_params: dict[str, ActivityParams], factors=(1.0, 1.0, 1.0)) -> float:
    if len(legs) != len(activities) - 1:
        raise ValueError("executed plan: leg count must equal activity count - 1")
    for leg in legs:
        if math.isnan(leg.arrival):
            raise ValueError("executed plan has an unexecuted leg")
    s = activity_scores(activities, act_params)
    for leg in legs:
        s += score_leg(leg.record, params, factors) + leg.penalty
    return s
