"""Fleet-sizing KPIs computed from closed event, request and task logs."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fleet import OCCUPIED_DRIVE, PICKUP_DRIVE, STAY, compute_in_service_rates
from .model import MODES, SPCS

MORNING_BINS = (8, 9)
EVENING_BINS = (17, 18)


def modal_split(events) -> dict[str, float]:
    """Share of completed trips per mode; trips ending in a stuck event are left out."""
    counts: dict[str, int] = {}
    stuck: set[str] = set()
    for row in events:
        etype, pid = row[1], row[2]
        if etype == "stuck" and pid:
            stuck.add(pid)
        elif etype == "arrival":
            if pid in stuck:
                stuck.discard(pid)
                continue
            counts[row[5]] = counts.get(row[5], 0) + 1
    total = sum(counts.values())
    if total == 0:
        return {}
    return {m: counts[m] / total for m in sorted(counts)}


@dataclass
class WaitStats:
    served: int
    rejected: int
    mean: float | None
    p50: float | None
    p90: float | None
    p95: float | None


def waiting_stats(requests) -> WaitStats:
    waits = [r.pickup_sec - r.submission_sec for r in requests if r.pickup_sec is not None]
    rejected = sum(1 for r in requests if r.pickup_sec is None)
    if not waits:
        return WaitStats(0, rejected, None, None, None, None)
    a = np.asarray(waits, dtype=float)
    p50, p90, p95 = (float(x) for x in np.percentile(a, [50, 90, 95]))
    return WaitStats(len(waits), rejected, float(a.mean()), p50, p90, p95)


def usage_by_spc(requests, spc_of: dict[int, str]) -> dict[str, int]:
    """Distinct persons per category with at least one completed Robo-Taxi trip."""
    users: dict[str, set] = {s: set() for s in SPCS}
    for r in requests:
        if r.dropoff_sec is None:
            continue
        try:
            spc = spc_of[r.person_id]
        except KeyError:
            raise ValueError(f"request {r.request_id}: unknown person {r.person_id}") from None
        users[spc].add(r.person_id)
    return {s: len(users[s]) for s in SPCS}


def _rate(tasks, bins, occupied_only: bool) -> float:
    busy = total = 0.0
    excluded = {STAY, PICKUP_DRIVE} if occupied_only else {STAY}
    for b in bins:
        lo, hi = b * 3600, (b + 1) * 3600
        for t in tasks:
            ov = min(t.end_sec, hi) - max(t.start_sec, lo)
            if ov > 0:
                total += ov
                if t.task_type not in excluded:
                    busy += ov
    return busy / total if total > 0 else 0.0


def peak_rates(tasks, occupied_only: bool = False) -> dict[str, float]:
    off = tuple(h for h in range(24) if h not in MORNING_BINS + EVENING_BINS)
    return {
        "allDay": _rate(tasks, range(24), occupied_only),
        "morning": _rate(tasks, MORNING_BINS, occupied_only),
        "evening": _rate(tasks, EVENING_BINS, occupied_only),
        "offPeak": _rate(tasks, off, occupied_only),
    }


def onboard_km_per_vehicle(tasks, fleet_size: int) -> float:
    if fleet_size <= 0:
        return 0.0
    return sum(t.distance_km for t in tasks if t.task_type == OCCUPIED_DRIVE) / fleet_size


@dataclass
class KpiBundle:
    fingerprint: str
    fleet_size: int
    taste_enabled: bool
    modal_shares: dict[str, float]
    wait: WaitStats
    hourly_in_service: list[float]
    onboard_km_per_vehicle: float
    rt_users_by_spc: dict[str, int]
    peak_rates: dict[str, float]
    stuck_trips: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KpiBundle":
        d = json.loads(text)
        d["wait"] = WaitStats(**d["wait"])
        return cls(**d)

    @property
    def rt_share(self) -> float:
        return self.modal_shares.get("robotaxi", 0.0)


def compute_kpis(events, requests, tasks, spc_of: dict[int, str], fleet_size: int, fingerprint: str,
                 taste_enabled: bool, occupied_only: bool = False) -> KpiBundle:
    """Pure function of the logs, so persisted CSVs reproduce it exactly."""
    hourly = compute_in_service_rates(tasks, 3600, 24, occupied_only) if tasks else np.zeros(24)
    stuck = sum(1 for row in events if row[1] == "stuck")
    return KpiBundle(
        fingerprint=fingerprint,
        fleet_size=fleet_size,
        taste_enabled=taste_enabled,
        modal_shares=modal_split(events),
        wait=waiting_stats(requests),
        hourly_in_service=[float(x) for x in hourly],
        onboard_km_per_vehicle=onboard_km_per_vehicle(tasks, fleet_size),
        rt_users_by_spc=usage_by_spc(requests, spc_of),
        peak_rates=peak_rates(tasks, occupied_only) if tasks else {k: 0.0 for k in
                                                                  ("allDay", "morning", "evening", "offPeak")},
        stuck_trips=stuck,
    )


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class Change:
    kpi: str
    with_factors: float
    without_factors: float
    change: float
    kind: str  # "relative" or "absolute" (baseline zero)


def _change(name, a, b) -> Change:
    a = 0.0 if a is None else float(a)
    b = 0.0 if b is None else float(b)
    if b == 0:
        return Change(name, a, b, a - b, "absolute")
    return Change(name, a, b, (a - b) / b, "relative")


def comparison_report(a: KpiBundle, b: KpiBundle) -> list[Change]:
    """Relative change of every KPI, with factors (``a``) against without (``b``)."""
    if a.fingerprint != b.fingerprint:
        raise ValueError("bundles come from different scenarios")
    out = []
    for m in sorted(set(a.modal_shares) | set(b.modal_shares) | {"robotaxi"}):
        out.append(_change(f"share.{m}", a.modal_shares.get(m, 0.0), b.modal_shares.get(m, 0.0)))
    out.append(_change("wait.mean", a.wait.mean, b.wait.mean))
    out.append(_change("wait.p50", a.wait.p50, b.wait.p50))
    out.append(_change("wait.p95", a.wait.p95, b.wait.p95))
    out.append(_change("requests.served", a.wait.served, b.wait.served))
    out.append(_change("requests.rejected", a.wait.rejected, b.wait.rejected))
    for k in ("allDay", "morning", "evening", "offPeak"):
        out.append(_change(f"inService.{k}", a.peak_rates[k], b.peak_rates[k]))
    out.append(_change("onboardKmPerVehicle", a.onboard_km_per_vehicle, b.onboard_km_per_vehicle))
    for s in SPCS:
        out.append(_change(f"users.{s}", a.rt_users_by_spc.get(s, 0), b.rt_users_by_spc.get(s, 0)))
    return out


# ---------------------------------------------------------------------------
# files


def _w(path):
    f = open(path, "w", newline="", encoding="utf-8")
    return f, csv.writer(f, lineterminator="\n")


def write_kpi_tables(out_dir, bundles: list[KpiBundle]) -> None:
    """Per-run tables; one row per bundle (fleet size and taste toggle)."""
    out = Path(out_dir)
    modes = [m for m in MODES]
    f, w = _w(out / "modal_split.csv")
    with f:
        w.writerow(["fleetSize", "tasteFactors"] + modes)
        for b in bundles:
            w.writerow([b.fleet_size, _on(b)] + [repr(b.modal_shares.get(m, 0.0)) for m in modes])
    f, w = _w(out / "waiting_times.csv")
    with f:
        w.writerow(["fleetSize", "tasteFactors", "served", "rejected", "meanSec", "p50Sec", "p90Sec", "p95Sec"])
        for b in bundles:
            s = b.wait
            w.writerow([b.fleet_size, _on(b), s.served, s.rejected] + [_opt(x) for x in (s.mean, s.p50, s.p90, s.p95)])
    f, w = _w(out / "in_service_hourly.csv")
    with f:
        w.writerow(["fleetSize", "tasteFactors"] + [f"h{h:02d}" for h in range(24)])
        for b in bundles:
            w.writerow([b.fleet_size, _on(b)] + [f"{x:.6f}" for x in b.hourly_in_service])
    f, w = _w(out / "usage_by_spc.csv")
    with f:
        w.writerow(["fleetSize", "tasteFactors"] + list(SPCS))
        for b in bundles:
            w.writerow([b.fleet_size, _on(b)] + [b.rt_users_by_spc.get(s, 0) for s in SPCS])


def write_comparison(path, rows: list[tuple[int, list[Change]]]) -> None:
    f, w = _w(path)
    with f:
        w.writerow(["fleetSize", "kpi", "withFactors", "withoutFactors", "change", "kind"])
        for size, changes in rows:
            for c in changes:
                w.writerow([size, c.kpi, repr(c.with_factors), repr(c.without_factors), repr(c.change), c.kind])


def _on(b: KpiBundle) -> str:
    return "on" if b.taste_enabled else "off"


def _opt(x) -> str:
    return "" if x is None else repr(float(x))


# ---------------------------------------------------------------------------
# charts (plain SVG)


def _svg(width, height, body) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'font-family="sans-serif" font-size="11">\n{body}</svg>\n')


MODE_COLORS = {"car": "#4e79a7", "pt": "#f28e2b", "walk": "#59a14f", "robotaxi": "#e15759"}


def modal_split_svg(bundles: list[KpiBundle], title: str = "Modal split") -> str:
    """Stacked bars, one per bundle."""
    bar_w, gap, h = 36, 18, 220
    width = 80 + len(bundles) * (bar_w + gap) + 110
    parts = [f'<text x="10" y="16" font-size="13">{title}</text>']
    x = 60
    for b in bundles:
        y = 30 + h
        for m in MODES:
            share = b.modal_shares.get(m, 0.0)
            bh = share * h
            y -= bh
            parts.append(f'<rect x="{x}" y="{y:.2f}" width="{bar_w}" height="{bh:.2f}" fill="{MODE_COLORS[m]}"/>')
        parts.append(f'<text x="{x + bar_w / 2}" y="{45 + h}" text-anchor="middle">{b.fleet_size}'
                     f'{"" if b.taste_enabled else "*"}</text>')
        x += bar_w + gap
    for i, m in enumerate(MODES):
        parts.append(f'<rect x="{x + 10}" y="{40 + 16 * i}" width="10" height="10" fill="{MODE_COLORS[m]}"/>')
        parts.append(f'<text x="{x + 26}" y="{49 + 16 * i}">{m}</text>')
    parts.append(f'<text x="60" y="{65 + h}">fleet size (* = taste factors off)</text>')
    return _svg(width, h + 80, "\n".join(parts) + "\n")


def in_service_heatmap_svg(bundles: list[KpiBundle], title: str = "Hourly in-service rate") -> str:
    cell, left, top = 22, 90, 30
    width = left + 24 * cell + 20
    height = top + len(bundles) * cell + 40
    parts = [f'<text x="10" y="16" font-size="13">{title}</text>']
    for r, b in enumerate(bundles):
        y = top + r * cell
        parts.append(f'<text x="{left - 6}" y="{y + 15}" text-anchor="end">{b.fleet_size} {_on(b)}</text>')
        for h, v in enumerate(b.hourly_in_service):
            shade = int(round(255 * (1 - min(max(v, 0.0), 1.0))))
            parts.append(f'<rect x="{left + h * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="rgb(255,{shade},{shade})" stroke="#ddd"/>')
    for h in range(0, 24, 2):
        parts.append(f'<text x="{left + h * cell + cell / 2}" y="{top + len(bundles) * cell + 14}" '
                     f'text-anchor="middle">{h}</text>')
    return _svg(width, height, "\n".join(parts) + "\n")


def write_charts(out_dir, bundles: list[KpiBundle]) -> None:
    charts = Path(out_dir) / "charts"
    charts.mkdir(parents=True, exist_ok=True)
    (charts / "modal_split.svg").write_text(modal_split_svg(bundles), encoding="utf-8")
    (charts / "in_service_hourly.svg").write_text(in_service_heatmap_svg(bundles), encoding="utf-8")
