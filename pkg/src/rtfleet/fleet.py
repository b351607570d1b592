"""Robo-Taxi fleet: immediate requests, nearest-idle dispatch, task logging."""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import ConfigError

STAY = "STAY"
PICKUP_DRIVE = "PICKUP_DRIVE"
INGRESS = "INGRESS"
OCCUPIED_DRIVE = "OCCUPIED_DRIVE"
EGRESS = "EGRESS"
TASK_TYPES = (STAY, PICKUP_DRIVE, INGRESS, OCCUPIED_DRIVE, EGRESS)
_NEXT = {STAY: PICKUP_DRIVE, PICKUP_DRIVE: INGRESS, INGRESS: OCCUPIED_DRIVE,
         OCCUPIED_DRIVE: EGRESS, EGRESS: STAY}


@dataclass
class FleetConfig:
    size: int
    depot_links: list[int]
    ingress_sec: int = 60
    egress_sec: int = 120
    dispatch_rule: str = "nearest_idle"

    def __post_init__(self):
        if self.size < 1:
            raise ConfigError("fleet.size must be >= 1")
        if not self.depot_links:
            raise ConfigError("fleet.depots must be non-empty")
        if self.dispatch_rule != "nearest_idle":
            raise ConfigError(f"fleet.dispatch_rule: unknown rule {self.dispatch_rule!r}")


@dataclass
class Request:
    request_id: int
    person_id: int
    origin_link: int
    destination_link: int
    submission_sec: int
    pickup_sec: int | None = None
    dropoff_sec: int | None = None
    vehicle_id: int | None = None
    rejected: bool = False

    @property
    def wait_sec(self) -> int | None:
        return None if self.pickup_sec is None else self.pickup_sec - self.submission_sec


@dataclass
class Task:
    vehicle_id: int
    task_type: str
    start_sec: int
    end_sec: int
    link_from: int
    link_to: int
    distance_km: float


@dataclass
class RoboTaxi:
    vehicle_id: int
    depot_link: int
    current_link: int
    state: str = STAY
    odometer_km: float = 0.0
    request: Request | None = None
    task_start: int = 0
    task_link: int = -1


class FleetState:
    """Vehicle states, the FIFO pending queue and the task log.

    The mobsim moves vehicles; this class only decides assignments and
    records state changes via :meth:`transition`.
    """

    def __init__(self, cfg: FleetConfig):
        self.cfg = cfg
        self.vehicles = [
            RoboTaxi(k, cfg.depot_links[k % len(cfg.depot_links)], cfg.depot_links[k % len(cfg.depot_links)])
            for k in range(cfg.size)
        ]
        for v in self.vehicles:
            v.task_link = v.current_link
        self.idle: set[int] = set(range(cfg.size))
        self.pending: deque[Request] = deque()
        self.tasks: list[Task] = []
        self.requests: list[Request] = []

    def transition(self, vid: int, new_state: str, now: int, link: int | None = None,
                   distance_km: float = 0.0) -> None:
        """Close the vehicle's open task at ``now`` and open ``new_state``.

        ``link`` is where the closed task ended; ``distance_km`` is what it drove.
        """
        v = self.vehicles[vid]
        if _NEXT[v.state] != new_state:
            raise RuntimeError(f"vehicle {vid}: illegal transition {v.state} -> {new_state}")
        if now < v.task_start:
            raise RuntimeError(f"vehicle {vid}: time went backwards")
        end_link = v.current_link if link is None else link
        if not (v.state == STAY and now == v.task_start):
            self.tasks.append(Task(vid, v.state, v.task_start, now, v.task_link, end_link, distance_km))
        v.odometer_km += distance_km
        v.current_link = end_link
        v.state = new_state
        v.task_start = now
        v.task_link = end_link
        if new_state == STAY:
            v.request = None
            self.idle.add(vid)
        elif new_state == PICKUP_DRIVE:
            self.idle.discard(vid)

    def close(self, day_end: int) -> None:
        for v in self.vehicles:
            if v.state != STAY:
                raise RuntimeError(f"vehicle {v.vehicle_id} still busy at close")
            if day_end > v.task_start:
                self.tasks.append(Task(v.vehicle_id, STAY, v.task_start, day_end, v.task_link, v.current_link, 0.0))
                v.task_start = day_end
        self.tasks.sort(key=lambda t: (t.vehicle_id, t.start_sec, TASK_TYPES.index(t.task_type)))


def dispatch_nearest_idle(request: Request, fleet: FleetState, router, now: float) -> int:
    """Idle vehicle with the least expected drive time to the pickup link.

    Costs are link times frozen at the request's time bin; ties go to the
    lowest vehicle id. Returns -1 when no idle vehicle can reach the origin.
    """
    ids = sorted(fleet.idle)
    if not ids:
        raise ValueError("no idle vehicle")
    links = [fleet.vehicles[i].current_link for i in ids]
    idx, _ = router.nearest(np.asarray(links, dtype=np.int64), np.asarray(ids, dtype=np.int64),
                            int(request.origin_link), float(now))
    return -1 if idx < 0 else ids[idx]


def _assign(fleet: FleetState, request: Request, vid: int, now: int) -> int:
    request.vehicle_id = vid
    v = fleet.vehicles[vid]
    v.request = request
    fleet.transition(vid, PICKUP_DRIVE, now)
    return vid


def submit_request(request: Request, fleet: FleetState, router, now: int) -> int | None:
    """Assign an idle vehicle immediately, else queue the request.

    Returns the vehicle id, ``None`` when queued, or -1 when rejected.
    """
    if request.submission_sec != now:
        raise ValueError("requests are immediate: submission time must equal now")
    fleet.requests.append(request)
    if not fleet.idle:
        fleet.pending.append(request)
        return None
    vid = dispatch_nearest_idle(request, fleet, router, now)
    if vid < 0:
        request.rejected = True
        return -1
    return _assign(fleet, request, vid, now)


def on_vehicle_idle(vid: int, fleet: FleetState, router, now: int,
                    rejected: list | None = None) -> Request | None:
    """Serve the oldest pending request with vehicle ``vid``, if any.

    Requests the vehicle cannot reach are rejected (and appended to
    ``rejected`` when given) and the next one is tried.
    """
    v = fleet.vehicles[vid]
    if v.state != STAY:
        raise RuntimeError(f"vehicle {vid} is not idle")
    while fleet.pending:
        req = fleet.pending.popleft()
        try:
            router.route(v.current_link, req.origin_link, float(now))
        except LookupError:
            req.rejected = True
            if rejected is not None:
                rejected.append(req)
            continue
        _assign(fleet, req, vid, now)
        return req
    return None


def cancel_pending(fleet: FleetState, request: Request) -> None:
    fleet.pending.remove(request)
    request.rejected = True


def compute_in_service_rates(tasks, bin_sec: int = 3600, n_bins: int = 24,
                             occupied_only: bool = False) -> np.ndarray:
    """Per-bin share of fleet task time spent outside STAY.

    ``occupied_only`` also leaves the empty pickup drive out of the numerator.
    Bins with no task time report 0.
    """
    busy = np.zeros(n_bins)
    total = np.zeros(n_bins)
    excluded = {STAY, PICKUP_DRIVE} if occupied_only else {STAY}
    for t in tasks:
        if t.end_sec <= t.start_sec:
            continue
        b0 = int(t.start_sec // bin_sec)
        b1 = min(int(math.ceil(t.end_sec / bin_sec)), n_bins)
        for b in range(b0, b1):
            lo = max(t.start_sec, b * bin_sec)
            hi = min(t.end_sec, (b + 1) * bin_sec)
            if hi > lo:
                total[b] += hi - lo
                if t.task_type not in excluded:
                    busy[b] += hi - lo
    return np.divide(busy, total, out=np.zeros(n_bins), where=total > 0)


def write_fleet_tasks(path, tasks) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["vehicleId", "taskType", "startSec", "endSec", "linkFrom", "linkTo", "distanceKm"])
        for t in tasks:
            w.writerow([t.vehicle_id, t.task_type, t.start_sec, t.end_sec, t.link_from, t.link_to,
                        repr(float(t.distance_km))])


def read_fleet_tasks(path) -> list[Task]:
    with open(path, newline="", encoding="utf-8") as f:
        return [Task(int(r["vehicleId"]), r["taskType"], int(r["startSec"]), int(r["endSec"]),
                     int(r["linkFrom"]), int(r["linkTo"]), float(r["distanceKm"]))
                for r in csv.DictReader(f)]


def write_requests(path, requests) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["requestId", "personId", "submissionSec", "pickupSec", "dropoffSec", "waitSec"])
        for r in sorted(requests, key=lambda r: r.request_id):
            opt = lambda x: "" if x is None else x  # noqa: E731
            w.writerow([r.request_id, r.person_id, r.submission_sec, opt(r.pickup_sec),
                        opt(r.dropoff_sec), opt(r.wait_sec)])


def read_requests(path) -> list[Request]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for r in csv.DictReader(f):
            opt = lambda x: int(x) if x else None  # noqa: E731
            req = Request(int(r["requestId"]), int(r["personId"]), -1, -1, int(r["submissionSec"]),
                          opt(r["pickupSec"]), opt(r["dropoffSec"]))
            req.rejected = req.pickup_sec is None
            out.append(req)
    return out
