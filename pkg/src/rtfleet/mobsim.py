"""One simulated day: activities, teleported legs, queued car and Robo-Taxi traffic.

Agent events (activity ends, teleport arrivals, Robo-Taxi boarding timers)
live in a heap keyed by ``(time, insertion order)``. Network traffic runs in
the kernel's 1 s queue stepper, which is advanced up to the next agent event
or until vehicles arrive. Every emitted event takes a number from the
kernel's sequence counter, so the merged log is totally ordered.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import fleet as fl
from .kernels import QueueSim
from .model import DailyPlan, Person
from .network import Network, TeleportConfig, TravelTimeField, teleport_leg
from .scoring import ExecutedActivity, ExecutedLeg, LegRecord

EVENTS_HEADER = ("timeSec", "type", "personId", "vehicleId", "linkId", "aux")

# heap event kinds
_ACT_END, _TELEPORT_ARRIVE, _VEH_ARRIVE, _INGRESS_DONE, _EGRESS_DONE, _RT_TIMEOUT = range(6)


@dataclass
class DayContext:
    """Static inputs shared by every simulated day of a run."""

    net: Network
    persons: list[Person]
    household_cars: list[int]
    facility_link: dict[int, int]  # facility id -> link index
    facility_xy: dict[int, tuple[float, float]]
    facility_parking: dict[int, str]
    teleport: TeleportConfig = field(default_factory=TeleportConfig)
    fleet: fl.FleetConfig | None = None
    stuck_time_sec: int = 3600
    stuck_penalty: float = -100.0
    cell_length_m: float = 7.5
    infinite_capacity: bool = False

    def __post_init__(self):
        self._fftime = self.net.fftime()
        self._storage = self.net.storage(self.cell_length_m, self.infinite_capacity)
        self._cap = self.net.cap_per_sec(self.infinite_capacity)
        self._ids = [p.person_id for p in self.persons]


class EventLog:
    """Merged agent and kernel events of one day."""

    def __init__(self, py_events, kernel_events, person_ids, link_ids):
        self._py = py_events  # (seq, t, type, person index | None, vehicle, link index, aux)
        self._k = kernel_events  # arrays (seq, t, kind, veh, link)
        self._pids = person_ids
        self._links = link_ids

    def __len__(self):
        return len(self._py) + len(self._k[0])

    def _vehicle_name(self, veh: int) -> str:
        n = len(self._pids)
        return f"car_{self._pids[veh]}" if veh < n else f"rt_{veh - n}"

    def rows(self) -> list[tuple]:
        """``(timeSec, type, personId, vehicleId, linkId, aux)`` in emission order."""
        seq, t, kind, veh, link = self._k
        n = len(self._pids)
        lids = self._links
        merged = [(s, (int(t), et, "" if i is None else str(self._pids[i]), veh,
                       "" if lk < 0 else str(lids[lk]), aux))
                  for s, t, et, i, veh, lk, aux in self._py]
        kinds = ("linkEnter", "linkLeave")
        for s, tt, k, v, lk in zip(seq.tolist(), t.tolist(), kind.tolist(), veh.tolist(), link.tolist()):
            pid = str(self._pids[v]) if v < n else ""
            merged.append((s, (tt, kinds[k], pid, self._vehicle_name(v), str(lids[lk]), "")))
        merged.sort(key=lambda x: x[0])
        return [r for _, r in merged]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(EVENTS_HEADER)
            w.writerows(self.rows())


def read_events(path) -> list[tuple]:
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        next(r)
        return [(int(row[0]), row[1], row[2], row[3], row[4], row[5]) for row in r]


@dataclass
class DayResult:
    events: EventLog
    activities: list[list[ExecutedActivity]]
    legs: list[list[ExecutedLeg]]
    fleet: fl.FleetState | None
    traversals: tuple  # (link, enter, leave) arrays
    occupancy_at_end: np.ndarray
    end_time: int
    stuck_count: int


class _Day:
    def __init__(self, plans: list[DailyPlan], ctx: DayContext, ttfield: TravelTimeField):
        self.plans = plans
        self.ctx = ctx
        self.P = len(plans)
        F = ctx.fleet.size if ctx.fleet else 0
        self.sim = QueueSim(ctx._fftime, ctx._storage, ctx._cap, self.P + F, ctx.stuck_time_sec)
        self.router = ttfield.router(ctx.net)
        self.fleet = fl.FleetState(ctx.fleet) if ctx.fleet else None
        self.length = ctx.net.length_m
        self.link_ids = ctx.net.link_ids.tolist()
        self.heap: list = []
        self.hseq = 0
        self.ev: list = []
        self.acts = [[] for _ in plans]
        self.legs = [[] for _ in plans]
        self.leg_state: list = [None] * self.P  # per agent: (departure, route length m) while driving
        self.veh_route_km = [0.0] * F
        self.veh_stuck = [False] * F
        self.penalized_rides: set[int] = set()
        self.req_person_idx: dict[int, int] = {}
        self.next_request_id = 0
        self.stuck = 0

    # -- helpers -------------------------------------------------------------
    def push(self, t, kind, a, b=None):
        heapq.heappush(self.heap, (t, self.hseq, kind, a, b))
        self.hseq += 1

    def emit(self, t, etype, i=None, vehicle="", link=-1, aux=""):
        # formatted lazily by EventLog.rows
        self.ev.append((self.sim.next_seq(), t, etype, i, vehicle, link, aux))

    def fac_link(self, fid):
        return self.ctx.facility_link[fid]

    def record(self, i, k, mode, ivt_s, wait_s, dist_km, cost, dep, arr, penalty=0.0):
        plan = self.plans[i]
        dest = plan.activities[k + 1].facility_id
        rec = LegRecord(mode, self.ctx.persons[i].spc, ivt_s / 60.0, wait_s / 60.0, dist_km, cost,
                        self.ctx.household_cars[i], self.ctx.facility_parking[dest])
        self.legs[i].append(ExecutedLeg(rec, float(dep), float(arr), penalty))

    # -- activities ------------------------------------------------------------
    def start(self):
        for i, plan in enumerate(self.plans):
            a0 = plan.activities[0]
            if len(plan.activities) == 1:
                self.acts[i].append(ExecutedActivity(a0.type, None, None))
                continue
            self.push(int(math.ceil(a0.end_time)), _ACT_END, i, 0)

    def arrive(self, i, k, t, mode):
        """Agent ``i`` reached activity ``k + 1`` at ``t``."""
        plan = self.plans[i]
        act = plan.activities[k + 1]
        link = self.fac_link(act.facility_id)
        self.emit(t, "arrival", i, link=link, aux=mode)
        self.emit(t, "actStart", i, link=link, aux=act.type)
        if k + 1 == len(plan.activities) - 1:
            self.acts[i].append(ExecutedActivity(act.type, float(t), None))
        else:
            end = max(int(math.ceil(act.end_time)), t)
            self.acts[i].append(ExecutedActivity(act.type, float(t), float(end)))
            self.push(end, _ACT_END, i, k + 1)

    def act_end(self, i, k, t):
        plan = self.plans[i]
        act, nxt = plan.activities[k], plan.activities[k + 1]
        if k == 0:
            self.acts[i].append(ExecutedActivity(act.type, None, float(t)))
        mode = plan.legs[k].mode
        o_link, d_link = self.fac_link(act.facility_id), self.fac_link(nxt.facility_id)
        self.emit(t, "actEnd", i, link=o_link, aux=act.type)
        self.emit(t, "departure", i, link=o_link, aux=mode)
        if mode in ("walk", "pt"):
            dt, dist, cost = teleport_leg(mode, self.ctx.facility_xy[act.facility_id],
                                          self.ctx.facility_xy[nxt.facility_id], self.ctx.teleport)
            self.record(i, k, mode, dt, 0.0, dist, cost, t, t + dt)
            self.push(t + int(dt), _TELEPORT_ARRIVE, i, (k, mode))
        elif mode == "car":
            self.depart_car(i, k, t, o_link, d_link)
        else:
            self.request_taxi(i, k, t, o_link, d_link)

    # -- cars ------------------------------------------------------------------
    def depart_car(self, i, k, t, o_link, d_link):
        try:
            route, _ = self.router.route(o_link, d_link, float(t))
        except LookupError:
            self.emit(t, "stuck", i, vehicle=f"car_{self.ctx._ids[i]}", link=o_link, aux="unroutable")
            self.stuck += 1
            self.record(i, k, "car", 0.0, 0.0, 0.0, 0.0, t, t, self.ctx.stuck_penalty)
            self.push(t, _TELEPORT_ARRIVE, i, (k, "car"))
            return
        if len(route) == 0:
            self.record(i, k, "car", 0.0, 0.0, 0.0, 0.0, t, t)
            self.push(t, _TELEPORT_ARRIVE, i, (k, "car"))
            return
        self.leg_state[i] = (k, t, float(self.length[route].sum()))
        self.sim.insert(i, route, t)

    def car_arrived(self, i, t, stuck, link):
        k, dep, length = self.leg_state[i]
        self.leg_state[i] = None
        penalty = 0.0
        if stuck:
            self.stuck += 1
            penalty = self.ctx.stuck_penalty
            self.emit(t, "stuck", i, vehicle=f"car_{self.ctx._ids[i]}", link=link)
        self.record(i, k, "car", t - dep, 0.0, length / 1000.0, 0.0, dep, t, penalty)
        self.arrive(i, k, t, "car")

    # -- robo-taxi -------------------------------------------------------------
    def request_taxi(self, i, k, t, o_link, d_link):
        req = fl.Request(self.next_request_id, self.ctx._ids[i], o_link, d_link, int(t))
        self.next_request_id += 1
        self.req_person_idx[req.request_id] = (i, k)
        self.emit(t, "rtRequest", i, link=o_link, aux=str(req.request_id))
        if self.fleet is None:
            req.rejected = True
            self.fleet_reject(req, t)
            return
        vid = fl.submit_request(req, self.fleet, self.router, int(t))
        if vid is None:
            self.push(t + self.ctx.stuck_time_sec, _RT_TIMEOUT, req)
        elif vid < 0:
            self.fleet_reject(req, t)
        else:
            self.start_pickup(vid, req, t)

    def fleet_reject(self, req, t):
        """Rejected or timed-out request: walk to the destination, penalized."""
        i, k = self.req_person_idx[req.request_id]
        plan = self.plans[i]
        o, d = plan.activities[k].facility_id, plan.activities[k + 1].facility_id
        self.emit(t, "rtReject", i, link=req.origin_link, aux=str(req.request_id))
        dt, dist, _ = teleport_leg("walk", self.ctx.facility_xy[o], self.ctx.facility_xy[d], self.ctx.teleport)
        dep = req.submission_sec
        arr = t + int(dt)
        self.record(i, k, "walk", arr - dep, 0.0, dist, 0.0, dep, arr, self.ctx.stuck_penalty)
        self.push(arr, _TELEPORT_ARRIVE, i, (k, "walk"))

    def start_pickup(self, vid, req, t):
        v = self.fleet.vehicles[vid]
        self.emit(t, "rtDispatch", self.req_person_idx[req.request_id][0], vehicle=f"rt_{vid}",
                  link=v.current_link, aux=str(req.request_id))
        self.drive(vid, v.current_link, req.origin_link, t)

    def drive(self, vid, o_link, d_link, t):
        try:
            route, _ = self.router.route(o_link, d_link, float(t))
        except LookupError:  # treated like a stuck vehicle: repositioned at once
            route = ()
            self.veh_stuck[vid] = True
        self.veh_route_km[vid] = float(self.length[list(route)].sum()) / 1000.0 if len(route) else 0.0
        if len(route) == 0:
            self.push(t, _VEH_ARRIVE, vid, d_link)
        else:
            self.sim.insert(self.P + vid, route, t)

    def taxi_arrived(self, vid, t, stuck, link):
        v = self.fleet.vehicles[vid]
        req = v.request
        stuck = stuck or self.veh_stuck[vid]
        self.veh_stuck[vid] = False
        if stuck:
            self.stuck += 1
            self.emit(t, "stuck", None, vehicle=f"rt_{vid}", link=link)
        i, _ = self.req_person_idx[req.request_id]
        if v.state == fl.PICKUP_DRIVE:
            self.fleet.transition(vid, fl.INGRESS, t, req.origin_link, self.veh_route_km[vid])
            req.pickup_sec = int(t)
            self.emit(t, "rtPickup", i, vehicle=f"rt_{vid}", link=req.origin_link, aux=str(req.request_id))
            self.push(t + self.ctx.fleet.ingress_sec, _INGRESS_DONE, vid)
        else:
            if stuck:
                self.penalized_rides.add(req.request_id)
            self.fleet.transition(vid, fl.EGRESS, t, req.destination_link, self.veh_route_km[vid])
            self.push(t + self.ctx.fleet.egress_sec, _EGRESS_DONE, vid, self.veh_route_km[vid])

    def ingress_done(self, vid, t):
        req = self.fleet.vehicles[vid].request
        self.fleet.transition(vid, fl.OCCUPIED_DRIVE, t)
        self.drive(vid, req.origin_link, req.destination_link, t)

    def egress_done(self, vid, t, dist_km):
        req = self.fleet.vehicles[vid].request
        req.dropoff_sec = int(t)
        i, k = self.req_person_idx[req.request_id]
        self.emit(t, "rtDropoff", i, vehicle=f"rt_{vid}", link=req.destination_link, aux=str(req.request_id))
        penalty = self.ctx.stuck_penalty if req.request_id in self.penalized_rides else 0.0
        self.record(i, k, "robotaxi", req.dropoff_sec - req.pickup_sec, req.pickup_sec - req.submission_sec,
                    dist_km, 0.0, req.submission_sec, t, penalty)
        self.fleet.transition(vid, fl.STAY, t)
        self.arrive(i, k, t, "robotaxi")
        rejected: list = []
        nxt = fl.on_vehicle_idle(vid, self.fleet, self.router, int(t), rejected)
        for r in rejected:
            self.fleet_reject(r, t)
        if nxt is not None:
            self.start_pickup(vid, nxt, t)

    def timeout(self, req, t):
        if req.vehicle_id is None and not req.rejected:
            fl.cancel_pending(self.fleet, req)
            self.fleet_reject(req, t)

    # -- loop ------------------------------------------------------------------
    def run(self) -> DayResult:
        self.start()
        sim, heap = self.sim, self.heap
        t = 0
        while heap or sim.n_in_network:
            t_next = heap[0][0] if heap else None
            if sim.n_in_network:
                t = sim.advance(t_next if t_next is not None else 2**62)
                for veh, stuck, link in sim.pop_arrivals():
                    if veh < self.P:
                        self.car_arrived(veh, t, stuck, link)
                    else:
                        self.taxi_arrived(veh - self.P, t, stuck, link if link >= 0 else -1)
            else:
                t = t_next
                sim.skip_to(t)
            while heap and heap[0][0] <= t:
                tt, _, kind, a, b = heapq.heappop(heap)
                if kind == _ACT_END:
                    self.act_end(a, b, tt)
                elif kind == _TELEPORT_ARRIVE:
                    self.arrive(a, b[0], tt, b[1])
                elif kind == _VEH_ARRIVE:
                    self.taxi_arrived(a, tt, False, b)
                elif kind == _INGRESS_DONE:
                    self.ingress_done(a, tt)
                elif kind == _EGRESS_DONE:
                    self.egress_done(a, tt, b)
                else:
                    self.timeout(a, tt)
        end = max(int(t), 86400)
        if self.fleet is not None:
            self.fleet.close(end)
        occ = np.array([sim.occupancy(l) for l in range(self.ctx.net.n_links)], dtype=np.int64)
        log = EventLog(self.ev, sim.events(), self.ctx._ids, self.link_ids)
        return DayResult(log, self.acts, self.legs, self.fleet, sim.traversals(), occ, end, self.stuck)


def run_day(plans: list[DailyPlan], ctx: DayContext, ttfield: TravelTimeField | None = None) -> DayResult:
    """Execute every agent's selected plan for one day.

    Deterministic: there is no randomness inside a day.
    """
    if len(plans) != len(ctx.persons):
        raise ValueError("one plan per person required")
    if ttfield is None:
        ttfield = TravelTimeField(ctx._fftime)
    return _Day(plans, ctx, ttfield).run()


def link_counts(events: list[tuple]) -> tuple[dict, dict]:
    """Per-link enter and leave counts from event rows."""
    enters: dict[str, int] = {}
    leaves: dict[str, int] = {}
    for row in events:
        if row[1] == "linkEnter":
            enters[row[4]] = enters.get(row[4], 0) + 1
        elif row[1] == "linkLeave":
            leaves[row[4]] = leaves.get(row[4], 0) + 1
    return enters, leaves
