"""Within-day simulation on hand-built networks and the tiny demo."""
import dataclasses

import numpy as np
import pytest

from rtfleet.config import load_config
from rtfleet.fleet import FleetConfig
from rtfleet.mobsim import DayContext, link_counts, read_events, run_day
from rtfleet.model import Activity, DailyPlan, Leg, Person
from rtfleet.network import Network, TravelTimeField
from rtfleet.runner import build_context, prepare_inputs


def line_net(lengths, speed=10.0, cap=3600.0):
    k = len(lengths)
    return Network(np.arange(k + 1), np.arange(k + 1) * 500.0, np.zeros(k + 1), np.arange(k),
                   np.arange(k), np.arange(1, k + 1), np.asarray(lengths, float), np.full(k, speed),
                   np.full(k, cap), np.ones(k))


def ctx_for(net, n_persons, fac_link, fac_xy, cars=1, fleet=None, **kw):
    persons = [Person(100 + i, 100 + i, 30, "male", "Employed") for i in range(n_persons)]
    return DayContext(net, persons, [cars] * n_persons, fac_link, fac_xy,
                      {f: "low" for f in fac_link}, fleet=fleet, **kw)


def trip(mode, end=8 * 3600.0, back=None):
    acts = [Activity("Home", 1, end), Activity("Work", 2, back)] if back is None else \
        [Activity("Home", 1, end), Activity("Work", 2, back), Activity("Home", 1)]
    return DailyPlan(acts, [Leg(mode)] * (len(acts) - 1))


class TestHandBuilt:
    def test_empty_population(self):
        net = line_net([500.0])
        res = run_day([], ctx_for(net, 0, {1: 0}, {1: (0, 0)}))
        assert res.events.rows() == []

    def test_walk_one_km(self):
        net = line_net([500.0])
        ctx = ctx_for(net, 1, {1: 0, 2: 0}, {1: (0.0, 0.0), 2: (1000.0, 0.0)})
        res = run_day([trip("walk")], ctx)
        rows = res.events.rows()
        dep = next(r[0] for r in rows if r[1] == "departure")
        arr = next(r[0] for r in rows if r[1] == "arrival")
        assert arr - dep == 936

    def test_car_free_flow_link(self):
        net = line_net([100.0, 500.0])
        ctx = ctx_for(net, 1, {1: 0, 2: 1}, {1: (0, 0), 2: (500, 0)})
        rows = run_day([trip("car")], ctx).events.rows()
        enter = [r[0] for r in rows if r[1] == "linkEnter" and r[4] == "1"]
        leave = [r[0] for r in rows if r[1] == "linkLeave" and r[4] == "1"]
        assert leave[0] - enter[0] == 50

    def test_event_types_and_order(self):
        net = line_net([100.0, 500.0])
        ctx = ctx_for(net, 1, {1: 0, 2: 1}, {1: (0, 0), 2: (500, 0)})
        types = [r[1] for r in run_day([trip("car")], ctx).events.rows()]
        assert types == ["actEnd", "departure", "linkEnter", "linkLeave", "arrival", "actStart"]

    def test_capacity_spaces_exits(self):
        net = line_net([100.0, 500.0], cap=3600.0)
        ctx = ctx_for(net, 2, {1: 0, 2: 1}, {1: (0, 0), 2: (500, 0)})
        rows = run_day([trip("car"), trip("car")], ctx).events.rows()
        leaves = sorted(r[0] for r in rows if r[1] == "linkLeave")
        assert leaves[1] - leaves[0] == 1

    def test_robotaxi_ride(self):
        net = line_net([100.0, 500.0, 500.0])
        fleet = FleetConfig(1, [0], 60, 120)
        ctx = ctx_for(net, 1, {1: 1, 2: 2}, {1: (0, 0), 2: (1000, 0)}, fleet=fleet)
        res = run_day([trip("robotaxi")], ctx)
        types = [r[1] for r in res.events.rows()]
        for t in ("rtRequest", "rtDispatch", "rtPickup", "rtDropoff"):
            assert types.count(t) == 1
        kinds = [t.task_type for t in res.fleet.tasks]
        assert kinds[:6] == ["STAY", "PICKUP_DRIVE", "INGRESS", "OCCUPIED_DRIVE", "EGRESS", "STAY"]
        leg = res.legs[0][0]
        assert leg.record.mode == "robotaxi" and leg.record.t_wait_min > 0

    def test_no_fleet_falls_back_to_walk(self):
        net = line_net([100.0, 500.0])
        ctx = ctx_for(net, 1, {1: 0, 2: 1}, {1: (0, 0), 2: (500, 0)})
        res = run_day([trip("robotaxi")], ctx)
        types = [r[1] for r in res.events.rows()]
        assert "rtReject" in types
        assert res.legs[0][0].record.mode == "walk" and res.legs[0][0].penalty == ctx.stuck_penalty

    def test_one_plan_per_person(self):
        net = line_net([100.0])
        with pytest.raises(ValueError):
            run_day([], ctx_for(net, 1, {1: 0}, {1: (0, 0)}))


@pytest.fixture(scope="module")
def demo_inputs(tiny_demo):
    cfg = load_config(tiny_demo / "config.yaml")
    return cfg, prepare_inputs(cfg)


class TestDemoDay:
    def test_conservation(self, demo_inputs):
        cfg, inputs = demo_inputs
        res = run_day(inputs.plans, build_context(cfg, inputs))
        enters, leaves = link_counts(res.events.rows())
        for k, lid in enumerate(inputs.net.link_ids.tolist()):
            assert enters.get(str(lid), 0) == leaves.get(str(lid), 0) + res.occupancy_at_end[k]
        rows = res.events.rows()
        deps = sum(r[1] == "departure" for r in rows)
        arrs = sum(r[1] == "arrival" for r in rows)
        assert deps == arrs

    def test_time_sorted_and_alternating(self, demo_inputs):
        cfg, inputs = demo_inputs
        rows = run_day(inputs.plans, build_context(cfg, inputs)).events.rows()
        assert all(a[0] <= b[0] for a, b in zip(rows, rows[1:]))
        last = {}
        for r in rows:
            if r[1] in ("linkEnter", "linkLeave"):
                prev = last.get(r[3])
                assert prev != r[1]
                last[r[3]] = r[1]

    def test_byte_identical_logs(self, demo_inputs, tmp_path):
        cfg, inputs = demo_inputs
        for name in ("a.csv", "b.csv"):
            run_day(inputs.plans, build_context(cfg, inputs)).events.write_csv(tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert len(read_events(tmp_path / "a.csv")) > 0

    def test_infinite_capacity_matches_free_flow(self, demo_inputs):
        cfg, inputs = demo_inputs
        cfg = dataclasses.replace(cfg, mobsim=dataclasses.replace(cfg.mobsim, infinite_capacity=True))
        ctx = build_context(cfg, inputs)
        ttf = TravelTimeField(ctx._fftime)
        router = ttf.router(ctx.net)
        plans = [p.with_leg_mode(0, "car") if p.legs and ctx.household_cars[i] else p
                 for i, p in enumerate(inputs.plans)]
        res = run_day(plans, ctx, ttf)
        checked = 0
        for i, plan in enumerate(plans):
            for k, leg in enumerate(res.legs[i]):
                if leg.record.mode != "car" or leg.penalty:
                    continue
                o = ctx.facility_link[plan.activities[k].facility_id]
                d = ctx.facility_link[plan.activities[k + 1].facility_id]
                links, expect = router.route(o, d, leg.departure)
                assert leg.arrival - leg.departure == expect
                checked += 1
        assert checked > 10

    def test_realized_not_below_free_flow(self, demo_inputs):
        cfg, inputs = demo_inputs
        ctx = build_context(cfg, inputs)
        links, enter, leave = run_day(inputs.plans, ctx).traversals
        assert (leave - enter >= ctx._fftime[links]).all()
