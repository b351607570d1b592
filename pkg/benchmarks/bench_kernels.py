"""Compare the compiled and pure-Python kernels on a grid workload.

Usage: python benchmarks/bench_kernels.py [--grid 12] [--vehicles 3000] [--queries 2000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from rtfleet import kernels
from rtfleet.network import grid_network


def workload(grid: int, vehicles: int, seed: int):
    rng = np.random.default_rng(seed)
    net = grid_network(grid)
    ff = np.ceil(net.length_m / net.freespeed_mps)
    storage, cap = net.storage(), net.cap_per_sec()
    tt = np.repeat(ff[:, None], 96, axis=1)
    demand = sorted((int(rng.integers(0, 86400 - 7200)), v, int(rng.integers(net.n_links)),
                     int(rng.integers(net.n_links))) for v in range(vehicles))
    return net, ff, storage, cap, tt, demand


def bench_router(Router, net, ff, tt, queries, seed):
    rng = np.random.default_rng(seed)
    r = Router(net.out_ptr, net.out_links, net.link_from, net.link_to, tt, 900.0, ff)
    pairs = rng.integers(0, net.n_links, (queries, 2))
    t0 = time.perf_counter()
    for a, b in pairs:
        r.route(int(a), int(b), 28800.0)
    return time.perf_counter() - t0


def bench_queue(QueueSim, Router, net, ff, storage, cap, tt, demand):
    r = Router(net.out_ptr, net.out_links, net.link_from, net.link_to, tt, 900.0, ff)
    routes = [[a] + list(r.route(a, b, t)[0]) for t, _, a, b in demand]
    sim = QueueSim(ff, storage, cap, len(demand), 3600)
    t0 = time.perf_counter()
    for (t, v, _, _), route in zip(demand, routes):
        while sim.advance(t) < t:
            sim.pop_arrivals()
        sim.pop_arrivals()
        sim.insert(v, route, t)
    while True:
        sim.advance(10 ** 7)
        if not sim.pop_arrivals():
            break
    return time.perf_counter() - t0, len(sim.events()[0])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=12)
    ap.add_argument("--vehicles", type=int, default=3000)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)
    net, ff, storage, cap, tt, demand = workload(a.grid, a.vehicles, a.seed)
    print(f"grid {a.grid}x{a.grid}: {net.n_links} links, {a.vehicles} vehicles, {a.queries} route queries")
    results = {}
    for name, QueueSim, Router in kernels.implementations():
        rt = min(bench_router(Router, net, ff, tt, a.queries, a.seed) for _ in range(a.repeat))
        qs = [bench_queue(QueueSim, Router, net, ff, storage, cap, tt, demand) for _ in range(a.repeat)]
        qt, n_events = min(q[0] for q in qs), qs[0][1]
        results[name] = (rt, qt)
        print(f"{name:8s} router {rt * 1e3:9.1f} ms   queue {qt * 1e3:9.1f} ms   ({n_events} link events)")
    if len(results) == 2:
        (pr, pq), (cr, cq) = results["python"], results["cython"]
        print(f"speedup  router {pr / cr:8.1f}x     queue {pq / cq:8.1f}x")
    else:
        print("compiled kernels unavailable; only the fallback was measured")


if __name__ == "__main__":
    main()
