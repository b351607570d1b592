"""Road network, travel-time field and teleported-mode arithmetic."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import Router
from .model import ConfigError

QUANTUM = 1.0 / 64.0  # travel times are multiples of this so path sums are exact


@dataclass
class Network:
    node_ids: np.ndarray
    node_x: np.ndarray
    node_y: np.ndarray
    link_ids: np.ndarray
    link_from: np.ndarray  # node index
    link_to: np.ndarray  # node index
    length_m: np.ndarray
    freespeed_mps: np.ndarray
    capacity_veh_h: np.ndarray
    lanes: np.ndarray
    out_ptr: np.ndarray = field(init=False, repr=False)
    out_links: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if (self.length_m <= 0).any():
            raise ConfigError("links.csv: lengthM must be > 0")
        if (self.freespeed_mps <= 0).any():
            raise ConfigError("links.csv: freespeedMps must be > 0")
        if (self.capacity_veh_h <= 0).any() or (self.lanes <= 0).any():
            raise ConfigError("links.csv: capacity and lanes must be > 0")
        n = len(self.node_ids)
        order = np.lexsort((np.arange(len(self.link_from)), self.link_from))
        counts = np.bincount(self.link_from, minlength=n)
        self.out_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.out_links = order.astype(np.int64)
        self._index = {int(v): i for i, v in enumerate(self.link_ids)}
        if not self._weakly_connected():
            raise ConfigError("network is not weakly connected")

    @property
    def n_links(self) -> int:
        return len(self.link_ids)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def link_index(self, link_id: int) -> int:
        return self._index[int(link_id)]

    def _weakly_connected(self) -> bool:
        n = self.n_nodes
        if n == 0:
            return True
        adj = [[] for _ in range(n)]
        for a, b in zip(self.link_from.tolist(), self.link_to.tolist()):
            adj[a].append(b)
            adj[b].append(a)
        seen = {0}
        stack = [0]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == n

    def fftime(self) -> np.ndarray:
        """Free-flow traversal in whole seconds, matching the 1 s step."""
        return np.ceil(self.length_m / self.freespeed_mps - 1e-9)

    def storage(self, cell_length_m: float = 7.5, infinite: bool = False) -> np.ndarray:
        if infinite:
            return np.full(self.n_links, 2**30, dtype=np.int64)
        return np.maximum(1, np.floor(self.length_m * self.lanes / cell_length_m)).astype(np.int64)

    def cap_per_sec(self, infinite: bool = False) -> np.ndarray:
        if infinite:
            return np.full(self.n_links, 1e12)
        return self.capacity_veh_h / 3600.0

    def link_midpoints(self) -> tuple[np.ndarray, np.ndarray]:
        x = (self.node_x[self.link_from] + self.node_x[self.link_to]) / 2
        y = (self.node_y[self.link_from] + self.node_y[self.link_to]) / 2
        return x, y

    def nearest_link(self, x: float, y: float) -> int:
        mx, my = self.link_midpoints()
        d = np.hypot(mx - x, my - y)
        return int(np.argmin(d))  # first index wins ties

    def path_length_m(self, links) -> float:
        return float(self.length_m[np.asarray(links, dtype=np.int64)].sum()) if len(links) else 0.0


def read_network(nodes_csv, links_csv) -> Network:
    with open(nodes_csv, newline="", encoding="utf-8") as f:
        nodes = list(csv.DictReader(f))
    with open(links_csv, newline="", encoding="utf-8") as f:
        links = list(csv.DictReader(f))
    node_index = {int(r["nodeId"]): i for i, r in enumerate(nodes)}
    try:
        lf = np.array([node_index[int(r["fromNode"])] for r in links], dtype=np.int64)
        lt = np.array([node_index[int(r["toNode"])] for r in links], dtype=np.int64)
    except KeyError as e:
        raise ConfigError(f"links.csv references unknown node {e}") from None
    return Network(
        node_ids=np.array([int(r["nodeId"]) for r in nodes], dtype=np.int64),
        node_x=np.array([float(r["x"]) for r in nodes]),
        node_y=np.array([float(r["y"]) for r in nodes]),
        link_ids=np.array([int(r["linkId"]) for r in links], dtype=np.int64),
        link_from=lf,
        link_to=lt,
        length_m=np.array([float(r["lengthM"]) for r in links]),
        freespeed_mps=np.array([float(r["freespeedMps"]) for r in links]),
        capacity_veh_h=np.array([float(r["flowCapacityVehPerHour"]) for r in links]),
        lanes=np.array([float(r["lanes"]) for r in links]),
    )


def write_network(net: Network, nodes_csv, links_csv) -> None:
    with open(nodes_csv, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["nodeId", "x", "y"])
        for i in range(net.n_nodes):
            w.writerow([net.node_ids[i], f"{net.node_x[i]:.1f}", f"{net.node_y[i]:.1f}"])
    with open(links_csv, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["linkId", "fromNode", "toNode", "lengthM", "freespeedMps", "flowCapacityVehPerHour", "lanes"])
        for i in range(net.n_links):
            w.writerow([net.link_ids[i], net.node_ids[net.link_from[i]], net.node_ids[net.link_to[i]],
                        f"{net.length_m[i]:g}", f"{net.freespeed_mps[i]:.6g}",
                        f"{net.capacity_veh_h[i]:g}", f"{net.lanes[i]:g}"])


def grid_network(n: int, spacing_m: float = 500.0, speed_kmh: float = 50.0,
                 cap_per_lane_h: float = 600.0, lanes: int = 1) -> Network:
    """``n x n`` Manhattan grid with links in both directions between neighbours."""
    if n < 2:
        raise ConfigError("grid size must be >= 2")
    ids = np.arange(n * n, dtype=np.int64)
    xs = (ids % n) * spacing_m
    ys = (ids // n) * spacing_m
    pairs = []
    for r in range(n):
        for c in range(n):
            u = r * n + c
            if c + 1 < n:
                pairs += [(u, u + 1), (u + 1, u)]
            if r + 1 < n:
                pairs += [(u, u + n), (u + n, u)]
    a = np.array(pairs, dtype=np.int64)
    m = len(a)
    return Network(
        node_ids=ids, node_x=xs.astype(float), node_y=ys.astype(float),
        link_ids=np.arange(m, dtype=np.int64), link_from=a[:, 0], link_to=a[:, 1],
        length_m=np.full(m, spacing_m), freespeed_mps=np.full(m, speed_kmh / 3.6),
        capacity_veh_h=np.full(m, cap_per_lane_h * lanes), lanes=np.full(m, float(lanes)),
    )


class TravelTimeField:
    """Per-link, per-bin expected traversal times fed back between days."""

    def __init__(self, fftime, bin_sec: float = 900.0, horizon_sec: float = 36 * 3600.0,
                 smoothing: float = 0.3):
        self.fftime = np.asarray(fftime, dtype=float)
        self.bin_sec = float(bin_sec)
        self.n_bins = int(math.ceil(horizon_sec / bin_sec))
        self.smoothing = float(smoothing)
        self.tt = np.repeat(self.fftime[:, None], self.n_bins, axis=1)

    def update(self, links, enter, leave) -> None:
        """Blend in one day of realized traversals; empty bins relax to free flow."""
        links = np.asarray(links, dtype=np.int64)
        enter = np.asarray(enter, dtype=float)
        obs = np.repeat(self.fftime[:, None], self.n_bins, axis=1)
        if len(links):
            b = np.minimum((enter // self.bin_sec).astype(np.int64), self.n_bins - 1)
            flat = links * self.n_bins + b
            size = self.tt.size
            total = np.bincount(flat, weights=np.asarray(leave, dtype=float) - enter, minlength=size)
            count = np.bincount(flat, minlength=size)
            seen = count > 0
            obs_flat = obs.reshape(-1)
            obs_flat[seen] = total[seen] / count[seen]
        w = self.smoothing
        new = (1 - w) * self.tt + w * obs
        self.tt = np.maximum(np.round(new / QUANTUM) * QUANTUM, self.fftime[:, None])

    def router(self, net: Network) -> "Router":
        return Router(net.out_ptr, net.out_links, net.link_from, net.link_to, self.tt, self.bin_sec,
                      self.fftime)


def route_vehicle(router, from_link: int, to_link: int, dep_t: float):
    """Links after ``from_link`` up to and including ``to_link``, with expected time."""
    return router.route(int(from_link), int(to_link), float(dep_t))


@dataclass(frozen=True)
class TeleportConfig:
    walk_speed_kmh: float = 5.0
    pt_speed_kmh: float = 20.0
    detour_factor: float = 1.3
    pt_fare_eur: float = 1.43


def teleport_leg(mode: str, from_xy, to_xy, cfg: TeleportConfig = TeleportConfig()):
    """``(travel time in whole seconds, distance km, cost EUR)``."""
    if mode not in ("walk", "pt"):
        raise ValueError(f"mode {mode!r} is not teleported")
    beeline_m = math.hypot(to_xy[0] - from_xy[0], to_xy[1] - from_xy[1])
    dist_km = beeline_m * cfg.detour_factor / 1000.0
    speed = cfg.walk_speed_kmh if mode == "walk" else cfg.pt_speed_kmh
    t = math.ceil(dist_km / speed * 3600.0 - 1e-6) if dist_km > 0 else 0
    cost = cfg.pt_fare_eur if mode == "pt" else 0.0
    return float(t), dist_km, cost
