"""Pure-Python reference kernels.

These define the semantics that ``_ckernels.pyx`` mirrors. Both expose
``QueueSim`` (the 1 s queue network stepper) and ``Router`` (time-dependent
least-time paths and the multi-source nearest-vehicle search).
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

EV_ENTER = 0
EV_LEAVE = 1

EXIT_TOL = 1e-9


@dataclass
class LinkQueue:
    """FIFO of ``(vehicle, earliest_exit)`` with a continuous token bucket."""

    storage: int
    cap_per_sec: float
    fftime: float
    items: deque = field(default_factory=deque)
    tokens: float = -1.0
    last_refill: int = 0

    def __post_init__(self):
        if self.tokens < 0:
            self.tokens = self.max_tokens

    @property
    def max_tokens(self) -> float:
        return max(1.0, self.cap_per_sec)

    @property
    def occupancy(self) -> int:
        return len(self.items)

    def has_room(self) -> bool:
        return len(self.items) < self.storage

    def enter(self, vehicle: int, now: int) -> None:
        self.items.append((vehicle, now + self.fftime))

    def refill(self, now: int) -> None:
        if now > self.last_refill:
            self.tokens = min(self.max_tokens, self.tokens + self.cap_per_sec * (now - self.last_refill))
            self.last_refill = now


def process_link_queue(queue: LinkQueue, now: int, downstream: LinkQueue | None) -> list[int]:
    """Release head vehicles of ``queue`` at ``now``.

    ``downstream`` is the next queue of the head vehicle, or ``None`` when the
    vehicle ends its route on this link. Blocked vehicles simply wait.
    """
    out = []
    queue.refill(now)
    while queue.items:
        veh, t_exit = queue.items[0]
        if now < t_exit - EXIT_TOL or queue.tokens < 1.0:
            break
        if downstream is not None and not downstream.has_room():
            break
        queue.items.popleft()
        queue.tokens -= 1.0
        out.append(veh)
        if downstream is not None:
            downstream.enter(veh, now)
    return out


class QueueSim:
    """Queue-based network loading with 1 s steps.

    Vehicles are integers ``0..n_vehicles-1``. ``insert`` places a vehicle at
    the upstream end of its first route link; when it leaves the last link it
    is reported by ``pop_arrivals``. Links are served in ascending index order
    every step.
    """

    def __init__(self, fftime, storage, cap_per_sec, n_vehicles, stuck_time=3600):
        self.n_links = len(fftime)
        self.fftime = np.asarray(fftime, dtype=np.float64)
        self.queues = [
            LinkQueue(int(s), float(c), float(f))
            for f, s, c in zip(self.fftime, storage, cap_per_sec)
        ]
        self.stuck_time = int(stuck_time)
        self.routes: list = [None] * n_vehicles
        self.pos = [0] * n_vehicles
        self.waiting: list = []  # (vehicle, since) waiting to enter first link
        self._n_waiting = [0] * self.n_links
        self.n_in_network = 0
        self.last_step = -1
        self.seq = 0
        self._arrivals: list = []
        self._ev = []  # (seq, time, type, veh, link)
        self._trav = []  # (link, enter, leave)
        self._enter_t = [0] * n_vehicles

    # -- bookkeeping ---------------------------------------------------------
    def next_seq(self) -> int:
        s = self.seq
        self.seq += 1
        return s

    def _event(self, t, kind, veh, link):
        self._ev.append((self.next_seq(), t, kind, veh, link))

    def _enter(self, veh, link, t):
        self.queues[link].enter(veh, t)
        self._enter_t[veh] = t
        self._event(t, EV_ENTER, veh, link)

    def _leave(self, veh, link, t):
        self._event(t, EV_LEAVE, veh, link)
        self._trav.append((link, self._enter_t[veh], t))

    def occupancy(self, link: int) -> int:
        return self.queues[link].occupancy

    # -- public API ----------------------------------------------------------
    def insert(self, veh: int, route, t: int) -> None:
        route = [int(x) for x in route]
        if not route:
            raise ValueError("empty route")
        self.routes[veh] = route
        self.pos[veh] = 0
        self.n_in_network += 1
        first = route[0]
        if not self._n_waiting[first] and self.queues[first].has_room():
            self._enter(veh, first, t)
        else:
            self.waiting.append((veh, t))
            self._n_waiting[first] += 1

    def skip_to(self, t: int) -> None:
        if self.n_in_network:
            raise RuntimeError("cannot skip while vehicles are in the network")
        self.last_step = max(self.last_step, t)

    def pop_arrivals(self):
        out = self._arrivals
        self._arrivals = []
        return out

    def advance(self, t_limit: int) -> int:
        """Step until ``t_limit`` or until a step produced arrivals."""
        t = self.last_step
        while t < t_limit and self.n_in_network:
            t += 1
            self._step(t)
            self.last_step = t
            if self._arrivals:
                return t
        if not self.n_in_network and t < t_limit:
            t = t_limit
            self.last_step = t
        return t

    def _step(self, t: int) -> None:
        queues = self.queues
        for link in range(self.n_links):
            q = queues[link]
            if not q.items:
                continue
            q.refill(t)
            while q.items:
                veh, t_exit = q.items[0]
                if t < t_exit - EXIT_TOL or q.tokens < 1.0:
                    break
                route = self.routes[veh]
                p = self.pos[veh]
                if p + 1 == len(route):
                    q.items.popleft()
                    q.tokens -= 1.0
                    self._leave(veh, link, t)
                    self._finish(veh, link, False)
                    continue
                nxt = route[p + 1]
                if not queues[nxt].has_room():
                    if t - t_exit >= self.stuck_time - EXIT_TOL:
                        q.items.popleft()
                        self._leave(veh, link, t)
                        self._finish(veh, link, True)
                        continue
                    break
                q.items.popleft()
                q.tokens -= 1.0
                self._leave(veh, link, t)
                self.pos[veh] = p + 1
                self._enter(veh, nxt, t)
        if self.waiting:
            still = []
            blocked = set()
            for veh, since in self.waiting:
                first = self.routes[veh][0]
                if first not in blocked and queues[first].has_room():
                    self._n_waiting[first] -= 1
                    self._enter(veh, first, t)
                elif t - since >= self.stuck_time:
                    self._n_waiting[first] -= 1
                    self._finish(veh, -1, True)
                else:
                    blocked.add(first)
                    still.append((veh, since))
            self.waiting = still

    def _finish(self, veh, link, stuck):
        self.n_in_network -= 1
        self.routes[veh] = None
        self._arrivals.append((veh, stuck, link))

    def events(self):
        if not self._ev:
            z = np.zeros(0, dtype=np.int64)
            return z, z, z.astype(np.int8), z.astype(np.int32), z.astype(np.int32)
        a = np.array(self._ev, dtype=np.int64)
        return a[:, 0], a[:, 1], a[:, 2].astype(np.int8), a[:, 3].astype(np.int32), a[:, 4].astype(np.int32)

    def traversals(self):
        if not self._trav:
            z = np.zeros(0, dtype=np.int64)
            return z.astype(np.int32), z, z
        a = np.array(self._trav, dtype=np.int64)
        return a[:, 0].astype(np.int32), a[:, 1], a[:, 2]


class Router:
    """Least-time paths over binned, time-dependent link travel times.

    ``tt`` has shape ``(n_links, n_bins)``; entry times past the last bin
    use ``fftime``. Paths run from the downstream node of ``from_link`` and
    end by traversing ``to_link``. Equal-time paths are broken by the
    lexicographically smaller link index sequence.
    """

    def __init__(self, out_ptr, out_links, link_from, link_to, tt, bin_size, fftime):
        self.out_ptr = np.asarray(out_ptr, dtype=np.int64)
        self.out_links = np.asarray(out_links, dtype=np.int64)
        self.link_from = np.asarray(link_from, dtype=np.int64)
        self.link_to = np.asarray(link_to, dtype=np.int64)
        self.tt = np.ascontiguousarray(tt, dtype=np.float64)
        self.bin_size = float(bin_size)
        self.fftime = np.asarray(fftime, dtype=np.float64)
        self.n_nodes = len(self.out_ptr) - 1
        self.n_bins = self.tt.shape[1]
        # plain lists are much faster to index in the inner loop
        self._ptr = self.out_ptr.tolist()
        self._out = self.out_links.tolist()
        self._to = self.link_to.tolist()
        self._tt = self.tt.tolist()
        self._ff = self.fftime.tolist()

    def link_time(self, link: int, t: float) -> float:
        b = int(t // self.bin_size)
        if 0 <= b < self.n_bins:
            return self._tt[link][b]
        return self._ff[link]

    def _path(self, pred, node):
        out = []
        while pred[node] >= 0:
            link = pred[node]
            out.append(link)
            node = self._from_of(link)
        out.reverse()
        return out

    def _from_of(self, link):
        return int(self.link_from[link])

    def route(self, from_link: int, to_link: int, dep_t: float):
        if from_link == to_link:
            return np.zeros(0, dtype=np.int32), 0.0
        src = int(self.link_to[from_link])
        dst = int(self.link_from[to_link])
        n = self.n_nodes
        dist = [math.inf] * n
        pred = [-1] * n
        done = [False] * n
        dist[src] = float(dep_t)
        heap = [(float(dep_t), src)]
        ptr, out, to = self._ptr, self._out, self._to
        while heap:
            d, u = heapq.heappop(heap)
            if done[u] or d > dist[u]:
                continue
            done[u] = True
            if u == dst:
                break
            for k in range(ptr[u], ptr[u + 1]):
                link = out[k]
                v = to[link]
                if done[v]:
                    continue
                nd = d + self.link_time(link, d)
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = link
                    heapq.heappush(heap, (nd, v))
                elif nd == dist[v] and pred[v] != link:
                    if self._path(pred, u) + [link] < self._path(pred, v):
                        pred[v] = link
        if dist[dst] == math.inf:
            raise LookupError(f"link {to_link} unreachable from link {from_link}")
        links = self._path(pred, dst) + [to_link]
        arr = dist[dst] + self.link_time(to_link, dist[dst])
        return np.asarray(links, dtype=np.int32), arr - float(dep_t)

    def nearest(self, src_links, src_ids, target_link: int, t: float):
        """Index into ``src_links`` of the source with least static travel time.

        Link costs are frozen at the bin of ``t``. Ties go to the smaller
        ``src_ids`` value. Returns ``(-1, inf)`` when nothing can reach the
        target.
        """
        src_links = [int(x) for x in src_links]
        src_ids = [int(x) for x in src_ids]
        best = (math.inf, math.inf, -1)
        for i, (link, vid) in enumerate(zip(src_links, src_ids)):
            if link == target_link and (0.0, vid) < best[:2]:
                best = (0.0, vid, i)
        if best[2] >= 0:
            return best[2], 0.0
        n = self.n_nodes
        b = int(t // self.bin_size)
        if 0 <= b < self.n_bins:
            cost = self.tt[:, b].tolist()
        else:
            cost = self._ff
        INF = (math.inf, math.inf, -1)
        label = [INF] * n
        done = [False] * n
        heap = []
        for i, (link, vid) in enumerate(zip(src_links, src_ids)):
            node = self._to[link]
            lab = (0.0, vid, i)
            if lab < label[node]:
                label[node] = lab
                heapq.heappush(heap, (0.0, vid, i, node))
        dst = int(self.link_from[target_link])
        ptr, out, to = self._ptr, self._out, self._to
        while heap:
            d, vid, i, u = heapq.heappop(heap)
            if done[u] or (d, vid, i) != label[u]:
                continue
            done[u] = True
            if u == dst:
                break
            for k in range(ptr[u], ptr[u + 1]):
                link = out[k]
                v = to[link]
                if done[v]:
                    continue
                lab = (d + cost[link], vid, i)
                if lab[:2] < label[v][:2]:
                    label[v] = lab
                    heapq.heappush(heap, (lab[0], vid, i, v))
        d, vid, i = label[dst]
        if i < 0:
            return -1, math.inf
        return i, d + cost[target_link]
