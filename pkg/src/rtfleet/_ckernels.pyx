# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the classes in ``_pykernels``; same semantics, same API."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, realloc, free
from libc.math cimport floor, INFINITY

cnp.import_array()

cdef double EXIT_TOL = 1e-9

cdef struct Event:
    long long seq
    long long time
    int kind
    int veh
    int link

cdef struct Trav:
    int link
    long long enter
    long long leave

cdef struct Waiter:
    int veh
    long long since


cdef class QueueSim:
    cdef int n_links, n_veh
    cdef double[::1] fftime, cap, max_tok, tokens
    cdef long long[::1] storage, last_refill, qhead, qlen, qcap, qoff
    cdef int[::1] qveh
    cdef double[::1] qexit
    cdef int[::1] n_waiting
    cdef long long stuck_time
    cdef int** routes
    cdef int* route_len
    cdef int* pos
    cdef long long* enter_t
    cdef Waiter* waiting
    cdef long long n_wait, cap_wait
    cdef Event* ev
    cdef long long n_ev, cap_ev
    cdef Trav* trav
    cdef long long n_trav, cap_trav
    cdef public long long n_in_network
    cdef public long long last_step
    cdef public long long seq
    cdef list _arrivals

    def __cinit__(self, fftime, storage, cap_per_sec, int n_vehicles, stuck_time=3600):
        cdef int i
        self.n_links = len(fftime)
        self.n_veh = n_vehicles
        self.fftime = np.ascontiguousarray(fftime, dtype=np.float64).copy()
        self.cap = np.ascontiguousarray(cap_per_sec, dtype=np.float64).copy()
        self.storage = np.ascontiguousarray(storage, dtype=np.int64).copy()
        self.max_tok = np.maximum(1.0, np.asarray(self.cap))
        self.tokens = np.asarray(self.max_tok).copy()
        self.last_refill = np.zeros(self.n_links, dtype=np.int64)
        qcap = np.minimum(np.asarray(self.storage), max(n_vehicles, 1)).astype(np.int64)
        self.qcap = qcap
        self.qoff = np.concatenate([[0], np.cumsum(qcap)[:-1]]).astype(np.int64) if self.n_links else np.zeros(0, dtype=np.int64)
        total = int(qcap.sum()) if self.n_links else 0
        self.qveh = np.zeros(max(total, 1), dtype=np.int32)
        self.qexit = np.zeros(max(total, 1), dtype=np.float64)
        self.qhead = np.zeros(self.n_links, dtype=np.int64)
        self.qlen = np.zeros(self.n_links, dtype=np.int64)
        self.n_waiting = np.zeros(self.n_links, dtype=np.int32)
        self.stuck_time = int(stuck_time)
        self.routes = <int**> malloc(max(n_vehicles, 1) * sizeof(int*))
        self.route_len = <int*> malloc(max(n_vehicles, 1) * sizeof(int))
        self.pos = <int*> malloc(max(n_vehicles, 1) * sizeof(int))
        self.enter_t = <long long*> malloc(max(n_vehicles, 1) * sizeof(long long))
        for i in range(n_vehicles):
            self.routes[i] = NULL
            self.route_len[i] = 0
            self.pos[i] = 0
            self.enter_t[i] = 0
        self.cap_wait = 64
        self.waiting = <Waiter*> malloc(self.cap_wait * sizeof(Waiter))
        self.n_wait = 0
        self.cap_ev = 1024
        self.ev = <Event*> malloc(self.cap_ev * sizeof(Event))
        self.n_ev = 0
        self.cap_trav = 512
        self.trav = <Trav*> malloc(self.cap_trav * sizeof(Trav))
        self.n_trav = 0
        self.n_in_network = 0
        self.last_step = -1
        self.seq = 0
        self._arrivals = []

    def __dealloc__(self):
        cdef int i
        if self.routes != NULL:
            for i in range(self.n_veh):
                if self.routes[i] != NULL:
                    free(self.routes[i])
            free(self.routes)
        free(self.route_len)
        free(self.pos)
        free(self.enter_t)
        free(self.waiting)
        free(self.ev)
        free(self.trav)

    cpdef long long next_seq(self):
        cdef long long s = self.seq
        self.seq += 1
        return s

    cdef inline void _event(self, long long t, int kind, int veh, int link):
        if self.n_ev == self.cap_ev:
            self.cap_ev *= 2
            self.ev = <Event*> realloc(self.ev, self.cap_ev * sizeof(Event))
        self.ev[self.n_ev].seq = self.seq
        self.seq += 1
        self.ev[self.n_ev].time = t
        self.ev[self.n_ev].kind = kind
        self.ev[self.n_ev].veh = veh
        self.ev[self.n_ev].link = link
        self.n_ev += 1

    cdef inline void _push(self, int link, int veh, double t_exit):
        cdef long long slot = self.qoff[link] + (self.qhead[link] + self.qlen[link]) % self.qcap[link]
        self.qveh[slot] = veh
        self.qexit[slot] = t_exit
        self.qlen[link] += 1

    cdef inline void _enter(self, int veh, int link, long long t):
        self._push(link, veh, t + self.fftime[link])
        self.enter_t[veh] = t
        self._event(t, 0, veh, link)

    cdef inline void _leave(self, int veh, int link, long long t):
        self._event(t, 1, veh, link)
        if self.n_trav == self.cap_trav:
            self.cap_trav *= 2
            self.trav = <Trav*> realloc(self.trav, self.cap_trav * sizeof(Trav))
        self.trav[self.n_trav].link = link
        self.trav[self.n_trav].enter = self.enter_t[veh]
        self.trav[self.n_trav].leave = t
        self.n_trav += 1

    cdef inline void _pop(self, int link):
        self.qhead[link] = (self.qhead[link] + 1) % self.qcap[link]
        self.qlen[link] -= 1

    cdef inline bint _has_room(self, int link):
        return self.qlen[link] < self.storage[link]

    cdef void _finish(self, int veh, int link, bint stuck):
        self.n_in_network -= 1
        free(self.routes[veh])
        self.routes[veh] = NULL
        self._arrivals.append((veh, bool(stuck), link))

    def occupancy(self, int link):
        return int(self.qlen[link])

    def insert(self, int veh, route, long long t):
        cdef cnp.int32_t[::1] r = np.ascontiguousarray(route, dtype=np.int32)
        cdef int n = r.shape[0]
        cdef int i, first
        if n == 0:
            raise ValueError("empty route")
        if self.routes[veh] != NULL:
            free(self.routes[veh])
        self.routes[veh] = <int*> malloc(n * sizeof(int))
        for i in range(n):
            self.routes[veh][i] = r[i]
        self.route_len[veh] = n
        self.pos[veh] = 0
        self.n_in_network += 1
        first = r[0]
        if self.n_waiting[first] == 0 and self._has_room(first):
            self._enter(veh, first, t)
        else:
            if self.n_wait == self.cap_wait:
                self.cap_wait *= 2
                self.waiting = <Waiter*> realloc(self.waiting, self.cap_wait * sizeof(Waiter))
            self.waiting[self.n_wait].veh = veh
            self.waiting[self.n_wait].since = t
            self.n_wait += 1
            self.n_waiting[first] += 1

    def skip_to(self, long long t):
        if self.n_in_network:
            raise RuntimeError("cannot skip while vehicles are in the network")
        if t > self.last_step:
            self.last_step = t

    def pop_arrivals(self):
        out = self._arrivals
        self._arrivals = []
        return out

    def advance(self, long long t_limit):
        cdef long long t = self.last_step
        while t < t_limit and self.n_in_network:
            t += 1
            self._step(t)
            self.last_step = t
            if len(self._arrivals):
                return t
        if not self.n_in_network and t < t_limit:
            t = t_limit
            self.last_step = t
        return t

    cdef void _step(self, long long t):
        cdef int link, veh, p, nxt, first
        cdef long long slot, i, k
        cdef double t_exit, tok
        cdef long long dt
        cdef char* blocked
        for link in range(self.n_links):
            if self.qlen[link] == 0:
                continue
            dt = t - self.last_refill[link]
            if dt > 0:
                tok = self.tokens[link] + self.cap[link] * dt
                self.tokens[link] = tok if tok < self.max_tok[link] else self.max_tok[link]
                self.last_refill[link] = t
            while self.qlen[link] > 0:
                slot = self.qoff[link] + self.qhead[link]
                veh = self.qveh[slot]
                t_exit = self.qexit[slot]
                if t < t_exit - EXIT_TOL or self.tokens[link] < 1.0:
                    break
                p = self.pos[veh]
                if p + 1 == self.route_len[veh]:
                    self._pop(link)
                    self.tokens[link] -= 1.0
                    self._leave(veh, link, t)
                    self._finish(veh, link, False)
                    continue
                nxt = self.routes[veh][p + 1]
                if not self._has_room(nxt):
                    if t - t_exit >= self.stuck_time - EXIT_TOL:
                        self._pop(link)
                        self._leave(veh, link, t)
                        self._finish(veh, link, True)
                        continue
                    break
                self._pop(link)
                self.tokens[link] -= 1.0
                self._leave(veh, link, t)
                self.pos[veh] = p + 1
                self._enter(veh, nxt, t)
        if self.n_wait:
            blocked = <char*> malloc(self.n_links)
            for i in range(self.n_links):
                blocked[i] = 0
            k = 0
            for i in range(self.n_wait):
                veh = self.waiting[i].veh
                first = self.routes[veh][0]
                if not blocked[first] and self._has_room(first):
                    self.n_waiting[first] -= 1
                    self._enter(veh, first, t)
                elif t - self.waiting[i].since >= self.stuck_time:
                    self.n_waiting[first] -= 1
                    self._finish(veh, -1, True)
                else:
                    blocked[first] = 1
                    self.waiting[k] = self.waiting[i]
                    k += 1
            self.n_wait = k
            free(blocked)

    def events(self):
        cdef long long i, n = self.n_ev
        seq = np.empty(n, dtype=np.int64)
        time = np.empty(n, dtype=np.int64)
        kind = np.empty(n, dtype=np.int8)
        veh = np.empty(n, dtype=np.int32)
        link = np.empty(n, dtype=np.int32)
        cdef cnp.int64_t[::1] s = seq
        cdef cnp.int64_t[::1] tt = time
        cdef cnp.int8_t[::1] kk = kind
        cdef cnp.int32_t[::1] vv = veh
        cdef cnp.int32_t[::1] ll = link
        for i in range(n):
            s[i] = self.ev[i].seq
            tt[i] = self.ev[i].time
            kk[i] = self.ev[i].kind
            vv[i] = self.ev[i].veh
            ll[i] = self.ev[i].link
        return seq, time, kind, veh, link

    def traversals(self):
        cdef long long i, n = self.n_trav
        link = np.empty(n, dtype=np.int32)
        enter = np.empty(n, dtype=np.int64)
        leave = np.empty(n, dtype=np.int64)
        cdef cnp.int32_t[::1] ll = link
        cdef cnp.int64_t[::1] ee = enter
        cdef cnp.int64_t[::1] lv = leave
        for i in range(n):
            ll[i] = self.trav[i].link
            ee[i] = self.trav[i].enter
            lv[i] = self.trav[i].leave
        return link, enter, leave


# ---------------------------------------------------------------------------
# routing

cdef struct HeapItem:
    double key
    long long sub
    int node
    int idx


cdef class _Heap:
    cdef HeapItem* a
    cdef int n, cap

    def __cinit__(self, int cap):
        self.cap = max(cap, 16)
        self.a = <HeapItem*> malloc(self.cap * sizeof(HeapItem))
        self.n = 0

    def __dealloc__(self):
        free(self.a)

    cdef inline bint _less(self, HeapItem x, HeapItem y):
        if x.key != y.key:
            return x.key < y.key
        if x.sub != y.sub:
            return x.sub < y.sub
        return x.node < y.node

    cdef void push(self, double key, long long sub, int node, int idx):
        cdef int i, parent
        cdef HeapItem item
        if self.n == self.cap:
            self.cap *= 2
            self.a = <HeapItem*> realloc(self.a, self.cap * sizeof(HeapItem))
        item.key = key
        item.sub = sub
        item.node = node
        item.idx = idx
        i = self.n
        self.n += 1
        while i > 0:
            parent = (i - 1) >> 1
            if self._less(item, self.a[parent]):
                self.a[i] = self.a[parent]
                i = parent
            else:
                break
        self.a[i] = item

    cdef HeapItem pop(self):
        cdef HeapItem top = self.a[0]
        cdef HeapItem last
        cdef int i, c
        self.n -= 1
        if self.n > 0:
            last = self.a[self.n]
            i = 0
            while True:
                c = 2 * i + 1
                if c >= self.n:
                    break
                if c + 1 < self.n and self._less(self.a[c + 1], self.a[c]):
                    c += 1
                if self._less(self.a[c], last):
                    self.a[i] = self.a[c]
                    i = c
                else:
                    break
            self.a[i] = last
        return top


cdef class Router:
    cdef long long[::1] out_ptr, out_links, link_from, link_to
    cdef double[:, ::1] tt
    cdef double[::1] fftime
    cdef double bin_size
    cdef int n_nodes, n_bins, n_links
    cdef double* dist
    cdef int* pred
    cdef char* done
    cdef int* buf_a
    cdef int* buf_b

    def __cinit__(self, out_ptr, out_links, link_from, link_to, tt, bin_size, fftime):
        self.out_ptr = np.ascontiguousarray(out_ptr, dtype=np.int64)
        self.out_links = np.ascontiguousarray(out_links, dtype=np.int64)
        self.link_from = np.ascontiguousarray(link_from, dtype=np.int64)
        self.link_to = np.ascontiguousarray(link_to, dtype=np.int64)
        self.tt = np.ascontiguousarray(tt, dtype=np.float64)
        self.fftime = np.ascontiguousarray(fftime, dtype=np.float64)
        self.bin_size = float(bin_size)
        self.n_nodes = len(out_ptr) - 1
        self.n_links = len(link_from)
        self.n_bins = self.tt.shape[1]
        self.dist = <double*> malloc(max(self.n_nodes, 1) * sizeof(double))
        self.pred = <int*> malloc(max(self.n_nodes, 1) * sizeof(int))
        self.done = <char*> malloc(max(self.n_nodes, 1))
        self.buf_a = <int*> malloc((self.n_links + 2) * sizeof(int))
        self.buf_b = <int*> malloc((self.n_links + 2) * sizeof(int))

    def __dealloc__(self):
        free(self.dist)
        free(self.pred)
        free(self.done)
        free(self.buf_a)
        free(self.buf_b)

    cdef inline double _time(self, int link, double t):
        cdef long long b = <long long> floor(t / self.bin_size)
        if b >= 0 and b < self.n_bins:
            return self.tt[link, b]
        return self.fftime[link]

    def link_time(self, int link, double t):
        return self._time(link, t)

    cdef int _path(self, int node, int* buf):
        # forward link sequence from the source into ``buf``; returns length
        cdef int n = 0, i, tmp, link
        while self.pred[node] >= 0:
            link = self.pred[node]
            buf[n] = link
            n += 1
            node = <int> self.link_from[link]
        for i in range(n // 2):
            tmp = buf[i]
            buf[i] = buf[n - 1 - i]
            buf[n - 1 - i] = tmp
        return n

    cdef bint _lex_better(self, int u, int link, int v):
        # is path(u) + [link] lexicographically smaller than path(v)?
        cdef int na = self._path(u, self.buf_a)
        cdef int nb = self._path(v, self.buf_b)
        cdef int i
        self.buf_a[na] = link
        na += 1
        for i in range(na if na < nb else nb):
            if self.buf_a[i] != self.buf_b[i]:
                return self.buf_a[i] < self.buf_b[i]
        return na < nb

    def route(self, int from_link, int to_link, double dep_t):
        cdef int src, dst, u, v, link, i, n
        cdef long long k
        cdef double d, nd
        cdef HeapItem it
        if from_link == to_link:
            return np.zeros(0, dtype=np.int32), 0.0
        src = <int> self.link_to[from_link]
        dst = <int> self.link_from[to_link]
        for i in range(self.n_nodes):
            self.dist[i] = INFINITY
            self.pred[i] = -1
            self.done[i] = 0
        heap = _Heap(self.n_nodes)
        self.dist[src] = dep_t
        heap.push(dep_t, 0, src, 0)
        while heap.n:
            it = heap.pop()
            d = it.key
            u = it.node
            if self.done[u] or d > self.dist[u]:
                continue
            self.done[u] = 1
            if u == dst:
                break
            for k in range(self.out_ptr[u], self.out_ptr[u + 1]):
                link = <int> self.out_links[k]
                v = <int> self.link_to[link]
                if self.done[v]:
                    continue
                nd = d + self._time(link, d)
                if nd < self.dist[v]:
                    self.dist[v] = nd
                    self.pred[v] = link
                    heap.push(nd, 0, v, 0)
                elif nd == self.dist[v] and self.pred[v] != link:
                    if self._lex_better(u, link, v):
                        self.pred[v] = link
        if self.dist[dst] == INFINITY:
            raise LookupError(f"link {to_link} unreachable from link {from_link}")
        n = self._path(dst, self.buf_a)
        out = np.empty(n + 1, dtype=np.int32)
        for i in range(n):
            out[i] = self.buf_a[i]
        out[n] = to_link
        d = self.dist[dst]
        return out, d + self._time(to_link, d) - dep_t

    def nearest(self, src_links, src_ids, int target_link, double t):
        cdef cnp.int64_t[::1] sl = np.ascontiguousarray(src_links, dtype=np.int64)
        cdef cnp.int64_t[::1] sv = np.ascontiguousarray(src_ids, dtype=np.int64)
        cdef int m = sl.shape[0]
        cdef int i, u, v, link, dst, best = -1
        cdef long long k, bvid = 0
        cdef long long b
        cdef double d, nd, c
        cdef HeapItem it
        for i in range(m):
            if sl[i] == target_link and (best < 0 or sv[i] < bvid):
                best = i
                bvid = sv[i]
        if best >= 0:
            return best, 0.0
        b = <long long> floor(t / self.bin_size)
        cdef bint use_tt = b >= 0 and b < self.n_bins
        cdef long long* lvid = <long long*> malloc(max(self.n_nodes, 1) * sizeof(long long))
        for i in range(self.n_nodes):
            self.dist[i] = INFINITY
            self.pred[i] = -1  # source index
            self.done[i] = 0
            lvid[i] = 0
        heap = _Heap(self.n_nodes + m)
        for i in range(m):
            u = <int> self.link_to[sl[i]]
            if self.dist[u] > 0.0 or sv[i] < lvid[u]:
                self.dist[u] = 0.0
                lvid[u] = sv[i]
                self.pred[u] = i
                heap.push(0.0, sv[i], u, i)
        dst = <int> self.link_from[target_link]
        while heap.n:
            it = heap.pop()
            u = it.node
            if self.done[u] or it.key != self.dist[u] or it.sub != lvid[u]:
                continue
            self.done[u] = 1
            if u == dst:
                break
            d = it.key
            for k in range(self.out_ptr[u], self.out_ptr[u + 1]):
                link = <int> self.out_links[k]
                v = <int> self.link_to[link]
                if self.done[v]:
                    continue
                c = self.tt[link, b] if use_tt else self.fftime[link]
                nd = d + c
                if nd < self.dist[v] or (nd == self.dist[v] and it.sub < lvid[v]):
                    self.dist[v] = nd
                    lvid[v] = it.sub
                    self.pred[v] = it.idx
                    heap.push(nd, it.sub, v, it.idx)
        i = self.pred[dst]
        d = self.dist[dst]
        free(lvid)
        if i < 0 or d == INFINITY:
            return -1, float("inf")
        c = self.tt[target_link, b] if use_tt else self.fftime[target_link]
        return i, d + c
