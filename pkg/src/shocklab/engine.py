"""Event-driven core of the graphical construction.

Every lattice bond (x, x+1) carries two Poisson clock streams: right clocks
at rate p and left clocks at rate q.  Clock times are a pure function of
(seed, bond, direction, index) through a counter-based hash, so every
process driven from the same seed consumes identical clock sequences no
matter which bonds it actually visits or in which order replicas are
scheduled.  That property is what makes the basic coupling and exact
replay work.

The scheduler only materialises clocks on bonds where at least one coupled
copy can swap.  Clocks on inactive bonds are no-ops by exclusion, so
skipping them leaves the law untouched; when a bond becomes active its
stream is fast-forwarded past the current time, generating (and counting)
the skipped ticks.

Site encoding: 0 = hole, 1 = second-class particle, 2 = first-class
particle.  The code doubles as the swap priority.
"""

import numpy as np
from numba import njit, uint64, float64

HOLE = 0
SECOND = 1
FIRST = 2

RIGHT = 0  # clock moves content of site x to x+1 (rate p)
LEFT = 1   # clock moves content of site x+1 to x (rate q)

STATUS_OK = 0
STATUS_VIOLATION = 4
STATUS_PAIRFAIL = 5
STATUS_OVERFLOW = 6

# meta_i slots
_M_STATUS = 0
_M_RINGS = 1
_M_SWAPS = 2
_M_X2 = 3
_M_DISC = 4
_M_CHECK = 5
_M_HEAPSZ = 6
_META_LEN = 7

_K1 = uint64(0x9E3779B97F4A7C15)
_K2 = uint64(0xC2B2AE3D27D4EB4F)
_K3 = uint64(0x165667B19E3779F9)


@njit(uint64(uint64), cache=True, nogil=True, inline="always")
def _mix64(z):
    # Stafford mix13 finaliser: full avalanche on 64 bits.
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(uint64(uint64, uint64, uint64, uint64), cache=True, nogil=True, inline="always")
def _ring_hash(seed, bond, dirn, idx):
    h = _mix64(seed ^ (bond + uint64(1)) * _K1)
    return _mix64(h ^ (dirn + uint64(1)) * _K2 ^ idx * _K3)


@njit(float64(uint64, uint64, uint64, uint64, float64), cache=True, nogil=True,
      inline="always")
def _exp_increment(seed, bond, dirn, idx, rate):
    u = (float64(_ring_hash(seed, bond, dirn, idx) >> uint64(11)) + 0.5) * 2.0 ** -53
    return -np.log(u) / rate


@njit(cache=True, nogil=True)
def _clock_times(seed, bond, dirn, rate, n):
    """First n clock times of one bond/direction stream (for tests and replay)."""
    out = np.empty(n, dtype=np.float64)
    t = 0.0
    for i in range(n):
        t += _exp_increment(uint64(seed), uint64(bond), uint64(dirn), uint64(i), rate)
        out[i] = t
    return out


@njit(cache=True, nogil=True, inline="always")
def _entry_lt(t1, b1, d1, t2, b2, d2):
    if t1 != t2:
        return t1 < t2
    if b1 != b2:
        return b1 < b2
    return d1 < d2


@njit(cache=True, nogil=True)
def _heap_push(ht, hb, hd, meta_i, t, b, d):
    n = meta_i[_M_HEAPSZ]
    if n >= ht.size:
        meta_i[_M_STATUS] = STATUS_OVERFLOW
        return
    ht[n] = t
    hb[n] = b
    hd[n] = d
    meta_i[_M_HEAPSZ] = n + 1
    i = n
    while i > 0:
        parent = (i - 1) >> 1
        if _entry_lt(ht[i], hb[i], hd[i], ht[parent], hb[parent], hd[parent]):
            ht[i], ht[parent] = ht[parent], ht[i]
            hb[i], hb[parent] = hb[parent], hb[i]
            hd[i], hd[parent] = hd[parent], hd[i]
            i = parent
        else:
            break


@njit(cache=True, nogil=True)
def _heap_pop(ht, hb, hd, meta_i):
    n = meta_i[_M_HEAPSZ] - 1
    t, b, d = ht[0], hb[0], hd[0]
    ht[0], hb[0], hd[0] = ht[n], hb[n], hd[n]
    meta_i[_M_HEAPSZ] = n
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        m = l
        r = l + 1
        if r < n and _entry_lt(ht[r], hb[r], hd[r], ht[l], hb[l], hd[l]):
            m = r
        if _entry_lt(ht[m], hb[m], hd[m], ht[i], hb[i], hd[i]):
            ht[i], ht[m] = ht[m], ht[i]
            hb[i], hb[m] = hb[m], hb[i]
            hd[i], hd[m] = hd[m], hd[i]
            i = m
        else:
            break
    return t, b, d


@njit(cache=True, nogil=True, inline="always")
def _bond_active(state, b, d):
    nc = state.shape[0]
    for c in range(nc):
        s0 = state[c, b]
        s1 = state[c, b + 1]
        if d == RIGHT:
            if s0 > s1:
                return True
        else:
            if s1 > s0:
                return True
    return False


@njit(cache=True, nogil=True)
def _schedule(sched, gen_time, gen_cnt, ht, hb, hd, meta_i,
              seed, p, q, b, d, now):
    # An already pending clock strictly in the future still applies.
    if sched[b, d] > now:
        return
    rate = p if d == RIGHT else q
    cnt = gen_cnt[b, d]
    t = gen_time[b, d]
    rings = meta_i[_M_RINGS]
    while cnt == 0 or t <= now:
        t += _exp_increment(uint64(seed), uint64(b), uint64(d), uint64(cnt), rate)
        cnt += 1
        rings += 1
    meta_i[_M_RINGS] = rings
    gen_cnt[b, d] = cnt
    gen_time[b, d] = t
    sched[b, d] = t
    _heap_push(ht, hb, hd, meta_i, t, b, d)


@njit(cache=True, nogil=True)
def _init_schedule(state, sched, gen_time, gen_cnt, active,
                   ht, hb, hd, meta_i, seed, p, q, bmin, bmax):
    nb = sched.shape[0]
    for b in range(nb):
        for d in range(2):
            if d == LEFT and q == 0.0:
                continue  # rate-0 streams have no clocks at all
            if _bond_active(state, b, d):
                if b < bmin or b > bmax:
                    meta_i[_M_STATUS] = STATUS_VIOLATION
                    return
                active[b, d] = 1
                _schedule(sched, gen_time, gen_cnt, ht, hb, hd, meta_i,
                          seed, p, q, b, d, 0.0)
            else:
                active[b, d] = 0


@njit(cache=True, nogil=True)
def _advance(state, sched, gen_time, gen_cnt, active, ht, hb, hd,
             meta_i, copy_events, seed, p, q, bmin, bmax, until):
    """Process every clock with time <= until; returns the status code."""
    nb = sched.shape[0]
    nc = state.shape[0]
    check = meta_i[_M_CHECK] != 0
    while meta_i[_M_HEAPSZ] > 0 and ht[0] <= until:
        if meta_i[_M_STATUS] != STATUS_OK:
            return meta_i[_M_STATUS]
        t, b, d = _heap_pop(ht, hb, hd, meta_i)
        if t != sched[b, d]:
            continue  # superseded entry
        if active[b, d] == 0:
            sched[b, d] = -1.0  # no-op clock on an inactive bond
            continue

        if check:
            before = 0
            if state[1, b] != state[2, b]:
                before += 1
            if state[1, b + 1] != state[2, b + 1]:
                before += 1

        swapped_any = False
        for c in range(nc):
            s0 = state[c, b]
            s1 = state[c, b + 1]
            do = (s0 > s1) if d == RIGHT else (s1 > s0)
            if do:
                state[c, b] = s1
                state[c, b + 1] = s0
                copy_events[c] += 1
                swapped_any = True
                if c == 0 and meta_i[_M_X2] >= 0:
                    if s0 == SECOND:
                        meta_i[_M_X2] = b + 1
                    elif s1 == SECOND:
                        meta_i[_M_X2] = b
        meta_i[_M_SWAPS] += 1 if swapped_any else 0

        if check:
            after = 0
            if state[1, b] != state[2, b]:
                after += 1
            if state[1, b + 1] != state[2, b + 1]:
                after += 1
            meta_i[_M_DISC] += after - before
            x2 = meta_i[_M_X2]
            ok = (meta_i[_M_DISC] == 1 and x2 >= 0
                  and state[1, x2] == FIRST and state[2, x2] == HOLE)
            if not ok:
                meta_i[_M_STATUS] = STATUS_PAIRFAIL
                return STATUS_PAIRFAIL

        lo_b = b - 1 if b > 0 else 0
        hi_b = b + 1 if b + 1 < nb else b
        for bb in range(lo_b, hi_b + 1):
            for dd in range(2):
                if dd == LEFT and q == 0.0:
                    continue
                na = _bond_active(state, bb, dd)
                if na:
                    if bb < bmin or bb > bmax:
                        meta_i[_M_STATUS] = STATUS_VIOLATION
                        return STATUS_VIOLATION
                    was = active[bb, dd]
                    active[bb, dd] = 1
                    if was == 0 or (bb == b and dd == d):
                        _schedule(sched, gen_time, gen_cnt, ht, hb, hd,
                                  meta_i, seed, p, q, bb, dd, t)
                else:
                    active[bb, dd] = 0
    return STATUS_OK


def replica_seed(master: int, replica: int) -> int:
    """Derive the per-replica stream seed: a 64-bit mix of (master, replica).

    Stable across versions; replicas with distinct indices get independent
    streams, and the derivation is documented so external tooling can
    reproduce any single replica.
    """
    h = _mix64(uint64(master & 0xFFFFFFFFFFFFFFFF) ^ (uint64(replica + 1) * _K1))
    return int(_mix64(h ^ _K2))


def clock_times(seed: int, bond: int, direction: int, rate: float, n: int) -> np.ndarray:
    """Deterministic clock-time sequence of one bond/direction stream."""
    return _clock_times(uint64(seed), uint64(bond), uint64(direction), float(rate), n)


class Engine:
    """One realisation of the shared graphical construction on a window.

    Drives ``n_copies`` occupancy arrays simultaneously under the same clock
    streams.  ``check_pair=True`` additionally verifies, after every executed
    swap, that copies 1 and 2 differ at exactly one site and that this site
    carries the second-class particle of copy 0 (requires >= 3 copies with
    that layout).
    """

    def __init__(self, states, p, seed, guard=10, check_pair=False):
        states = [np.ascontiguousarray(s, dtype=np.int8) for s in states]
        ns = states[0].size
        for s in states:
            if s.size != ns:
                raise ValueError("all coupled copies must share the window")
        if not 0.5 < p <= 1.0:
            raise ValueError("p must lie in (1/2, 1]")
        self.p = float(p)
        self.q = 1.0 - float(p)
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.guard = int(guard)
        self.state = np.vstack(states)
        nb = ns - 1
        self.nb = nb
        # bonds touching a guard cell are forbidden; activity there means the
        # infinite-lattice dynamics would differ from the truncated one
        self.bmin = self.guard
        self.bmax = nb - 1 - self.guard
        self.sched = np.full((nb, 2), -1.0)
        self.gen_time = np.zeros((nb, 2))
        self.gen_cnt = np.zeros((nb, 2), dtype=np.int64)
        self.active = np.zeros((nb, 2), dtype=np.uint8)
        cap = 5 * nb + 64
        self.ht = np.empty(cap)
        self.hb = np.empty(cap, dtype=np.int64)
        self.hd = np.empty(cap, dtype=np.int64)
        self.meta = np.zeros(_META_LEN, dtype=np.int64)
        self.copy_events = np.zeros(self.state.shape[0], dtype=np.int64)
        self.time = 0.0

        x2 = np.flatnonzero(self.state[0] == SECOND)
        self.meta[_M_X2] = x2[0] if x2.size == 1 else -1
        if check_pair:
            if self.state.shape[0] < 3 or self.meta[_M_X2] < 0:
                raise ValueError("check_pair needs copies (multi, eta1, eta2)")
            self.meta[_M_CHECK] = 1
            self.meta[_M_DISC] = int(np.count_nonzero(self.state[1] != self.state[2]))
            x2 = self.meta[_M_X2]
            if not (self.meta[_M_DISC] == 1 and self.state[1, x2] == FIRST
                    and self.state[2, x2] == HOLE):
                raise ValueError("initial copies violate the pair contract")

        _init_schedule(self.state, self.sched, self.gen_time, self.gen_cnt,
                       self.active, self.ht, self.hb, self.hd, self.meta,
                       uint64(self.seed), self.p, self.q, self.bmin, self.bmax)

    @property
    def status(self):
        return int(self.meta[_M_STATUS])

    @property
    def rings_generated(self):
        return int(self.meta[_M_RINGS])

    @property
    def swaps(self):
        return int(self.meta[_M_SWAPS])

    @property
    def second_index(self):
        """Array index of copy 0's second-class particle (-1 if absent)."""
        return int(self.meta[_M_X2])

    def advance(self, until):
        """Run the dynamics up to and including clocks at time ``until``."""
        if until < self.time:
            raise ValueError("cannot advance backwards")
        if self.status != STATUS_OK:
            return self.status
        st = _advance(self.state, self.sched, self.gen_time, self.gen_cnt,
                      self.active, self.ht, self.hb, self.hd, self.meta,
                      self.copy_events, uint64(self.seed), self.p, self.q,
                      self.bmin, self.bmax, float(until))
        self.time = float(until)
        return int(st)

    def snapshot(self, copy=0):
        return self.state[copy].copy()
