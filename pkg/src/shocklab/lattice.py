"""Lattice window, species configurations, and the coupled evolution ops."""

from dataclasses import dataclass, field

import numpy as np

from .engine import (HOLE, SECOND, FIRST, RIGHT, LEFT, STATUS_OK,
                     STATUS_VIOLATION, STATUS_PAIRFAIL, Engine, clock_times)
from .errors import CouplingError, WindowViolationError

PACKED = "packed"
EMPTY = "empty"

SPECIES_NAMES = {HOLE: "hole", SECOND: "second", FIRST: "first"}


def species_priority(value: int) -> int:
    """Swap priority: first > second > hole (the codes are the priorities)."""
    if value not in SPECIES_NAMES:
        raise ValueError(f"unknown species code {value}")
    return value


@dataclass(frozen=True)
class ArrowStream:
    """Seeded family of per-bond Poisson clock streams (right rate p, left q).

    The streams themselves live in the engine; this object is the key.  Two
    evolutions driven by equal (seed, p) consume identical clock sequences
    per (bond, direction): that is the basic coupling.
    """

    seed: int
    p: float

    def __post_init__(self):
        if not 0.5 < self.p <= 1.0:
            raise ValueError("p must lie in (1/2, 1]")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    def ring_times(self, bond: int, direction: int, n: int) -> np.ndarray:
        """First n clock times of the (bond, direction) stream."""
        rate = self.p if direction == RIGHT else self.q
        return clock_times(self.seed, bond, direction, rate, n)


@dataclass
class Configuration:
    """Occupancy of the window [lo, hi] with sentinel guard cells at each edge.

    Boundary conventions state what the guards emulate: ``packed`` stands in
    for an infinite block of first-class particles, ``empty`` for holes to
    infinity.  Guard cells must keep their initial value for the entire run,
    otherwise the truncation margin was too small and the run is invalid.
    """

    lo: int
    hi: int
    occupancy: np.ndarray
    left_boundary: str = PACKED
    right_boundary: str = EMPTY
    guard_width: int = 10

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=np.int8)
        if self.occupancy.size != self.hi - self.lo + 1:
            raise ValueError("occupancy length does not match window")
        if self.guard_width < 1 or 2 * self.guard_width >= self.occupancy.size:
            raise ValueError("guard_width must be positive and fit the window")
        for name in (self.left_boundary, self.right_boundary):
            if name not in (PACKED, EMPTY):
                raise ValueError(f"unknown boundary convention {name!r}")
        g = self.guard_width
        want_l = FIRST if self.left_boundary == PACKED else HOLE
        want_r = FIRST if self.right_boundary == PACKED else HOLE
        if not (self.occupancy[:g] == want_l).all():
            raise ValueError("left guard cells disagree with the boundary convention")
        if not (self.occupancy[-g:] == want_r).all():
            raise ValueError("right guard cells disagree with the boundary convention")

    # -- indexing helpers -------------------------------------------------
    def index(self, site: int) -> int:
        if not self.lo <= site <= self.hi:
            raise ValueError(f"site {site} outside window [{self.lo}, {self.hi}]")
        return site - self.lo

    def value(self, site: int) -> int:
        return int(self.occupancy[self.index(site)])

    def sites_of(self, species: int) -> np.ndarray:
        """Sorted lattice sites holding the given species."""
        return np.flatnonzero(self.occupancy == species) + self.lo

    def second_position(self) -> int:
        pos = self.sites_of(SECOND)
        if pos.size != 1:
            raise ValueError("configuration does not hold exactly one second-class particle")
        return int(pos[0])

    def counts(self) -> dict:
        return {name: int(np.count_nonzero(self.occupancy == code))
                for code, name in SPECIES_NAMES.items()}

    def copy(self) -> "Configuration":
        return Configuration(self.lo, self.hi, self.occupancy.copy(),
                             self.left_boundary, self.right_boundary,
                             self.guard_width)

    def same_window(self, other: "Configuration") -> bool:
        return (self.lo, self.hi, self.guard_width) == (other.lo, other.hi, other.guard_width)

    def project(self, second_to: int) -> "Configuration":
        """Replace the second-class particle by ``second_to`` (FIRST or HOLE)."""
        if second_to not in (FIRST, HOLE):
            raise ValueError("projection target must be FIRST or HOLE")
        occ = self.occupancy.copy()
        occ[occ == SECOND] = second_to
        return Configuration(self.lo, self.hi, occ, self.left_boundary,
                             self.right_boundary, self.guard_width)

    def rle(self) -> str:
        """Run-length encoded occupancy, e.g. '12*2,3*0,1*1' (count*code)."""
        occ = self.occupancy
        edges = np.flatnonzero(np.diff(occ)) + 1
        starts = np.concatenate(([0], edges))
        ends = np.concatenate((edges, [occ.size]))
        return ",".join(f"{e - s}*{int(occ[s])}" for s, e in zip(starts, ends))


def blank_window(lo: int, hi: int, left_boundary: str, right_boundary: str,
                 guard_width: int = 10) -> Configuration:
    """Window filled entirely according to its boundary conventions.

    Left of some cut every site matches the left convention, right of it the
    right one; the cut defaults to the middle and callers overwrite the bulk
    anyway.  Used by the initial-condition builders.
    """
    n = hi - lo + 1
    occ = np.full(n, HOLE, dtype=np.int8)
    if left_boundary == PACKED:
        occ[: n // 2] = FIRST
    if right_boundary == PACKED:
        occ[n // 2:] = FIRST
    return Configuration(lo, hi, occ, left_boundary, right_boundary, guard_width)


@dataclass
class Trajectory:
    """Observed snapshots of one coupled copy plus its executed-swap count."""

    snapshots: list = field(default_factory=list)
    event_count: int = 0
    violation_flag: bool = False
    rings_generated: int = 0

    def times(self):
        return [t for t, _ in self.snapshots]

    def at(self, time: float) -> Configuration:
        for t, cfg in self.snapshots:
            if t == time:
                return cfg
        raise KeyError(f"no snapshot at time {time}")

    @property
    def final(self) -> Configuration:
        return self.snapshots[-1][1]


def _evolve(configs, stream, horizon, observe_at, check_pair=False):
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    observe_at = sorted(set(float(t) for t in (observe_at or [])))
    if observe_at and (observe_at[0] < 0 or observe_at[-1] > horizon):
        raise ValueError("observe_at must lie inside [0, horizon]")
    if horizon not in observe_at:
        observe_at.append(float(horizon))
    base = configs[0]
    for c in configs[1:]:
        if not c.same_window(base):
            raise ValueError("coupled configurations must share the window")

    eng = Engine([c.occupancy for c in configs], stream.p, stream.seed,
                 guard=base.guard_width, check_pair=check_pair)
    trajs = [Trajectory() for _ in configs]

    def record(time):
        for i, c in enumerate(configs):
            cfg = Configuration(c.lo, c.hi, eng.snapshot(i), c.left_boundary,
                                c.right_boundary, c.guard_width)
            trajs[i].snapshots.append((time, cfg))
            trajs[i].event_count = int(eng.copy_events[i])

    def fail(status, time):
        for tr in trajs:
            tr.violation_flag = True
        if status == STATUS_PAIRFAIL:
            raise CouplingError(
                f"pair contract broken at time <= {time}: the coupled copies "
                "no longer differ at exactly the second-class site")
        raise WindowViolationError(
            f"guard bond activated before time {time}: enlarge the window "
            "margins", trajectories=trajs)

    if eng.status != STATUS_OK:
        fail(eng.status, 0.0)
    for t in observe_at:
        status = eng.advance(t)
        if status != STATUS_OK:
            fail(status, t)
        record(t)
    for tr in trajs:
        tr.rings_generated = eng.rings_generated
    return trajs


def kmc_evolve(config: Configuration, stream: ArrowStream, horizon: float,
               observe_at=None) -> Trajectory:
    """Exact continuous-time evolution of one configuration.

    Right clocks swap when priority(x) > priority(x+1); left clocks when
    priority(x+1) > priority(x).  Deterministic given (config, seed,
    observe_at); a snapshot at ``horizon`` is always appended.
    """
    return _evolve([config], stream, horizon, observe_at)[0]


def couple_evolve(configs, stream: ArrowStream, horizon: float,
                  observe_at=None, check_pair=False):
    """Evolve several configurations under the same clock streams.

    The scheduler visits only bonds active in at least one copy, which is
    identical in law to running the full graphical construction and lets a
    jammed bulk cost nothing.
    """
    return _evolve(list(configs), stream, horizon, observe_at,
                   check_pair=check_pair)


def discrepancy_position(c1: Configuration, c2: Configuration) -> int:
    """Site where two-species configurations c1, c2 differ (c1=first, c2=hole).

    Exactly one discrepancy of that orientation is required; anything else
    signals a broken coupling.
    """
    for c in (c1, c2):
        if np.any(c.occupancy == SECOND):
            raise CouplingError("discrepancy_position expects two-species configurations")
    if not c1.same_window(c2):
        raise CouplingError("configurations live on different windows")
    diff = np.flatnonzero(c1.occupancy != c2.occupancy)
    if diff.size != 1:
        raise CouplingError(f"expected exactly one discrepancy, found {diff.size}")
    i = int(diff[0])
    if not (c1.occupancy[i] == FIRST and c2.occupancy[i] == HOLE):
        raise CouplingError("discrepancy has the wrong orientation")
    return i + c1.lo


def _require_omega_type(cfg: Configuration):
    if cfg.left_boundary != EMPTY or cfg.right_boundary != PACKED:
        raise ValueError("partial order needs configurations with finitely many "
                         "particles to the left and holes to the right "
                         "(left boundary empty, right boundary packed)")
    if np.any(cfg.occupancy == SECOND):
        raise ValueError("partial order is defined on two-species configurations")


def partial_order_leq(c1: Configuration, c2: Configuration) -> bool:
    """Whether c1 <= c2: for every r the hole count of c2 on [r, oo) is at
    most the hole count of c1 on [r, oo)."""
    _require_omega_type(c1)
    _require_omega_type(c2)
    if not c1.same_window(c2):
        raise ValueError("configurations live on different windows")
    h1 = np.cumsum((c1.occupancy == HOLE)[::-1])[::-1]
    h2 = np.cumsum((c2.occupancy == HOLE)[::-1])[::-1]
    return bool(np.all(h2 <= h1))


def density_profile(config: Configuration, bin_width: int):
    """Occupied fraction (first or second class) per bin of interior sites.

    Returns a list of (bin centre site, density in [0, 1]); trailing sites
    that do not fill a whole bin are dropped.
    """
    if bin_width < 1:
        raise ValueError("bin_width must be >= 1")
    g = config.guard_width
    interior = config.occupancy[g:config.occupancy.size - g]
    occupied = (interior >= SECOND).astype(np.float64)
    nbins = interior.size // bin_width
    out = []
    for k in range(nbins):
        chunk = occupied[k * bin_width:(k + 1) * bin_width]
        centre = config.lo + g + k * bin_width + (bin_width - 1) / 2.0
        out.append((centre, float(chunk.mean())))
    return out
