"""Initial conditions for the hard shock, labeled tracking, and observables.

The shock configuration packs first-class particles on {1..B} and on
{-B-1, -B-2, ...}, puts the second-class particle at the origin and holes
everywhere else, where B = floor((p-q)(t - C sqrt(t))).  At time t the two
rarefaction fans emanating from the block edges meet at the origin.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .engine import HOLE, SECOND, FIRST
from .lattice import Configuration, PACKED, EMPTY, blank_window


def c_of_m(M: int, p: float) -> float:
    """Front-lag constant 2*sqrt(M/(p-q)) controlling the shock softness."""
    if M < 1 or int(M) != M:
        raise ValueError("M must be a positive integer")
    if not 0.5 < p <= 1.0:
        raise ValueError("p must lie in (1/2, 1]")
    return 2.0 * math.sqrt(M / (p - (1.0 - p)))


def default_margin(t: float) -> int:
    """Window margin beyond the deterministic fronts; violations are detected
    at runtime rather than assumed away, so this only has to be generous."""
    return math.ceil(t + 8.0 * math.sqrt(t) + 100.0)


@dataclass
class ShockParams:
    """Every scalar of the shock experiments in one place."""

    p: float = 0.7
    t: float = 600.0
    M: int = 1
    C: float = None  # defaults to c_of_m(M, p)
    chi: float = 0.35
    chiprime: float = 0.45
    delta: float = 0.2
    kappa: float = 0.75
    seed: int = 0
    replicas: int = 1
    guard_width: int = 10

    def __post_init__(self):
        if self.C is None:
            self.C = c_of_m(self.M, self.p)
        if not 0.5 < self.p <= 1.0:
            raise ValueError("p must lie in (1/2, 1]")
        if not 0.0 < self.chi < self.chiprime < 0.5:
            raise ValueError("need 0 < chi < chi' < 1/2")
        if not 0.0 < self.delta < self.chi:
            raise ValueError("need 0 < delta < chi")
        if not 0.5 < self.kappa < 1.0:
            raise ValueError("need 1/2 < kappa < 1")
        if self.t - self.C * math.sqrt(self.t) <= 0:
            raise ValueError("t - C sqrt(t) must be positive")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def drift(self) -> float:
        return self.p - self.q

    @property
    def B(self) -> int:
        """Half-width of the particle blocks; shared by every builder so all
        variants agree site by site."""
        return math.floor(self.drift * (self.t - self.C * math.sqrt(self.t)))

    @property
    def t_mid(self) -> float:
        return self.t - self.t ** self.chi

    @property
    def threshold(self) -> float:
        return self.t ** self.chiprime

    def window(self) -> tuple:
        b = math.ceil(self.drift * (self.t - self.C * math.sqrt(self.t)))
        m = default_margin(self.t)
        return (-b - m, b + m)


def build_shock_ic(params: ShockParams) -> Configuration:
    """Hard-shock initial data with the second-class particle at the origin."""
    B = params.B
    if B <= 0:
        raise ValueError("t too small for this C: particle blocks are empty")
    lo, hi = params.window()
    g = params.guard_width
    if not (lo + g < -B - 1 and B + 1 < hi - g):
        raise ValueError("window too small to contain the particle blocks")
    occ = np.full(hi - lo + 1, HOLE, dtype=np.int8)
    occ[: (-B - 1) - lo + 1] = FIRST          # left block  (..., -B-2, -B-1)
    occ[(1 - lo):(B - lo + 1)] = FIRST        # right block {1..B}
    occ[-lo] = SECOND                         # origin
    return Configuration(lo, hi, occ, PACKED, EMPTY, g)


class VariantICs(NamedTuple):
    eta1: Configuration   # second-class particle replaced by a first-class one
    eta2: Configuration   # second-class particle replaced by a hole
    etaA: Configuration   # left block only (shifted step data)
    etaB: Configuration   # all particles except holes right of B


def build_variant_ics(params: ShockParams) -> VariantICs:
    """The two coupled copies and the two dominating shifted-step systems."""
    base = build_shock_ic(params)
    eta1 = base.project(FIRST)
    eta2 = base.project(HOLE)
    lo, hi = base.lo, base.hi
    g = params.guard_width
    B = params.B
    occA = np.full(hi - lo + 1, HOLE, dtype=np.int8)
    occA[: (-B - 1) - lo + 1] = FIRST
    etaA = Configuration(lo, hi, occA, PACKED, EMPTY, g)
    occB = np.full(hi - lo + 1, HOLE, dtype=np.int8)
    occB[: (B - lo + 1)] = FIRST
    etaB = Configuration(lo, hi, occB, PACKED, EMPTY, g)
    return VariantICs(eta1, eta2, etaA, etaB)


def build_step_ic(p: float, t: float, guard_width: int = 10) -> Configuration:
    """Step initial data (particles on all negative sites) on a safe window."""
    m = math.ceil((p - (1 - p)) * t) + math.ceil(8 * math.sqrt(t)) + 100
    lo, hi = -default_margin(t), m
    occ = np.full(hi - lo + 1, HOLE, dtype=np.int8)
    occ[: -lo] = FIRST
    return Configuration(lo, hi, occ, PACKED, EMPTY, guard_width)


def build_reversed_step(Z: int, halfwidth: int = 150, guard_width: int = 10,
                        window: tuple = None) -> Configuration:
    """Particles exactly on sites >= Z."""
    lo, hi = window if window is not None else (Z - halfwidth, Z + halfwidth)
    if not (lo + guard_width < Z <= hi - guard_width):
        raise ValueError("window does not contain the step position")
    occ = np.full(hi - lo + 1, HOLE, dtype=np.int8)
    occ[Z - lo:] = FIRST
    return Configuration(lo, hi, occ, EMPTY, PACKED, guard_width)


def build_finite_omega(a: int, b: int, N: int, halfwidth: int = 150,
                       guard_width: int = 10) -> Configuration:
    """Particles on {a..b} plus {N+1, N+2, ...}; lies in Omega_{N-b+a}."""
    if not a <= b <= N:
        raise ValueError("need a <= b <= N")
    centre = N - b + a
    lo, hi = centre - halfwidth, centre + halfwidth
    if not (lo + guard_width < a and N + 1 < hi - guard_width):
        raise ValueError("window too small for this (a, b, N)")
    occ = np.full(hi - lo + 1, HOLE, dtype=np.int8)
    occ[a - lo:b - lo + 1] = FIRST
    occ[N + 1 - lo:] = FIRST
    return Configuration(lo, hi, occ, EMPTY, PACKED, guard_width)


class LabeledTracking:
    """Label <-> position bijection recovered from a snapshot.

    Particles never cross, so the j-th first-class particle counted from the
    right keeps one label for the whole run; same for holes counted from the
    left.  ``offset`` encodes the labelling convention: label = rank - offset.
    """

    def __init__(self, config: Configuration, particle_offset: int = 0,
                 hole_offset: int = 0):
        self.config = config
        self.particle_offset = particle_offset
        self.hole_offset = hole_offset
        pos_p = config.sites_of(FIRST)
        self.particle_positions = pos_p[::-1].copy()      # descending
        self.particle_labels = np.arange(1, pos_p.size + 1) - particle_offset
        pos_h = config.sites_of(HOLE)
        self.hole_positions = pos_h.copy()                # ascending
        self.hole_labels = np.arange(1, pos_h.size + 1) - hole_offset

    @classmethod
    def for_shock(cls, config: Configuration, params: ShockParams):
        return cls(config, particle_offset=params.B, hole_offset=params.B)

    @classmethod
    def for_step(cls, config: Configuration):
        return cls(config, particle_offset=0, hole_offset=0)

    def x(self, n: int) -> int:
        """Position of particle label n."""
        j = n + self.particle_offset - 1
        if not 0 <= j < self.particle_positions.size:
            raise KeyError(f"particle label {n} is not tracked")
        return int(self.particle_positions[j])

    def H(self, n: int) -> int:
        """Position of hole label n."""
        j = n + self.hole_offset - 1
        if not 0 <= j < self.hole_positions.size:
            raise KeyError(f"hole label {n} is not tracked")
        return int(self.hole_positions[j])


class PHResult(NamedTuple):
    P: int
    H: int
    valid: bool


def sup_qualifying_label(labels: np.ndarray, positions: np.ndarray,
                         qualifies: np.ndarray) -> tuple:
    """max{label : qualifies} plus a validity flag.

    Invalid when nothing qualifies or when the truncation-adjacent label
    (the largest tracked one) qualifies, because then untracked labels could
    change the sup.
    """
    if labels.size == 0 or not qualifies.any():
        return 0, False
    top = int(labels[qualifies].max())
    return top, top < int(labels.max())


def compute_PH(tracking: LabeledTracking, params: ShockParams) -> PHResult:
    """P = max{i: x_i > -t^chi'}, H = max{i: H_i < t^chi'} at the snapshot.

    Pure function of the snapshot; threshold t^chi' comes from params.
    """
    theta = params.threshold
    P, ok_p = sup_qualifying_label(tracking.particle_labels,
                                   tracking.particle_positions,
                                   tracking.particle_positions > -theta)
    H, ok_h = sup_qualifying_label(tracking.hole_labels,
                                   tracking.hole_positions,
                                   tracking.hole_positions < theta)
    return PHResult(P, H, ok_p and ok_h)


def second_class_X(trajectory, pair=None):
    """X(s) per observation time, from the multi-species trajectory or from
    a coupled (eta1, eta2) trajectory pair."""
    from .lattice import discrepancy_position

    out = []
    if pair is None:
        for t, cfg in trajectory.snapshots:
            out.append((t, cfg.second_position()))
    else:
        tr1, tr2 = trajectory, pair
        for (t, c1), (t2, c2) in zip(tr1.snapshots, tr2.snapshots):
            if t != t2:
                raise ValueError("trajectories observed at different times")
            out.append((t, discrepancy_position(c1, c2)))
    return out
