"""Blocking measures on two-sided-finite configurations.

The product measure with site odds (p/q)^i concentrates on configurations
with finitely many particles left of some site Z balancing finitely many
holes right of it.  Conditioned on that balance point the measure is the
stationary law of the exclusion dynamics, and the increments of its
occupation profile define the integer law V0 followed by a second-class
particle in equilibrium.
"""

import math
from dataclasses import dataclass

import numpy as np

from .engine import HOLE, FIRST, SECOND
from .errors import NonConvergenceError
from .lattice import Configuration, EMPTY, PACKED


@dataclass
class BlockingParams:
    p: float = 0.7
    eps_enum: float = 1e-10
    W: int = None  # enumeration window; default certified by the geometric tail

    def __post_init__(self):
        if not 0.5 < self.p < 1.0:
            raise ValueError("blocking measures need p in (1/2, 1)")
        if self.eps_enum <= 0:
            raise ValueError("eps_enum must be positive")
        if self.W is None:
            self.W = math.ceil(46.0 / abs(math.log(self.alpha)))

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def alpha(self) -> float:
        return self.q / self.p


def _subset_sums(weights, nmax):
    """f[n] = sum over strict n-subsets of the weight list of their products."""
    f = np.zeros(nmax + 1)
    f[0] = 1.0
    for w in weights:
        f[1:] += w * f[:-1].copy()
    return f


def _enumeration(params: BlockingParams, Z: int):
    """Per-excitation inclusion probabilities under the balanced measure.

    Returns (prob_particle[a] for particle at Z-a, a=1..W;
             prob_hole[b] for hole at Z+b, b=0..W-1; certified error).
    Excitation weights follow the site odds: a particle at i < Z weighs
    (p/q)^i, a hole at i >= Z weighs (q/p)^i, the pure reversed step
    weighing 1.
    """
    alpha = params.alpha
    W = params.W
    if abs(Z) > 20:
        raise ValueError("enumeration supports |Z| <= 20")
    site_tail = 2.0 * alpha ** W / (1.0 - alpha)
    if site_tail > params.eps_enum / 10.0:
        raise NonConvergenceError(
            f"window W={W} leaves tail mass {site_tail:.2e} > eps/10")

    po_qs = params.p / params.q
    wp = np.array([po_qs ** (Z - a) for a in range(1, W + 1)])
    wh = np.array([(1.0 / po_qs) ** (Z + b) for b in range(0, W)])

    # excitation-count cutoff with a certified geometric tail bound
    nmax = 2
    while True:
        fp = _subset_sums(wp, nmax)
        fh = _subset_sums(wh, nmax)
        terms = fp * fh
        zz = terms.sum()
        ratio = terms[nmax] / terms[nmax - 1] if terms[nmax - 1] > 0 else 0.0
        if ratio < 1.0 and terms[nmax] * ratio / max(1e-300, 1.0 - ratio) < params.eps_enum * zz / 100.0:
            break
        nmax += 1
        if nmax > W:
            raise NonConvergenceError("excitation count cutoff did not certify")
    tail_bound = terms[nmax] * ratio / max(1e-300, 1.0 - ratio) / zz + site_tail

    def inclusion(weights, other_f, k):
        rest = np.delete(weights, k)
        f_excl = _subset_sums(rest, nmax - 1)
        num = 0.0
        for n in range(1, nmax + 1):
            num += weights[k] * f_excl[n - 1] * other_f[n]
        return num / zz

    prob_particle = np.array([inclusion(wp, fh, k) for k in range(W)])
    prob_hole = np.array([inclusion(wh, fp, k) for k in range(W)])
    return prob_particle, prob_hole, tail_bound


_ENUM_CACHE = {}


def _cached_enumeration(params: BlockingParams, Z: int):
    key = (params.p, params.eps_enum, params.W, Z)
    if key not in _ENUM_CACHE:
        _ENUM_CACHE[key] = _enumeration(params, Z)
    return _ENUM_CACHE[key]


def mu_marginal(i: int, params: BlockingParams, Z: int = 0) -> float:
    """Occupation probability of site i under the balanced measure at Z."""
    W = params.W
    if not Z - W <= i <= Z + W - 1:
        raise ValueError(f"site {i} outside the certified window around Z={Z}")
    prob_p, prob_h, _ = _cached_enumeration(params, Z)
    if i < Z:
        return float(prob_p[Z - i - 1])
    return 1.0 - float(prob_h[i - Z])


def mu0_marginal(i: int, params: BlockingParams) -> float:
    """Occupation probability of site i in the Z = 0 frame."""
    return mu_marginal(i, params, Z=0)


def v0_pmf(i: int, params: BlockingParams) -> float:
    """P(V0 = i) = mu0(i+1) - mu0(i)."""
    return mu0_marginal(i + 1, params) - mu0_marginal(i, params)


def v0_pmf_table(params: BlockingParams, r: int) -> dict:
    """pmf of V0 on |i| <= r as an ordered dict-like mapping."""
    return {i: v0_pmf(i, params) for i in range(-r, r + 1)}


def sample_mu_Z(Z: int, seed: int, params: BlockingParams,
                halfwidth: int = None, guard_width: int = 10,
                max_retries: int = 100) -> Configuration:
    """Draw one configuration with law mu_Z (up to the certified truncation).

    Samples independent site occupations with odds (p/q)^i on [-W, W),
    locates the balance point of the draw and shifts it to Z; the shift
    identity of the conditioned measures makes the result exact on the
    window.
    """
    W = params.W
    if halfwidth is None:
        halfwidth = W + 80
    rng = np.random.default_rng(seed)
    sites = np.arange(-W, W)
    odds = (params.p / params.q) ** sites
    marg = odds / (1.0 + odds)
    for _ in range(max_retries):
        occ_core = (rng.random(2 * W) < marg).astype(np.int8) * FIRST
        holes_tot = int(np.count_nonzero(occ_core == HOLE))
        z_prime = -W + holes_tot
        shift = Z - z_prime
        lo, hi = Z - halfwidth, Z + halfwidth
        start = -W + shift - lo
        if start <= guard_width or start + 2 * W >= hi - lo - guard_width:
            continue  # shifted draw does not fit: resample
        occ = np.full(hi - lo + 1, HOLE, dtype=np.int8)
        occ[start + 2 * W:] = FIRST
        occ[start:start + 2 * W] = occ_core
        # reject draws whose excitations press against the truncation edge
        core = occ[start:start + 2 * W]
        if np.any(core[:3] == FIRST) or np.any(core[-3:] == HOLE):
            continue
        return Configuration(lo, hi, occ, EMPTY, PACKED, guard_width)
    raise NonConvergenceError("sample_mu_Z exhausted retries; window too tight")


def reversed_step_with_second(Z: int, start: int, halfwidth: int = 150,
                              guard_width: int = 10) -> Configuration:
    """Reversed step at Z plus a second-class particle at an empty site."""
    from .shock import build_reversed_step

    cfg = build_reversed_step(Z, halfwidth=halfwidth, guard_width=guard_width)
    if cfg.value(start) != HOLE:
        raise ValueError(f"site {start} is occupied; second-class particle needs a hole")
    cfg.occupancy[cfg.index(start)] = SECOND
    return cfg
