"""Distance statistics and intervals used by the experiment harness."""

import math

import numpy as np


def ks_distance(samples, cdf, atoms=None) -> float:
    """Kolmogorov-Smirnov sup distance of an empirical sample against a CDF.

    ``cdf`` is a callable evaluated pointwise.  For discrete targets pass
    ``atoms`` (the jump locations of the target law); the sup of the
    difference of two step functions is then attained on the union of jump
    points, which is what gets scanned.
    """
    samples = np.sort(np.asarray(samples, dtype=float))
    n = samples.size
    if n == 0:
        raise ValueError("ks_distance needs a nonempty sample")
    if atoms is None:
        f = np.asarray([cdf(x) for x in samples], dtype=float)
        upper = np.max(np.arange(1, n + 1) / n - f)
        lower = np.max(f - np.arange(0, n) / n)
        return float(max(upper, lower))
    pts = np.union1d(np.asarray(atoms, dtype=float), samples)
    f = np.asarray([cdf(x) for x in pts], dtype=float)
    emp = np.searchsorted(samples, pts, side="right") / n
    return float(np.max(np.abs(emp - f)))


def tv_distance(pmf_a: dict, pmf_b: dict) -> float:
    """Total variation distance: half the l1 distance over the joint support."""
    if not pmf_a or not pmf_b:
        raise ValueError("tv_distance needs nonempty pmfs")
    keys = set(pmf_a) | set(pmf_b)
    return 0.5 * sum(abs(pmf_a.get(k, 0.0) - pmf_b.get(k, 0.0)) for k in keys)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("wilson_interval needs at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def empirical_pmf(values) -> dict:
    """Relative frequencies of integer-valued samples."""
    values = np.asarray(values)
    uniq, counts = np.unique(values, return_counts=True)
    n = values.size
    return {int(u): c / n for u, c in zip(uniq, counts)}


def log_tail_slope(r_values, probabilities):
    """Least-squares slope of log probability against the tail depth.

    Zero-probability bins carry no information about the log tail and are
    dropped; at least two positive bins are required.
    """
    r = np.asarray(r_values, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    keep = p > 0
    if keep.sum() < 2:
        raise ValueError("log_tail_slope needs at least two positive bins")
    slope = np.polyfit(r[keep], np.log(p[keep]), 1)[0]
    return float(slope)
