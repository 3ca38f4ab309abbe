"""Named, reproducible experiments tying Monte Carlo runs to the numeric laws.

Each experiment farms replicas over a thread pool (replica i always uses the
stream derived from (master seed, i), so aggregation is order independent),
compares the empirical statistics against module-computed targets, and
returns a report whose JSON form is byte-identical across reruns with the
same seed.  Wall-clock timing lives in a separate sidecar since it is the
one thing that legitimately varies between runs.
"""

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import blocking, laws, stats
from .engine import FIRST, HOLE, replica_seed
from .errors import CouplingError, NonConvergenceError, WindowViolationError
from .lattice import ArrowStream, couple_evolve, density_profile, kmc_evolve
from .shock import (LabeledTracking, ShockParams, build_finite_omega,
                    build_reversed_step, build_shock_ic, build_step_ic,
                    build_variant_ics, compute_PH)

SCHEMA_VERSION = "1"

EXPERIMENT_NAMES = ("twt", "convp", "indep", "theorem3", "main", "couplthm",
                    "yours", "stationarity", "tails", "slowdec", "density")

_PAIR_SEED_SALT = 0x517CC1B727220A95


def default_threads() -> int:
    return min(8, os.cpu_count() or 1)


@dataclass
class ExperimentSpec:
    name: str
    params: dict = field(default_factory=dict)
    replicas: int = None
    seed: int = 0
    threads: int = None
    out_dir: str = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENT_NAMES:
            raise ValueError(f"unknown experiment {self.name!r}; "
                             f"choose from {', '.join(EXPERIMENT_NAMES)}")
        if self.threads is None:
            self.threads = default_threads()
        defaults = _DEFAULTS[self.name].copy()
        defaults.update(self.params)
        self.params = defaults
        if self.replicas is None:
            self.replicas = self.params.pop("replicas", 1000)
        else:
            self.params.pop("replicas", None)
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")


_DEFAULTS = {
    "twt": dict(p=0.7, t=1000.0, t_low=250.0, M_list=(1, 2), s_list=(1.0, 2.0, 3.0),
                replicas=5000),
    "convp": dict(p=0.7, M=1, t=600.0, chi=0.35, chiprime=0.45, L_list=(0, 1, 2),
                  replicas=5000),
    "indep": dict(p=0.7, M=1, t=600.0, chi=0.35, chiprime=0.45, L_list=(0, 1, 2),
                  replicas=5000),
    "theorem3": dict(p=0.7, M_list=(1, 2, 4), t=600.0, replicas=3000),
    "main": dict(p=0.7, M_list=(1, 2, 4), t=600.0, replicas=3000),
    "couplthm": dict(p=0.7, M_list=(1, 2, 4), t=600.0, threshold=4, eps=0.5,
                     replicas=3000),
    "yours": dict(p=0.7, Z=1, t=200.0, support=8, tsw_sites=(0, 1, 2),
                  replicas=20000),
    "stationarity": dict(p=0.7, t=50.0, sites=(-5, 5), replicas=10000),
    "tails": dict(p=0.7, t=50.0, Z=0, abN=(-2, 0, 3), R_list=tuple(range(2, 13)),
                  replicas=10000),
    "slowdec": dict(p=0.7, t_list=(150.0, 300.0, 600.0), L_list=(1, 2), M=1,
                    chi=0.35, kappa=0.75, replicas=600),
    "density": dict(p=0.7, M=1, t=600.0, bin_width=30, replicas=100),
}

_TOLERANCES = {
    "twt": dict(abs=0.03),
    "convp": dict(abs=0.04),
    "indep": dict(abs=0.05),
    "theorem3": dict(ks=0.05),
    "main": dict(ks=0.08),
    "couplthm": dict(tail=0.15),
    "yours": dict(tv=0.05, tsw_sigmas=3.0),
    "stationarity": dict(sigmas=3.0, slack=0.005),
    "tails": dict(slope=0.0),
    "slowdec": dict(),
    "density": dict(jump_lo=0.15, jump_hi=0.85, fan=0.035, mono_slack=0.02),
}


@dataclass
class ReportRecord:
    """Aggregated experiment outcome; the JSON form is deterministic."""

    name: str
    params: dict
    seed: int
    replicas: int
    checks: list
    passed: bool
    failure: str = None
    events: int = 0
    rings: int = 0
    runtime: float = 0.0
    schema_version: str = SCHEMA_VERSION

    def summary_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "experiment": self.name,
            "params": _jsonable(self.params),
            "seed": self.seed,
            "replicas": self.replicas,
            "checks": _jsonable(self.checks),
            "pass": bool(self.passed),
            "failure": self.failure,
            "events": int(self.events),
            "rings": int(self.rings),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary_dict(), sort_keys=True, indent=2) + "\n"

    def timing_dict(self) -> dict:
        rate = self.rings / self.runtime if self.runtime > 0 else 0.0
        return {
            "runtime_seconds": self.runtime,
            "events_per_second": rate,
            "swaps_per_second": self.events / self.runtime if self.runtime > 0 else 0.0,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _farm(worker, replicas, master_seed, threads):
    """Run worker(replica_index, stream_seed) over a shared-nothing pool."""
    results = [None] * replicas

    def call(i):
        results[i] = worker(i, replica_seed(master_seed, i))
        return None

    if threads <= 1:
        for i in range(replicas):
            call(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for _ in ex.map(call, range(replicas)):
                pass
    return results


# ---------------------------------------------------------------------------
# replica workers
# ---------------------------------------------------------------------------

def shock_replica(params: ShockParams, stream_seed: int) -> dict:
    """One hard-shock run: observables at t - t^chi and at t."""
    cfg = build_shock_ic(params)
    traj = kmc_evolve(cfg, ArrowStream(stream_seed, params.p), params.t,
                      observe_at=[params.t_mid])
    mid = traj.at(params.t_mid)
    tracking = LabeledTracking.for_shock(mid, params)
    ph = compute_PH(tracking, params)
    return {
        "X_t": traj.final.second_position(),
        "X_mid": mid.second_position(),
        "P": ph.P,
        "H": ph.H,
        "valid": ph.valid,
        "events": traj.event_count,
        "rings": traj.rings_generated,
    }


def shock_batch(params: ShockParams, replicas: int, master_seed: int,
                threads: int = None) -> list:
    """Replica farm for the shock observables (shared by several experiments)."""
    threads = threads or default_threads()
    return _farm(lambda i, s: shock_replica(params, s), replicas, master_seed,
                 threads)


def step_replica(p: float, observe_at, n_track: int, stream_seed: int) -> dict:
    """Step-initial-data run; returns the top n_track particle positions."""
    horizon = max(observe_at)
    cfg = build_step_ic(p, horizon)
    traj = kmc_evolve(cfg, ArrowStream(stream_seed, p), horizon,
                      observe_at=observe_at)
    out = {"events": traj.event_count, "rings": traj.rings_generated}
    for tau in observe_at:
        pos = traj.at(tau).sites_of(FIRST)
        out[tau] = tuple(int(x) for x in pos[-n_track:][::-1])  # descending
    return out


# ---------------------------------------------------------------------------
# experiment implementations
# ---------------------------------------------------------------------------

def _check(name, estimate, target, distance, tolerance, passed, kind,
           interval=None, **extra):
    row = {"name": name, "estimate": estimate, "target": target,
           "distance": distance, "tolerance": tolerance, "kind": kind,
           "pass": bool(passed)}
    if interval is not None:
        row["interval"] = list(interval)
    row.update(extra)
    return row


def _exp_twt(spec: ExperimentSpec, tol):
    pr = spec.params
    p, t, t_low = pr["p"], pr["t"], pr["t_low"]
    m_list, s_list = list(pr["M_list"]), list(pr["s_list"])
    n_track = max(m_list)
    rows = _farm(lambda i, s: step_replica(p, [t_low, t], n_track, s),
                 spec.replicas, spec.seed, spec.threads)
    drift = 2 * p - 1
    checks = []
    dists = {}
    for m in m_list:
        xs = {tau: np.array([r[tau][m - 1] for r in rows]) for tau in (t_low, t)}
        for s in s_list:
            target = laws.f_mp_residue(m, p, s)
            for tau in (t_low, t):
                thresh = drift * (tau - s * math.sqrt(tau))
                hits = int(np.count_nonzero(xs[tau] >= thresh))
                est = hits / spec.replicas
                dists[(m, s, tau)] = abs(est - target)
                if tau == t:
                    checks.append(_check(
                        f"P(x_{m}(t) >= drift*(t-{s}*sqrt(t)))", est, target,
                        abs(est - target), tol["abs"], abs(est - target) < tol["abs"],
                        "abs", interval=stats.wilson_interval(hits, spec.replicas)))
    for m in m_list:
        worst_t = max(dists[(m, s, t)] for s in s_list)
        worst_low = max(dists[(m, s, t_low)] for s in s_list)
        checks.append(_check(
            f"M={m}: max_s distance at t={t:g} <= value at t={t_low:g}",
            worst_t, worst_low, worst_t - worst_low, 0.0,
            worst_t <= worst_low + 1e-12, "trend"))
    rows_csv = [{"seed": spec.seed, "replica": i, "p": p, "t_low": t_low, "t": t,
                 **{f"x{m}_tlow": r[t_low][m - 1] for m in m_list},
                 **{f"x{m}_t": r[t][m - 1] for m in m_list},
                 "events": r["events"]}
                for i, r in enumerate(rows)]
    return checks, rows_csv, rows


def _shock_csv(spec, params, rows):
    return [{"seed": spec.seed, "replica": i, "p": params.p, "t": params.t,
             "M": params.M, "C": params.C, "chi": params.chi,
             "chiprime": params.chiprime, "B": params.B, "X_t": r["X_t"],
             "X_mid": r["X_mid"], "P": r["P"], "H": r["H"],
             "events": r["events"], "valid": int(r["valid"])}
            for i, r in enumerate(rows)]


def _shock_params(pr, spec, m=None):
    return ShockParams(p=pr["p"], t=pr["t"], M=m if m is not None else pr.get("M", 1),
                       chi=pr.get("chi", 0.35), chiprime=pr.get("chiprime", 0.45),
                       seed=spec.seed)


def convp_checks(rows, params: ShockParams, L_list, tol_abs):
    n = len(rows)
    checks = []
    for label, key in (("P", "P"), ("H", "H")):
        vals = np.array([r[key] for r in rows])
        for L in L_list:
            hits = int(np.count_nonzero(vals == L))
            est = hits / n
            target = laws.pmf_P(L, params.M, params.p)
            d = abs(est - target)
            checks.append(_check(f"P({label}={L})", est, target, d, tol_abs,
                                 d < tol_abs, "abs",
                                 interval=stats.wilson_interval(hits, n)))
    return checks


def indep_checks(rows, L_list, tol_abs):
    n = len(rows)
    ps = np.array([r["P"] for r in rows])
    hs = np.array([r["H"] for r in rows])
    worst = 0.0
    worst_cell = None
    for L in L_list:
        for R in L_list:
            joint = np.count_nonzero((ps == L) & (hs == R)) / n
            prod = (np.count_nonzero(ps == L) / n) * (np.count_nonzero(hs == R) / n)
            if abs(joint - prod) > worst:
                worst = abs(joint - prod)
                worst_cell = (L, R)
    return [_check(f"max |joint-product| over {len(L_list)}^2 grid (worst at "
                   f"{worst_cell})", worst, 0.0, worst, tol_abs,
                   worst < tol_abs, "abs")]


def theorem3_checks(rows_by_m, params_by_m, tol_ks, statistic="HP"):
    checks = []
    ks_values = []
    for m, rows in rows_by_m.items():
        pm = params_by_m[m]
        scale = m ** (1.0 / 3.0)
        if statistic == "HP":
            samples = np.array([(r["H"] - r["P"]) / scale for r in rows])
            label = f"KS((H-P)/M^(1/3)) at M={m}"
        else:
            samples = np.array([r["X_t"] / scale for r in rows])
            label = f"KS(X(t)/M^(1/3)) at M={m}"
        atoms, cdf, _ = laws.diff_law_support(m, pm.p)
        ks = stats.ks_distance(samples,
                               lambda x, m=m, pm=pm: laws.diff_law_cdf(x, m, pm.p),
                               atoms=atoms)
        ks_values.append(ks)
        checks.append(_check(label, ks, 0.0, ks, tol_ks, ks < tol_ks, "ks"))
    trend_ok = all(ks_values[i + 1] <= ks_values[i] + 1e-12
                   for i in range(len(ks_values) - 1))
    checks.append(_check("KS nonincreasing along the M ladder",
                         ks_values, None, 0.0, 0.0, trend_ok, "trend"))
    return checks


def couplthm_checks(rows_by_m, threshold, eps, tol_tail):
    checks = []
    tails = []
    for m, rows in rows_by_m.items():
        diffs = np.array([abs(r["X_t"] - r["H"] + r["P"]) for r in rows])
        n = diffs.size
        hits = int(np.count_nonzero(diffs >= threshold))
        est = hits / n
        tails.append(est)
        m_eps_tail = float(np.count_nonzero(diffs > m ** eps) / n)
        hist = {int(k): int(v) for k, v in
                zip(*np.unique(diffs, return_counts=True))}
        checks.append(_check(
            f"P(|X-H+P| >= {threshold}) at M={m}", est, 0.0, est, tol_tail,
            est < tol_tail, "tail", interval=stats.wilson_interval(hits, n),
            tail_beyond_M_eps=m_eps_tail, histogram=hist))
    trend_ok = all(tails[i + 1] <= tails[i] + 1e-12 for i in range(len(tails) - 1))
    checks.append(_check("tail nonincreasing in M", tails, None, 0.0, 0.0,
                         trend_ok, "trend"))
    return checks


def _exp_shock_family(spec: ExperimentSpec, tol):
    """convp / indep / theorem3 / main / couplthm share the shock batches."""
    pr = spec.params
    rows_csv = []
    total_events = total_rings = 0

    if spec.name in ("convp", "indep"):
        params = _shock_params(pr, spec)
        rows = shock_batch(params, spec.replicas, spec.seed, spec.threads)
        total_events = sum(r["events"] for r in rows)
        total_rings = sum(r["rings"] for r in rows)
        rows_csv = _shock_csv(spec, params, rows)
        invalid = sum(1 for r in rows if not r["valid"])
        if spec.name == "convp":
            checks = convp_checks(rows, params, pr["L_list"], tol["abs"])
        else:
            checks = indep_checks(rows, pr["L_list"], tol["abs"])
        checks.append(_check("invalid replicas", invalid, 0, invalid, 0,
                             invalid == 0, "count"))
        return checks, rows_csv, total_events, total_rings

    rows_by_m = {}
    params_by_m = {}
    for m in pr["M_list"]:
        params = _shock_params(pr, spec, m=m)
        params_by_m[m] = params
        rows = shock_batch(params, spec.replicas,
                           replica_seed(spec.seed, 1000 + m), spec.threads)
        rows_by_m[m] = rows
        total_events += sum(r["events"] for r in rows)
        total_rings += sum(r["rings"] for r in rows)
        rows_csv.extend(_shock_csv(spec, params, rows))
    if spec.name == "theorem3":
        checks = theorem3_checks(rows_by_m, params_by_m, tol["ks"], "HP")
    elif spec.name == "main":
        checks = theorem3_checks(rows_by_m, params_by_m, tol["ks"], "X")
    else:
        checks = couplthm_checks(rows_by_m, pr["threshold"], pr["eps"],
                                 tol["tail"])
    return checks, rows_csv, total_events, total_rings


def yours_replica(p, Z, t, stream_seed):
    cfg = blocking.reversed_step_with_second(Z, Z - 1)
    traj = kmc_evolve(cfg, ArrowStream(stream_seed, p), t)
    return {"X": traj.final.second_position(), "events": traj.event_count,
            "rings": traj.rings_generated}


def tsw_pair_replica(p, Z, t, sites, stream_seed):
    """Coupled (reversed step at Z-1, reversed step at Z) occupation marks."""
    window = (Z - 150, Z + 150)
    c1 = build_reversed_step(Z - 1, window=window)
    c0 = build_reversed_step(Z, window=window)
    tr1, tr0 = couple_evolve([c1, c0], ArrowStream(stream_seed, p), t)
    f1, f0 = tr1.final, tr0.final
    return {f"d{i}": int(f1.value(i) == FIRST) - int(f0.value(i) == FIRST)
            for i in sites} | {"events": tr0.event_count + tr1.event_count,
                               "rings": tr0.rings_generated}


def _exp_yours(spec: ExperimentSpec, tol):
    pr = spec.params
    p, Z, t, r = pr["p"], pr["Z"], pr["t"], pr["support"]
    rows = _farm(lambda i, s: yours_replica(p, Z, t, s), spec.replicas,
                 spec.seed, spec.threads)
    xs = np.array([row["X"] for row in rows])
    bp = blocking.BlockingParams(p=p)
    target = {Z + i: prob for i, prob in blocking.v0_pmf_table(bp, r).items()}
    emp = stats.empirical_pmf(xs)
    # lump everything outside the reported support into one bucket
    other_emp = sum(v for k, v in emp.items() if k not in target)
    other_tgt = max(0.0, 1.0 - sum(target.values()))
    pa = {**{k: v for k, v in emp.items() if k in target}, "other": other_emp}
    pb = {**target, "other": other_tgt}
    tv = stats.tv_distance(pa, pb)
    checks = [_check(f"TV(empirical X(t), V0+{Z})", tv, 0.0, tv, tol["tv"],
                     tv < tol["tv"], "tv")]

    # occupation-difference identity, estimated from an independent pair batch
    sites = list(pr["tsw_sites"])
    pair_rows = _farm(lambda i, s: tsw_pair_replica(p, Z, t, sites, s),
                      spec.replicas, spec.seed ^ _PAIR_SEED_SALT, spec.threads)
    n = spec.replicas
    for i in sites:
        d = np.array([row[f"d{i}"] for row in pair_rows], dtype=float)
        lhs = float(np.mean(xs == i))
        rhs = float(d.mean())
        se = math.sqrt(lhs * (1 - lhs) / n + d.var(ddof=1) / n)
        dist = abs(lhs - rhs)
        checks.append(_check(
            f"occupation-difference identity at site {i}", lhs, rhs, dist,
            tol["tsw_sigmas"] * se, dist < tol["tsw_sigmas"] * se, "abs"))
    rows_csv = [{"seed": spec.seed, "replica": i, "p": p, "Z": Z, "t": t,
                 "X": row["X"], "events": row["events"]}
                for i, row in enumerate(rows)]
    events = sum(r["events"] for r in rows) + sum(r["events"] for r in pair_rows)
    rings = sum(r["rings"] for r in rows) + sum(r["rings"] for r in pair_rows)
    return checks, rows_csv, events, rings


def stationarity_replica(p, t, sites, stream_seed):
    bp = blocking.BlockingParams(p=p)
    sample_seed = replica_seed(stream_seed, 7)
    cfg = blocking.sample_mu_Z(0, sample_seed, bp)
    traj = kmc_evolve(cfg, ArrowStream(stream_seed, p), t)
    final = traj.final
    return {f"occ{i}": int(final.value(i) == FIRST) for i in sites} | {
        "events": traj.event_count, "rings": traj.rings_generated}


def _exp_stationarity(spec: ExperimentSpec, tol):
    pr = spec.params
    p, t = pr["p"], pr["t"]
    lo, hi = pr["sites"]
    sites = list(range(lo, hi + 1))
    rows = _farm(lambda i, s: stationarity_replica(p, t, sites, s),
                 spec.replicas, spec.seed, spec.threads)
    bp = blocking.BlockingParams(p=p)
    n = spec.replicas
    checks = []
    for i in sites:
        hits = sum(r[f"occ{i}"] for r in rows)
        est = hits / n
        target = blocking.mu0_marginal(i, bp)
        se = math.sqrt(max(target * (1 - target), 1e-12) / n)
        bound = tol["sigmas"] * se + tol["slack"]
        d = abs(est - target)
        checks.append(_check(f"marginal at site {i} after t={t:g}", est, target,
                             d, bound, d < bound, "abs",
                             interval=stats.wilson_interval(hits, n)))
    rows_csv = [{"seed": spec.seed, "replica": i, "p": p, "t": t,
                 **{f"occ{j}": r[f"occ{j}"] for j in sites}}
                for i, r in enumerate(rows)]
    return checks, rows_csv, sum(r["events"] for r in rows), sum(r["rings"] for r in rows)


def tails_replica(p, t, Z, abN, stream_seed):
    cfg_rev = build_reversed_step(Z)
    tr_rev = kmc_evolve(cfg_rev, ArrowStream(stream_seed, p), t)
    a, b, N = abN
    cfg_fin = build_finite_omega(a, b, N)
    tr_fin = kmc_evolve(cfg_fin, ArrowStream(replica_seed(stream_seed, 3), p), t)
    rev_final, fin_final = tr_rev.final, tr_fin.final
    return {
        "x0_rev": int(rev_final.sites_of(FIRST)[0]),
        "x0_fin": int(fin_final.sites_of(FIRST)[0]),
        "H0_fin": int(fin_final.sites_of(HOLE)[-1]),
        "events": tr_rev.event_count + tr_fin.event_count,
        "rings": tr_rev.rings_generated + tr_fin.rings_generated,
    }


def _exp_tails(spec: ExperimentSpec, tol):
    pr = spec.params
    p, t, Z, abN = pr["p"], pr["t"], pr["Z"], pr["abN"]
    r_list = list(pr["R_list"])
    rows = _farm(lambda i, s: tails_replica(p, t, Z, abN, s), spec.replicas,
                 spec.seed, spec.threads)
    a, b, N = abN
    centre = N - b + a
    n = spec.replicas
    checks = []
    series = {
        f"reversed step: P(x0 < {Z}-R)":
            [np.mean([row["x0_rev"] < Z - R for row in rows]) for R in r_list],
        f"finite block: P(x0 < {centre}-R)":
            [np.mean([row["x0_fin"] < centre - R for row in rows]) for R in r_list],
        f"finite block: P(H0 > {centre}+R)":
            [np.mean([row["H0_fin"] > centre + R for row in rows]) for R in r_list],
    }
    for label, probs in series.items():
        slope = stats.log_tail_slope(r_list, probs)
        checks.append(_check(f"log-tail slope, {label}", slope, None, slope,
                             tol["slope"], slope < tol["slope"], "slope",
                             probabilities=[float(x) for x in probs]))
    rows_csv = [{"seed": spec.seed, "replica": i, "p": p, "t": t,
                 "x0_rev": r["x0_rev"], "x0_fin": r["x0_fin"],
                 "H0_fin": r["H0_fin"]} for i, r in enumerate(rows)]
    return checks, rows_csv, sum(r["events"] for r in rows), sum(r["rings"] for r in rows)


def slowdec_replica(params: ShockParams, L_list, tau1, tau2, stream_seed):
    etaA = build_variant_ics(params).etaA
    traj = kmc_evolve(etaA, ArrowStream(stream_seed, params.p), tau2,
                      observe_at=[tau1, tau2])
    out = {"events": traj.event_count, "rings": traj.rings_generated}
    for tau, tag in ((tau1, "a"), (tau2, "b")):
        pos = traj.at(tau).sites_of(FIRST)
        for L in L_list:
            out[f"x{L}{tag}"] = int(pos[-L])
    return out


def _exp_slowdec(spec: ExperimentSpec, tol):
    pr = spec.params
    p, l_list = pr["p"], list(pr["L_list"])
    percentiles = {L: [] for L in l_list}
    rows_csv = []
    events = rings = 0
    for t in pr["t_list"]:
        params = ShockParams(p=p, t=t, M=pr["M"], chi=pr["chi"],
                             kappa=pr["kappa"], seed=spec.seed)
        tau2 = t - t ** params.chi
        tau1 = tau2 - t ** params.kappa
        rows = _farm(lambda i, s: slowdec_replica(params, l_list, tau1, tau2, s),
                     spec.replicas, replica_seed(spec.seed, int(t)), spec.threads)
        drift_term = params.drift * t ** params.kappa
        for L in l_list:
            dev = np.array([abs(r[f"x{L}a"] + drift_term - r[f"x{L}b"]) for r in rows])
            percentiles[L].append(float(np.percentile(dev / math.sqrt(t), 95)))
        rows_csv.extend({"seed": spec.seed, "replica": i, "p": p, "t": t,
                         **{f"x{L}_early": r[f"x{L}a"] for L in l_list},
                         **{f"x{L}_late": r[f"x{L}b"] for L in l_list}}
                        for i, r in enumerate(rows))
        events += sum(r["events"] for r in rows)
        rings += sum(r["rings"] for r in rows)
    checks = []
    for L in l_list:
        seq = percentiles[L]
        ok = all(seq[i + 1] <= seq[i] + 1e-12 for i in range(len(seq) - 1))
        checks.append(_check(
            f"95th percentile of |x_{L}(early)+drift*t^kappa-x_{L}(late)|/sqrt(t) "
            f"decreasing over t in {tuple(pr['t_list'])}", seq, None, 0.0, 0.0,
            ok, "trend"))
    return checks, rows_csv, events, rings


def density_oracle(x: float, params: ShockParams) -> float:
    """Entropy-solution density at lattice position x and time t for the
    shock initial data: two rarefaction fans glued at the origin."""
    d, t, B = params.drift, params.t, params.B
    if x < 0:
        u = ((-B - 1 + d * t) - x) / (2.0 * d * t)
    else:
        u = ((B + d * t) - x) / (2.0 * d * t)
    return float(min(1.0, max(0.0, u)))


def _exp_density(spec: ExperimentSpec, tol):
    pr = spec.params
    params = _shock_params(pr, spec)
    bw = pr["bin_width"]

    def worker(i, s):
        cfg = build_shock_ic(params)
        traj = kmc_evolve(cfg, ArrowStream(s, params.p), params.t)
        return {"profile": density_profile(traj.final, bw),
                "events": traj.event_count, "rings": traj.rings_generated}

    rows = _farm(worker, spec.replicas, spec.seed, spec.threads)
    centres = np.array([c for c, _ in rows[0]["profile"]])
    dens = np.mean([[v for _, v in r["profile"]] for r in rows], axis=0)
    d, t = params.drift, params.t

    def nearest(x):
        return int(np.argmin(np.abs(centres - x)))

    checks = []
    i_left, i_right = nearest(-1.5 * bw), nearest(1.5 * bw)
    checks.append(_check("density just left of the origin", float(dens[i_left]),
                         0.0, float(dens[i_left]), tol["jump_lo"],
                         dens[i_left] < tol["jump_lo"], "abs"))
    checks.append(_check("density just right of the origin", float(dens[i_right]),
                         1.0, float(1 - dens[i_right]), 1 - tol["jump_hi"],
                         dens[i_right] > tol["jump_hi"], "abs"))
    for x in (-d * t / 2.0, d * t / 2.0):
        i = nearest(x)
        target = density_oracle(centres[i], params)
        dist = abs(dens[i] - target)
        checks.append(_check(f"fan density at x={x:g}", float(dens[i]), target,
                             dist, tol["fan"], dist < tol["fan"], "abs"))
    # fans are monotone decreasing on each side of the shock
    for label, sel in (("left", (centres > -1.9 * d * t) & (centres < -2 * bw)),
                       ("right", (centres > 2 * bw) & (centres < 1.9 * d * t))):
        seq = dens[sel]
        ok = bool(np.all(np.diff(seq) <= tol["mono_slack"]))
        checks.append(_check(f"{label} fan monotone within slack", None, None,
                             float(np.max(np.diff(seq))) if seq.size > 1 else 0.0,
                             tol["mono_slack"], ok, "trend"))
    rows_csv = [{"seed": spec.seed, "bin_centre": float(c), "density": float(v)}
                for c, v in zip(centres, dens)]
    return checks, rows_csv, sum(r["events"] for r in rows), sum(r["rings"] for r in rows)


# ---------------------------------------------------------------------------
# dispatch, reporting, persistence
# ---------------------------------------------------------------------------

def run_experiment(spec: ExperimentSpec) -> ReportRecord:
    """Run a named experiment and aggregate it into a deterministic report."""
    tol = dict(_TOLERANCES[spec.name])
    tol.update(spec.tolerances)
    start = time.perf_counter()
    failure = None
    checks, rows_csv, events, rings = [], [], 0, 0
    try:
        if spec.name == "twt":
            checks, rows_csv, raw = _exp_twt(spec, tol)
            events = sum(r["events"] for r in raw)
            rings = sum(r["rings"] for r in raw)
        elif spec.name in ("convp", "indep", "theorem3", "main", "couplthm"):
            checks, rows_csv, events, rings = _exp_shock_family(spec, tol)
        elif spec.name == "yours":
            checks, rows_csv, events, rings = _exp_yours(spec, tol)
        elif spec.name == "stationarity":
            checks, rows_csv, events, rings = _exp_stationarity(spec, tol)
        elif spec.name == "tails":
            checks, rows_csv, events, rings = _exp_tails(spec, tol)
        elif spec.name == "slowdec":
            checks, rows_csv, events, rings = _exp_slowdec(spec, tol)
        elif spec.name == "density":
            checks, rows_csv, events, rings = _exp_density(spec, tol)
    except WindowViolationError as exc:
        failure = f"window-violation: {exc}"
    except NonConvergenceError as exc:
        failure = f"non-convergence: {exc}"
    except CouplingError as exc:
        failure = f"coupling: {exc}"
    runtime = time.perf_counter() - start

    passed = failure is None and all(c["pass"] for c in checks)
    report = ReportRecord(name=spec.name, params=spec.params, seed=spec.seed,
                          replicas=spec.replicas, checks=checks, passed=passed,
                          failure=failure, events=events, rings=rings,
                          runtime=runtime)
    if spec.out_dir:
        write_outputs(report, rows_csv, spec.out_dir)
    return report


def write_outputs(report: ReportRecord, rows_csv, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, report.name)
    with open(base + "_summary.json", "w") as fh:
        fh.write(report.summary_json())
    with open(base + "_timing.json", "w") as fh:
        json.dump(report.timing_dict(), fh, indent=2)
        fh.write("\n")
    if rows_csv:
        with open(base + "_replicas.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows_csv[0].keys()))
            writer.writeheader()
            writer.writerows(rows_csv)
