"""Limit-law numerics: Tracy-Widom GUE, its finite-order relatives, and the
discrete laws they induce for the shock observables.

The finite-order CDFs are contour integrals of a Fredholm determinant of a
Gaussian kernel; the determinant is evaluated by a Nystrom discretisation
on a Gauss-Legendre grid, and the contour integral either by the
trapezoidal rule in the angle (spectrally accurate for periodic analytic
integrands) or by summing the residues of the rational prefactor.  Both
routes are kept alive as mutual cross-checks.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import eigh
from scipy.special import airy as _scipy_airy

from .errors import NonConvergenceError

GAUSS_ORDER_DEFAULT = 120
CONTOUR_NODES_DEFAULT = 512
FMP_MAX_ORDER = 24  # beyond this the contour cancellation dominates doubles


def airy_ai(x: float):
    """(Ai(x), Ai'(x)) with absolute error below 1e-12 on |x| <= 40."""
    if abs(x) > 40.0:
        raise ValueError("airy_ai is certified on |x| <= 40 only")
    ai, aip, _, _ = _scipy_airy(x)
    return float(ai), float(aip)


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Legendre rule mapped to (a, b); doubling the order is the
    standard self-convergence probe."""

    a: float
    b: float
    order: int

    def nodes_weights(self):
        x, w = leggauss(self.order)
        half = 0.5 * (self.b - self.a)
        mid = 0.5 * (self.b + self.a)
        return mid + half * x, half * w

    def doubled(self):
        return QuadratureGrid(self.a, self.b, 2 * self.order)


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric kernel: 'airy' or 'gaussian-asep' (needs p)."""

    kind: str
    p: float = None

    def __post_init__(self):
        if self.kind not in ("airy", "gaussian-asep"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian-asep":
            if self.p is None or not 0.5 < self.p <= 1.0:
                raise ValueError("gaussian-asep kernel needs p in (1/2, 1]")

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "gaussian-asep":
            p, q = self.p, 1.0 - self.p
            return (p / math.sqrt(2.0 * math.pi)
                    * np.exp(-(p * p + q * q) * (x * x + y * y) / 4.0
                             + p * q * x * y))
        ai_x, aip_x, _, _ = _scipy_airy(x)
        ai_y, aip_y, _, _ = _scipy_airy(y)
        diff = x - y
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (ai_x * aip_y - ai_y * aip_x) / diff
        diag = aip_x * aip_y - 0.5 * (x + y) * ai_x * ai_y  # exact on x == y
        return np.where(np.abs(diff) < 1e-10, diag, val)

    def symmetrized_matrix(self, grid: QuadratureGrid):
        x, w = grid.nodes_weights()
        sw = np.sqrt(w)
        return sw[:, None] * self.evaluate(x[:, None], x[None, :]) * sw[None, :]


def _airy_cutoff(s: float) -> float:
    return max(s, 0.0) + 13.0


def _gaussian_cutoff(a: float, p: float) -> float:
    # keep every diagonal weight above 1e-20 of the interval maximum
    reach = 9.6 / (p - (1.0 - p))
    return max(a + reach, math.hypot(a, reach))


def fredholm_det(kernel: KernelSpec, interval: tuple, lam: complex,
                 grid: QuadratureGrid = None, check: bool = False,
                 tol: float = 1e-10) -> complex:
    """Nystrom value of det(I - lam * K) on the interval.

    With ``check=True`` the grid order is doubled and disagreement beyond
    ``tol`` raises NonConvergenceError.
    """
    a, b = interval
    if grid is None:
        grid = QuadratureGrid(a, b, GAUSS_ORDER_DEFAULT)
    mat = kernel.symmetrized_matrix(grid)
    eye = np.eye(mat.shape[0])
    val = np.linalg.det(eye - lam * mat)
    if check:
        mat2 = kernel.symmetrized_matrix(grid.doubled())
        val2 = np.linalg.det(np.eye(mat2.shape[0]) - lam * mat2)
        if abs(val - val2) > tol:
            raise NonConvergenceError(
                f"Fredholm determinant moved by {abs(val - val2):.2e} under "
                f"node doubling (tol {tol:.1e})")
    return complex(val) if np.iscomplexobj(val) or isinstance(lam, complex) else float(val)


@lru_cache(maxsize=4096)
def _gaussian_eigs(p: float, s: float, order: int):
    """Eigenvalues of the Gaussian kernel restricted to (-s, cutoff)."""
    a = -s
    grid = QuadratureGrid(a, _gaussian_cutoff(a, p), order)
    mat = KernelSpec("gaussian-asep", p).symmetrized_matrix(grid)
    return eigh(mat, eigvals_only=True)


@lru_cache(maxsize=4096)
def _airy_det(s: float, order: int) -> float:
    grid = QuadratureGrid(s, _airy_cutoff(s), order)
    mat = KernelSpec("airy").symmetrized_matrix(grid)
    sign, logdet = np.linalg.slogdet(np.eye(mat.shape[0]) - mat)
    return float(sign * math.exp(logdet))


def f_gue(s: float, order: int = GAUSS_ORDER_DEFAULT, check: bool = False) -> float:
    """Tracy-Widom GUE CDF: det(I - K_Airy) on (s, infinity), error <= 1e-8."""
    if not -10.0 <= s <= 10.0:
        raise ValueError("f_gue is certified on s in [-10, 10]")
    val = _airy_det(float(s), order)
    if check:
        val2 = _airy_det(float(s), 2 * order)
        if abs(val - val2) > 1e-8:
            raise NonConvergenceError("f_gue self-convergence check failed")
    return val


def _check_fmp_args(M, p):
    if M < 1 or int(M) != M:
        raise ValueError("M must be a positive integer")
    if not 0.5 < p < 1.0:
        raise ValueError("the contour representation needs p in (1/2, 1)")
    if M > FMP_MAX_ORDER:
        raise NonConvergenceError(
            f"finite-order CDF is supported for M <= {FMP_MAX_ORDER}; "
            "cancellation dominates double precision beyond that")


@dataclass(frozen=True)
class ContourSpec:
    """Circle of radius r about 0 with n_theta angular nodes, enclosing the
    poles at (p/q)^k, k < M, and staying off all of them."""

    radius: float
    n_theta: int = CONTOUR_NODES_DEFAULT


def default_contour(M: int, p: float) -> ContourSpec:
    q = 1.0 - p
    return ContourSpec(radius=2.0 * (p / q) ** (M - 1))


def _contour_sum(mu, M, p, contour):
    q = 1.0 - p
    poles = (q / p) ** np.arange(M)
    theta = 2.0 * np.pi * np.arange(contour.n_theta) / contour.n_theta
    lam = contour.radius * np.exp(1j * theta)
    # log-determinant minus log-prefactor, exponentiated once per node
    logdet = np.log(1.0 - lam[:, None] * mu[None, :]).sum(axis=1)
    logpref = np.log(1.0 - lam[:, None] * poles[None, :]).sum(axis=1)
    vals = np.exp(logdet - logpref)
    return vals.mean()


def f_mp_contour(M: int, p: float, s: float, contour: ContourSpec = None,
                 order: int = GAUSS_ORDER_DEFAULT, tol: float = 1e-9) -> float:
    """Finite-order CDF by angular quadrature of the contour integral.

    Raw value is returned without clipping to [0, 1]; precision is certified
    by doubling the angular node count, and a residual imaginary part above
    tolerance raises NonConvergenceError.
    """
    _check_fmp_args(M, p)
    if contour is None:
        contour = default_contour(M, p)
    q = 1.0 - p
    poles = (p / q) ** np.arange(M)
    if np.any(np.abs(contour.radius - poles) / poles < 1e-9):
        raise NonConvergenceError("contour radius collides with a pole")
    if contour.radius <= poles.max():
        raise ValueError("contour must enclose every pole")
    mu = _gaussian_eigs(float(p), float(s), order)
    val = _contour_sum(mu, M, p, contour)
    val2 = _contour_sum(mu, M, p, ContourSpec(contour.radius, 2 * contour.n_theta))
    if abs(val - val2) > tol:
        raise NonConvergenceError(
            f"contour quadrature moved by {abs(val - val2):.2e} under angular "
            f"doubling (tol {tol:.1e})")
    if abs(val.imag) > 1e-9:
        raise NonConvergenceError(f"contour integral has imaginary residue {val.imag:.2e}")
    return float(val.real)


def f_mp_residue(M: int, p: float, s: float,
                 order: int = GAUSS_ORDER_DEFAULT) -> float:
    """Finite-order CDF as 1 plus the residue sum at the prefactor poles.

    The simple pole at lambda = (p/q)^k contributes
    det(I - (p/q)^k K) * (-1) / prod_{j != k} (1 - (q/p)^{j-k}).
    Computed in log space against overflow; raw value, no clipping.
    """
    _check_fmp_args(M, p)
    q = 1.0 - p
    a = -s
    grid = QuadratureGrid(a, _gaussian_cutoff(a, p), order)
    mat = KernelSpec("gaussian-asep", p).symmetrized_matrix(grid)
    eye = np.eye(mat.shape[0])
    total = 1.0
    for k in range(M):
        lam_k = (p / q) ** k
        sign_det, logdet = np.linalg.slogdet(eye - lam_k * mat)
        log_r = 0.0
        sign_r = -1.0
        for j in range(M):
            if j == k:
                continue
            factor = 1.0 - (q / p) ** (j - k)
            log_r -= math.log(abs(factor))
            if factor < 0:
                sign_r = -sign_r
        total += sign_det * sign_r * math.exp(logdet + log_r)
    return float(total)


def brownian_sup_paths(M: int, grid_steps: int, replicas: int, seed: int) -> np.ndarray:
    """Discretised sup of the concatenated Brownian increments, per path.

    Paths are built by recursive midpoint refinement, so equal seeds with a
    coarser power-of-two grid give the restriction of the same paths; the
    DP value is then pathwise nondecreasing under refinement.
    """
    if grid_steps < 2 or grid_steps & (grid_steps - 1):
        raise ValueError("grid_steps must be a power of two >= 2")
    rng = np.random.default_rng(seed)
    levels = int(math.log2(grid_steps))
    # B[r, i, j] = Brownian motion i of replica r at time j/grid_steps
    b = np.zeros((replicas, M, 2))
    b[:, :, 1] = rng.standard_normal((replicas, M))
    n = 1
    for _ in range(levels):
        # bridge midpoint over an interval of length 1/n has variance 1/(4n)
        mid = 0.5 * (b[:, :, :-1] + b[:, :, 1:]) + (
            rng.standard_normal((replicas, M, n)) * math.sqrt(1.0 / (4.0 * n)))
        nb = np.empty((replicas, M, 2 * n + 1))
        nb[:, :, 0::2] = b
        nb[:, :, 1::2] = mid
        b, n = nb, 2 * n
    # best[r, j] = max over 0=t_0<=..<=t_i=j of the increment sum so far
    best = b[:, 0, :]
    for i in range(1, M):
        carry = np.maximum.accumulate(best - b[:, i, :], axis=1)
        best = carry + b[:, i, :]
    return best[:, -1]


def f_m1_mc(M: int, s: float, grid_steps: int, replicas: int, seed: int):
    """Monte Carlo estimate (value, standard error) of the Brownian sup CDF."""
    sups = brownian_sup_paths(M, grid_steps, replicas, seed)
    hits = (sups <= s).astype(float)
    est = float(hits.mean())
    se = float(hits.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
    return est, se


@lru_cache(maxsize=64)
def pmf_P_table(M: int, p: float, tail_tol: float = 1e-9):
    """pmf of the interaction counts: (probabilities tuple, reported tail mass).

    Entry L is F_{L,p}(C) - F_{L+1,p}(C) for L >= 1 and 1 - F_{1,p}(C) at
    L = 0, with C the front-lag constant for M.  The table stops once the
    remaining telescoped mass falls below tail_tol (or at the supported
    order cap, with the truncated tail reported).
    """
    from .shock import c_of_m

    C = c_of_m(M, p)
    fs = [1.0]  # order-zero CDF value is 1 by convention
    L = 1
    while True:
        fs.append(f_mp_residue(L, p, C))
        if fs[-1] < tail_tol or L >= FMP_MAX_ORDER:
            break
        L += 1
    probs = tuple(max(fs[i] - fs[i + 1], 0.0) for i in range(len(fs) - 1))
    tail = max(fs[-1], 0.0)
    return probs, tail


def pmf_P(L: int, M: int, p: float) -> float:
    """P(count = L) in the t -> infinity law; zero beyond the certified table."""
    if L < 0:
        return 0.0
    probs, _ = pmf_P_table(M, p)
    return probs[L] if L < len(probs) else 0.0


@lru_cache(maxsize=16)
def diff_law_support(M: int, p: float):
    """Atoms and CDF of (H - P)/M^(1/3) with H, P independent, each pmf_P.

    Returns (atoms ascending, cdf at atoms, truncated tail mass).
    """
    probs, tail = pmf_P_table(M, p)
    probs = np.asarray(probs)
    n = probs.size
    pmf_d = np.convolve(probs, probs[::-1])  # index k <-> d = k - (n-1)
    d = np.arange(-(n - 1), n)
    atoms = d / M ** (1.0 / 3.0)
    cdf = np.cumsum(pmf_d)
    return atoms, cdf, tail


def diff_law_cdf(s: float, M: int = None, p: float = None,
                 limit: bool = False) -> float:
    """CDF of the scaled difference of the two interaction counts.

    Finite-M mode convolves the pmf table; limit mode is the law of a
    difference of two independent GUE variables, by quadrature of
    integral F(y + s) dF(y).
    """
    if limit:
        return _gue_diff_cdf(float(s))
    if M is None or p is None:
        raise ValueError("finite mode needs M and p")
    atoms, cdf, _ = diff_law_support(M, p)
    idx = np.searchsorted(atoms, s + 1e-12, side="right") - 1
    if idx < 0:
        return 0.0
    return float(cdf[idx])


_GUE_GRID_STEP = 0.01
_GUE_GRID_LO = -12.5
_GUE_GRID_HI = 9.5


@lru_cache(maxsize=1)
def _gue_spline():
    from scipy.interpolate import CubicSpline

    xs = np.arange(_GUE_GRID_LO, _GUE_GRID_HI + _GUE_GRID_STEP / 2, _GUE_GRID_STEP)
    ys = np.array([_airy_det(float(x), GAUSS_ORDER_DEFAULT) for x in xs])
    return CubicSpline(xs, ys)


def gue_cdf_dense(x):
    """Vectorised F_GUE through the cached dense-grid spline (error < 1e-7)."""
    spl = _gue_spline()
    x = np.asarray(x, dtype=float)
    out = np.clip(spl(np.clip(x, _GUE_GRID_LO, _GUE_GRID_HI)), 0.0, 1.0)
    out = np.where(x < _GUE_GRID_LO, 0.0, out)
    out = np.where(x > _GUE_GRID_HI, 1.0, out)
    return out


def _gue_diff_cdf(s: float) -> float:
    if not -10.0 <= s <= 10.0:
        raise ValueError("limit mode certified on s in [-10, 10]")
    x, w = leggauss(400)
    lo, hi = -11.0, 8.0
    y = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    wy = 0.5 * (hi - lo) * w
    h = 1e-3  # central differences for the density
    dens = (gue_cdf_dense(y + h) - gue_cdf_dense(y - h)) / (2.0 * h)
    return float(np.sum(wy * dens * gue_cdf_dense(y + s)))
