"""Strong-error estimation, empirical rates and the theoretical rate formula.

Coupled pairs (fine reference, coarse scheme) share one noise path, so the
error ``X_ref - X_n`` is a difference of accumulated drifts. It is bounded by
``2 sup|b|`` pathwise, which makes every L_p moment finite and batch-means
confidence intervals valid even for heavy-tailed noise.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from . import kernels
from .levy import LevySpec, sample_increments
from .rng import check_seed, path_rng
from .sde import DriftSpec, SolutionPath, em_batch

BATCH_SIZE = 128
CI_BATCHES = 16
EXACT_HOLDER_MAX_N = 2**12


class Admissibility(NamedTuple):
    admissible: bool
    margin: float
    threshold: float


class InadmissibleError(ValueError):
    def __init__(self, admissibility):
        self.admissibility = admissibility
        super().__init__(
            f"parameters not admissible: beta misses threshold {admissibility.threshold:.6g} "
            f"by margin {admissibility.margin:.6g}"
        )


def check_admissible(alpha, alpha_tilde, beta):
    """Strict test ``beta > max(1 - alpha/2, 2 - alpha - alpha_tilde)``."""
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    if not alpha_tilde > 0:
        raise ValueError(f"alpha_tilde must be positive, got {alpha_tilde}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    threshold = max(1.0 - alpha / 2.0, 2.0 - alpha - alpha_tilde)
    return Admissibility(beta > threshold, beta - threshold, threshold)


def theoretical_rate(alpha, alpha_tilde, beta, p):
    """Guaranteed L_p rate exponent ``1/2 + min(beta/alpha, at/(alpha p), 1/2)``,
    up to an arbitrarily small loss. Requires ``p > 2``."""
    if not p > 2:
        raise ValueError(f"the rate is stated for p > 2, got {p}")
    adm = check_admissible(alpha, alpha_tilde, beta)
    if not adm.admissible:
        raise InadmissibleError(adm)
    return 0.5 + min(beta / alpha, alpha_tilde / (alpha * p), 0.5)


def baseline_lipschitz_rate(alpha, p):
    """Rate ``min(1/alpha, 1/p)`` from the Gronwall argument for Lipschitz drift."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return min(1.0 / alpha, 1.0 / p)


# ---------------------------------------------------------------------------
# error functionals


@dataclass(frozen=True)
class ErrorFunctional:
    """``sup``: max_k |E_k|; ``holder``: max_{s<t} |E_t-E_s|/(t-s)**tau;
    ``terminal``: |E_1|. All on the coarse grid."""

    kind: str = "sup"
    tau: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sup", "holder", "terminal"):
            raise ValueError(f"unknown functional {self.kind!r}")
        if self.kind == "holder" and not 0 <= self.tau < 0.5:
            raise ValueError(f"tau must lie in [0, 1/2), got {self.tau}")

    @classmethod
    def sup_norm(cls):
        return cls("sup")

    @classmethod
    def holder(cls, tau):
        return cls("holder", float(tau))

    @classmethod
    def terminal(cls):
        return cls("terminal")

    @property
    def label(self):
        return f"holder{self.tau:g}" if self.kind == "holder" else self.kind

    @classmethod
    def parse(cls, value):
        """Accept ``"sup"``, ``"terminal"``, ``"holder:0.25"`` or a dict."""
        if isinstance(value, ErrorFunctional):
            return value
        if isinstance(value, dict):
            return cls(value.get("kind", "sup"), float(value.get("tau", 0.0)))
        kind, _, tau = str(value).partition(":")
        return cls(kind, float(tau) if tau else 0.0)

    def to_json(self):
        return {"kind": "holder", "tau": self.tau} if self.kind == "holder" else self.kind


def holder_gaps(n, exact=None):
    """All gaps for an exact seminorm, dyadic gaps ``2**j`` otherwise."""
    if exact is None:
        exact = n <= EXACT_HOLDER_MAX_N
    if exact:
        return np.arange(1, n + 1)
    return 2 ** np.arange(int(math.log2(n)) + 1)


def functional_value(err, functional, exact=None):
    """Functional of one grid error path ``err`` of shape ``(n + 1, d)``."""
    if functional.kind == "sup":
        return float(np.sqrt(np.sum(err**2, axis=1)).max())
    if functional.kind == "terminal":
        return float(np.sqrt(np.sum(err[-1] ** 2)))
    n = err.shape[0] - 1
    return kernels.holder_seminorm(err, functional.tau, holder_gaps(n, exact))


def error_functional(ref, approx, functional, exact=None):
    """Functional of ``ref - approx`` at the times of ``approx``'s grid."""
    if not isinstance(ref, SolutionPath) or not isinstance(approx, SolutionPath):
        raise TypeError("expected SolutionPath arguments")
    if ref.grid_n % approx.grid_n:
        raise ValueError(f"grid {approx.grid_n} does not divide reference grid {ref.grid_n}")
    m = ref.grid_n // approx.grid_n
    err = (ref.x0 - approx.x0) + (ref.drift_part[::m] - approx.drift_part) + (ref.noise[::m] - approx.noise)
    return functional_value(err, ErrorFunctional.parse(functional), exact)


# ---------------------------------------------------------------------------
# Monte Carlo engine


def _path_noise(levy, n_ref, seed, indices):
    out = np.zeros((len(indices), n_ref + 1, levy.dim))
    for row, i in enumerate(indices):
        inc = sample_increments(levy, 1.0 / n_ref, n_ref, path_rng(seed, i))
        np.cumsum(inc, axis=0, out=out[row, 1:])
    return out


def _bound_violation(errs, drift):
    bound = 2.0 * drift.sup_bound * (1.0 + 1e-9) + 1e-12
    worst = float(np.max(np.abs(errs))) if errs.size else 0.0
    return worst > bound, worst, bound


def _simulate_batch(levy, drift, x0, n_values, n_ref, functionals, seed, indices, noise_shift):
    noise = _path_noise(levy, n_ref, seed, indices)
    ref = em_batch(drift, noise, n_ref, x0, noise_shift)
    out = np.empty((len(indices), len(n_values), len(functionals)))
    for j, n in enumerate(n_values):
        approx = em_batch(drift, noise, n, x0, noise_shift)
        # noise cancels exactly: both solutions read the same cumulative noise
        errs = ref[:, :: n_ref // n] - approx
        violated, worst, bound = _bound_violation(errs, drift)
        if violated:
            raise AssertionError(f"coupled error {worst} exceeds drift bound {bound}")
        for b in range(len(indices)):
            for f, func in enumerate(functionals):
                out[b, j, f] = functional_value(errs[b], func)
    return out


def simulate_functionals(
    levy, drift, n_values, n_ref, functionals, M, seed, x0=None, workers=None, noise_shift=None
):
    """Per-path error functionals, shape ``(M, len(n_values), len(functionals))``.

    Path ``i`` uses the stream ``path_rng(seed, i)``; batches are fixed-size
    and merged in path order, so the result does not depend on ``workers``.
    """
    seed = check_seed(seed)
    functionals = [ErrorFunctional.parse(f) for f in functionals]
    for n in n_values:
        if n_ref % n:
            raise ValueError(f"n={n} does not divide n_ref={n_ref}")
    batches = [range(s, min(s + BATCH_SIZE, M)) for s in range(0, M, BATCH_SIZE)]

    def job(indices):
        return _simulate_batch(levy, drift, x0, list(n_values), n_ref, functionals, seed, indices, noise_shift)

    if workers and workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, batches))
    else:
        parts = [job(b) for b in batches]
    if not parts:
        return np.empty((0, len(n_values), len(functionals)))
    return np.concatenate(parts, axis=0)


@dataclass
class ErrorEstimate:
    value: float
    ci: float
    M: int
    p: float = 2.0
    n: Optional[int] = None
    functional: str = "sup"
    warnings: list = field(default_factory=list)
    samples: Optional[np.ndarray] = field(default=None, repr=False)


def lp_estimate(values, p, batches=CI_BATCHES):
    """``(mean(values**p))**(1/p)`` with a batch-means 95% half-width carried
    to the root by the delta method."""
    values = np.asarray(values, dtype=float)
    M = values.size
    powers = values**p
    mean = float(np.mean(powers))
    if mean == 0.0:
        return 0.0, 0.0
    k = min(batches, M)
    means = np.array([c.mean() for c in np.array_split(powers, k)])
    half = float(stats.t.ppf(0.975, k - 1) * means.std(ddof=1) / math.sqrt(k)) if k > 1 else math.inf
    root = mean ** (1.0 / p)
    return root, half * root / (p * mean)


@dataclass
class EstimateConfig:
    levy: LevySpec
    drift: DriftSpec
    n: int
    n_ref: int
    p: float = 2.01
    M: int = 1000
    functional: ErrorFunctional = field(default_factory=ErrorFunctional)
    seed: int = 0
    x0: Optional[list] = None
    workers: Optional[int] = None


def _check_grid(n, n_ref):
    if int(n) != n or n < 1 or n_ref % n:
        raise ValueError(f"n={n} must divide n_ref={n_ref}")
    if n > n_ref // 8:
        raise ValueError(f"n={n} exceeds n_ref/8={n_ref // 8}; the reference would bias the estimate")


def admissibility_warnings(levy, drift):
    adm = check_admissible(levy.alpha, levy.alpha_tilde, drift.beta)
    if adm.admissible:
        return []
    return [f"inadmissible: beta={drift.beta} <= threshold {adm.threshold:.6g}; no rate is guaranteed"]


def estimate_lp_error(config):
    """L_p norm of the error functional over ``config.M`` coupled pairs."""
    if not config.p >= 1:
        raise ValueError(f"p must be >= 1, got {config.p}")
    if config.M < 100:
        raise ValueError(f"need M >= 100 paths, got {config.M}")
    _check_grid(config.n, config.n_ref)
    func = ErrorFunctional.parse(config.functional)
    values = simulate_functionals(
        config.levy, config.drift, [config.n], config.n_ref, [func], config.M, config.seed, config.x0, config.workers
    )[:, 0, 0]
    value, ci = lp_estimate(values, config.p)
    return ErrorEstimate(
        value, ci, config.M, config.p, config.n, func.label, admissibility_warnings(config.levy, config.drift), values
    )


# ---------------------------------------------------------------------------
# rate fitting


@dataclass
class RateReport:
    n_values: list
    errors: list
    fitted_slope: Optional[float]
    theoretical_rate: Optional[float] = None
    admissible: Optional[bool] = None
    last_octave_slope: Optional[float] = None
    status: str = "fitted"
    used: list = field(default_factory=list)
    notes: list = field(default_factory=list)


NO_CONVERGENCE_SLOPE = 0.05


def fit_rate(points, theoretical_rate=None, admissible=None):
    """Weighted least squares of ``log2(error)`` on ``log2(n)``.

    The slope is reported with the sign flipped (positive = convergence).
    Weights are inverse squared confidence half-widths in log2 units; zero
    errors are dropped as exact, and points with ``ci / value >= 0.5`` are
    dropped as too noisy.
    """
    points = sorted(points, key=lambda pt: pt[0])
    n_values = [int(n) for n, _ in points]
    errors = [e for _, e in points]
    if points and all(e.value == 0 for e in errors):
        return RateReport(n_values, errors, None, theoretical_rate, admissible, None, "exact", [], ["all errors are exactly zero"])
    notes = []
    if any(e.value == 0 for e in errors):
        notes.append("exact at some n; excluded from the fit")
    used = [(n, e) for n, e in points if e.value > 0 and e.ci / e.value < 0.5]
    if len(used) < 3:
        raise ValueError(f"need >= 3 usable points, got {len(used)}")
    x = np.log2([n for n, _ in used])
    if x.max() - x.min() < 3:
        raise ValueError("usable points must span at least 3 octaves")
    y = np.log2([e.value for _, e in used])
    sigma = np.array([e.ci / (e.value * math.log(2.0)) for _, e in used])
    w = 1.0 / sigma**2 if np.all(sigma > 0) else np.ones_like(x)
    slope = -float(np.polyfit(x, y, 1, w=np.sqrt(w))[0])
    last = -float((y[-1] - y[-2]) / (x[-1] - x[-2]))
    status = "fitted"
    if slope < NO_CONVERGENCE_SLOPE:
        status = "no convergence detected"
        notes.append(status)
    return RateReport(n_values, errors, slope, theoretical_rate, admissible, last, status, [n for n, _ in used], notes)


# ---------------------------------------------------------------------------
# pathwise rates


@dataclass
class PathwiseReport:
    ladder: list
    eps: float
    tau: float
    quantile_level: float
    eta: np.ndarray = field(repr=False)
    quantiles: list = field(default_factory=list)
    relative_change: float = 0.0
    ladder_growth: float = 0.0
    stable: bool = True
    growth_flagged: bool = False
    note: str = "finite-ladder evidence of stochastic boundedness, not a proof"


STABILITY_TOLERANCE = 0.30


def pathwise_eta(values, ladder, eps):
    """Running maxima of ``n**(1/2 - eps) * F_n`` along the ladder,
    shape ``(M, len(ladder))``."""
    weights = np.asarray(ladder, dtype=float) ** (0.5 - eps)
    return np.maximum.accumulate(values * weights, axis=1)


def as_rate_experiment(levy, drift, ladder, n_ref, M, seed, eps=0.1, tau=0.0, x0=None, workers=None, level=0.95):
    """Empirical law of ``eta = max_n n**(1/2-eps) ||X - X^n||_{C^tau}``.

    Reports the ``level`` quantile of eta for each ladder prefix. The
    ladder is stable when its last rung moves the quantile by less than 30%;
    growth is flagged when the quantile rises by 30% or more from the first
    rung to the last.
    """
    ladder = sorted(int(n) for n in ladder)
    if len(ladder) < 2:
        raise ValueError("ladder needs at least two step counts")
    if M < 100:
        raise ValueError(f"need M >= 100 paths, got {M}")
    for n in ladder:
        _check_grid(n, n_ref)
    funcs = [ErrorFunctional.sup_norm()]
    if tau > 0:
        funcs.append(ErrorFunctional.holder(tau))
    raw = simulate_functionals(levy, drift, ladder, n_ref, funcs, M, seed, x0, workers)
    values = raw.sum(axis=2)  # C^tau norm = sup + seminorm
    eta = pathwise_eta(values, ladder, eps)
    quantiles = [float(np.quantile(eta[:, j], level)) for j in range(len(ladder))]
    change = _relative_change(quantiles[-2], quantiles[-1])
    growth = _relative_change(quantiles[0], quantiles[-1])
    return PathwiseReport(
        ladder, eps, tau, level, eta[:, -1], quantiles, change, growth,
        change < STABILITY_TOLERANCE, growth >= STABILITY_TOLERANCE,
    )


def _relative_change(before, after):
    if before == after:
        return 0.0
    return math.inf if before == 0 else abs(after - before) / before
