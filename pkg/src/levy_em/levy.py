"""Driving Lévy processes: specs, exact-in-law increment samplers, lattices.

Scale convention: every catalog member has characteristic exponent with unit
constant, e.g. ``Phi(lam) = |lam|**alpha`` for the isotropic stable process and
``Phi(lam) = scale**2 * |lam|**2`` for Brownian motion (covariance ``2 t I``).
Tempered and truncated processes have Lévy density ``|r|**(-1-alpha) * rho(|r|)``
per coordinate with no extra constant.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, special, stats

from .rng import as_generator

KINDS = (
    "Brownian",
    "IsotropicStable",
    "CylindricalStable",
    "TemperedStable1D",
    "TruncatedStable1D",
    "Sum",
)

# jumps per chunk when summing compound-Poisson increments
_JUMP_CHUNK = 4_000_000


@dataclass(frozen=True)
class LevySpec:
    """Description of a symmetric driving process.

    Use the constructors (:meth:`brownian`, :meth:`isotropic_stable`, ...)
    rather than the raw initializer; they fill ``alpha_tilde`` consistently.
    """

    kind: str
    alpha: float
    alpha_tilde: float
    dim: int = 1
    params: dict = field(default_factory=dict)
    components: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}")
        if not 0 < self.alpha <= 2:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not self.alpha_tilde > 0:
            raise ValueError(f"alpha_tilde must be positive, got {self.alpha_tilde}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.kind not in ("Brownian", "Sum") and self.alpha >= 2:
            raise ValueError(f"{self.kind} needs alpha < 2")
        if self.kind == "TemperedStable1D" and not self.params.get("c", 0) > 0:
            raise ValueError("tempering rate c must be positive")
        cutoff = self.params.get("cutoff")
        if cutoff is not None and not cutoff > 0:
            raise ValueError("cutoff must be positive")

    @classmethod
    def brownian(cls, dim=1, scale=1.0):
        if not scale > 0:
            raise ValueError("scale must be positive")
        return cls("Brownian", 2.0, math.inf, dim, {"scale": float(scale)})

    @classmethod
    def isotropic_stable(cls, alpha, dim=1):
        if not 0 < alpha < 2:
            raise ValueError(f"stable alpha must lie in (0, 2), got {alpha}")
        return cls("IsotropicStable", float(alpha), float(alpha), dim)

    @classmethod
    def cylindrical_stable(cls, alpha, dim=1):
        if not 0 < alpha < 2:
            raise ValueError(f"stable alpha must lie in (0, 2), got {alpha}")
        return cls("CylindricalStable", float(alpha), float(alpha), dim)

    @classmethod
    def tempered_stable(cls, alpha, c=1.0, dim=1, cutoff=None):
        if not 0 < alpha < 2:
            raise ValueError(f"tempered alpha must lie in (0, 2), got {alpha}")
        return cls("TemperedStable1D", float(alpha), float(alpha), dim, {"c": float(c), "cutoff": cutoff})

    @classmethod
    def truncated_stable(cls, alpha, dim=1, cutoff=None):
        if not 0 < alpha < 2:
            raise ValueError(f"truncated alpha must lie in (0, 2), got {alpha}")
        return cls("TruncatedStable1D", float(alpha), float(alpha), dim, {"cutoff": cutoff})

    @classmethod
    def sum(cls, first, second):
        """Independent sum. The larger stable index wins; the moment index
        becomes ``(at1 * a2 / a1) ∧ at2`` with ``a1 <= a2``."""
        if first.dim != second.dim:
            raise ValueError("summands must have the same dimension")
        lo, hi = sorted((first, second), key=lambda s: s.alpha)
        alpha_tilde = min(lo.alpha_tilde * hi.alpha / lo.alpha, hi.alpha_tilde)
        return cls("Sum", hi.alpha, alpha_tilde, first.dim, {}, (first, second))

    def with_cutoff(self, cutoff):
        if self.kind not in ("TemperedStable1D", "TruncatedStable1D"):
            raise ValueError("only tempered/truncated processes have a small-jump cutoff")
        return LevySpec(self.kind, self.alpha, self.alpha_tilde, self.dim, {**self.params, "cutoff": cutoff})

    def to_dict(self):
        if self.kind == "Sum":
            return {"kind": "Sum", "components": [c.to_dict() for c in self.components]}
        out = {"kind": self.kind, "alpha": self.alpha, "dim": self.dim}
        params = {k: v for k, v in self.params.items() if v is not None}
        if params:
            out["params"] = params
        return out

    @classmethod
    def from_dict(cls, data):
        kind = data.get("kind")
        params = dict(data.get("params", {}))
        dim = int(data.get("dim", 1))
        if kind == "Sum":
            comps = data.get("components", [])
            if len(comps) != 2:
                raise ValueError("Sum needs exactly two components")
            return cls.sum(cls.from_dict(comps[0]), cls.from_dict(comps[1]))
        if kind == "Brownian":
            return cls.brownian(dim, params.get("scale", 1.0))
        if kind not in KINDS:
            raise ValueError(f"unknown process kind {kind!r}")
        if "alpha" not in data:
            raise ValueError(f"{kind} needs alpha")
        alpha = float(data["alpha"])
        if kind == "IsotropicStable":
            return cls.isotropic_stable(alpha, dim)
        if kind == "CylindricalStable":
            return cls.cylindrical_stable(alpha, dim)
        if kind == "TemperedStable1D":
            return cls.tempered_stable(alpha, params.get("c", 1.0), dim, params.get("cutoff"))
        return cls.truncated_stable(alpha, dim, params.get("cutoff"))


# ---------------------------------------------------------------------------
# one-dimensional building blocks


def _check_alpha(alpha):
    if not 0 < alpha <= 2:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")


def stable_1d(alpha, size, rng):
    """Symmetric alpha-stable draws with characteristic function
    ``exp(-|lam|**alpha)`` (Chambers-Mallows-Stuck). ``alpha=2`` gives N(0, 2)."""
    _check_alpha(alpha)
    rng = as_generator(rng)
    if alpha == 2:
        return math.sqrt(2.0) * rng.standard_normal(size)
    v = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    if alpha == 1:
        return np.tan(v)
    w = rng.standard_exponential(size)
    return (
        np.sin(alpha * v)
        / np.cos(v) ** (1.0 / alpha)
        * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
    )


def sample_stable_1d(alpha, rng):
    """One standard symmetric alpha-stable variate."""
    return float(stable_1d(alpha, 1, rng)[0])


def positive_stable(a, size, rng):
    """Positive a-stable draws with Laplace transform ``exp(-u**a)``, 0 < a < 1
    (Kanter's representation)."""
    if not 0 < a < 1:
        raise ValueError(f"subordinator index must lie in (0, 1), got {a}")
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    return (np.sin(a * u) / np.sin(u) ** (1.0 / a)) * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)


def default_cutoff(alpha, dt):
    return min(dt ** (1.0 / alpha), 0.01)


def _upper_gamma(s, x):
    """Upper incomplete gamma for s in (-2, 1), x > 0."""
    if s > 0:
        return special.gammaincc(s, x) * special.gamma(s)
    if s == 0:
        return special.exp1(x)
    # Gamma(s, x) = (Gamma(s + 1, x) - x**s e**-x) / s
    return (_upper_gamma(s + 1.0, x) - x**s * math.exp(-x)) / s


def jump_intensity(kind, alpha, c, cutoff):
    """Mass of the one-sided Lévy measure on ``[cutoff, inf)``."""
    if kind == "TemperedStable1D":
        return c**alpha * _upper_gamma(-alpha, c * cutoff)
    if cutoff >= 1:
        return 0.0
    return (cutoff ** (-alpha) - 1.0) / alpha


def small_jump_variance(kind, alpha, c, cutoff):
    """``int_{|r| < cutoff} r**2 nu(dr)`` over both signs."""
    if kind == "TemperedStable1D":
        x = c * cutoff
        return 2.0 * c ** (alpha - 2.0) * special.gamma(2.0 - alpha) * special.gammainc(2.0 - alpha, x)
    cutoff = min(cutoff, 1.0)
    return 2.0 * cutoff ** (2.0 - alpha) / (2.0 - alpha)


def _jump_magnitudes(kind, alpha, c, cutoff, count, rng):
    if count == 0:
        return np.empty(0)
    if kind == "TruncatedStable1D":
        lo = cutoff ** (-alpha)
        u = rng.uniform(size=count)
        return (lo - u * (lo - 1.0)) ** (-1.0 / alpha)
    # Pareto proposal on [cutoff, inf), accept with prob exp(-c (r - cutoff))
    out = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        batch = max(int(need * 1.2) + 16, 64)
        r = cutoff * rng.uniform(size=batch) ** (-1.0 / alpha)
        keep = r[rng.uniform(size=batch) < np.exp(-c * (r - cutoff))][:need]
        out[filled : filled + keep.size] = keep
        filled += keep.size
    return out


def _jump_sampler_args(kind, alpha, c, dt, cutoff):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if kind == "TemperedStable1D" and not c > 0:
        raise ValueError(f"tempering rate must be positive, got {c}")
    if cutoff is None:
        cutoff = default_cutoff(alpha, dt)
    if not cutoff > 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    if kind == "TruncatedStable1D":
        cutoff = min(cutoff, 1.0)
    return cutoff


def jump_stable_1d(kind, alpha, c, dt, size, rng, cutoff=None, return_jumps=False):
    """Compound-Poisson large jumps plus Gaussian small-jump compensation.

    Jumps of modulus >= ``cutoff`` are exact; the rest are replaced by a
    Gaussian with the same variance. Symmetry makes the compensator vanish.
    """
    cutoff = _jump_sampler_args(kind, alpha, c, dt, cutoff)
    rng = as_generator(rng)
    rate = 2.0 * jump_intensity(kind, alpha, c, cutoff) * dt
    sigma = math.sqrt(small_jump_variance(kind, alpha, c, cutoff) * dt)
    counts = rng.poisson(rate, size)
    out = np.zeros(size)
    jumps = []
    start = 0
    while start < size:
        stop = start + 1
        total = counts[start]
        # grow the chunk until it holds enough jumps
        while stop < size and total + counts[stop] <= _JUMP_CHUNK:
            total += counts[stop]
            stop += 1
        mags = _jump_magnitudes(kind, alpha, c, cutoff, int(total), rng)
        signed = np.where(rng.uniform(size=mags.size) < 0.5, -mags, mags)
        owner = np.repeat(np.arange(stop - start), counts[start:stop])
        out[start:stop] = np.bincount(owner, weights=signed, minlength=stop - start)
        if return_jumps:
            jumps.append(signed)
        start = stop
    out += sigma * rng.standard_normal(size)
    if return_jumps:
        return out, np.concatenate(jumps) if jumps else np.empty(0)
    return out


def sample_tempered_stable_1d(alpha, c, dt, rng, cutoff=None):
    """One symmetric tempered-stable increment over ``dt``."""
    return float(jump_stable_1d("TemperedStable1D", alpha, c, dt, 1, rng, cutoff)[0])


def sample_truncated_stable_1d(alpha, dt, rng, cutoff=None):
    """One symmetric truncated-stable increment (jumps of modulus <= 1)."""
    return float(jump_stable_1d("TruncatedStable1D", alpha, 0.0, dt, 1, rng, cutoff)[0])


# ---------------------------------------------------------------------------
# increments of a LevySpec


def sample_increments(spec, dt, size, rng):
    """``size`` i.i.d. increments over ``dt``, shape ``(size, dim)``."""
    if not 0 < dt <= 1:
        raise ValueError(f"dt must lie in (0, 1], got {dt}")
    rng = as_generator(rng)
    d = spec.dim
    if spec.kind == "Brownian":
        return math.sqrt(2.0 * dt) * spec.params.get("scale", 1.0) * rng.standard_normal((size, d))
    if spec.kind == "CylindricalStable" or (spec.kind == "IsotropicStable" and d == 1):
        return dt ** (1.0 / spec.alpha) * stable_1d(spec.alpha, size * d, rng).reshape(size, d)
    if spec.kind == "IsotropicStable":
        # subordinated Brownian motion: E exp(-S |lam|^2) = exp(-|lam|^alpha)
        s = positive_stable(spec.alpha / 2.0, size, rng)
        g = rng.standard_normal((size, d))
        return dt ** (1.0 / spec.alpha) * np.sqrt(2.0 * s)[:, None] * g
    if spec.kind in ("TemperedStable1D", "TruncatedStable1D"):
        flat = jump_stable_1d(
            spec.kind, spec.alpha, spec.params.get("c", 0.0), dt, size * d, rng, spec.params.get("cutoff")
        )
        return flat.reshape(size, d)
    first, second = spec.components
    return sample_increments(first, dt, size, rng) + sample_increments(second, dt, size, rng)


def sample_increment(spec, dt, rng):
    """One draw of ``L_{t+dt} - L_t``."""
    return sample_increments(spec, dt, 1, rng)[0]


# ---------------------------------------------------------------------------
# characteristic exponent


def _one_minus_cos_integral(alpha, lam, weight, upper):
    lam = abs(lam)
    if lam == 0:
        return 0.0

    def f(r):
        s = math.sin(0.5 * lam * r)
        return 2.0 * s * s * r ** (-1.0 - alpha) * weight(r)

    # split at the first few oscillations so quad sees a smooth integrand
    knots = [0.0] + [k * 2.0 * math.pi / lam for k in range(1, 6)]
    knots = [k for k in knots if k < upper] + [upper]
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        total += integrate.quad(f, a, b, limit=200)[0]
    return 2.0 * total


@lru_cache(maxsize=4096)
def tempered_exponent_1d(alpha, c, lam):
    """``2 int_0^inf (1 - cos(lam r)) r**(-1-alpha) exp(-c r) dr`` by quadrature."""
    return _one_minus_cos_integral(alpha, lam, lambda r: math.exp(-c * r), math.inf)


@lru_cache(maxsize=4096)
def truncated_exponent_1d(alpha, lam):
    """``2 int_0^1 (1 - cos(lam r)) r**(-1-alpha) dr`` by quadrature."""
    return _one_minus_cos_integral(alpha, lam, lambda r: 1.0, 1.0)


def char_exponent(spec, lam):
    """``Phi(lam)`` with ``E exp(i <lam, L_t>) = exp(-t Phi(lam))``.

    Every catalog member is symmetric, so the value is real.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (spec.dim,):
        raise ValueError(f"lambda must have shape ({spec.dim},), got {lam.shape}")
    if spec.kind == "Brownian":
        return spec.params.get("scale", 1.0) ** 2 * float(lam @ lam)
    if spec.kind == "IsotropicStable":
        return float(np.linalg.norm(lam)) ** spec.alpha
    if spec.kind == "CylindricalStable":
        return float(np.sum(np.abs(lam) ** spec.alpha))
    if spec.kind == "TemperedStable1D":
        c = spec.params["c"]
        return sum(tempered_exponent_1d(spec.alpha, c, float(abs(x))) for x in lam)
    if spec.kind == "TruncatedStable1D":
        return sum(truncated_exponent_1d(spec.alpha, float(abs(x))) for x in lam)
    return sum(char_exponent(c, lam) for c in spec.components)


# ---------------------------------------------------------------------------
# lattices


def _is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class IncrementLattice:
    """Fine-grid increments on [0, 1], shape ``(dim, n_fine)``."""

    increments: np.ndarray

    def __post_init__(self):
        inc = np.array(self.increments, dtype=float)
        if inc.ndim != 2:
            raise ValueError("increments must be a (dim, n_fine) array")
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def n_fine(self):
        return self.increments.shape[1]

    @property
    def dim(self):
        return self.increments.shape[0]

    def noise_path(self):
        """``L`` at the fine grid points, shape ``(n_fine + 1, dim)``;
        left-to-right cumulative sum with ``L_0 = 0``."""
        out = np.zeros((self.n_fine + 1, self.dim))
        np.cumsum(self.increments.T, axis=0, out=out[1:])
        return out

    def __eq__(self, other):
        return isinstance(other, IncrementLattice) and np.array_equal(self.increments, other.increments)


def sample_lattice(spec, n_fine, rng):
    """``n_fine`` i.i.d. increments over ``1/n_fine``.

    ``rng`` is a Generator or an integer seed; an integer makes the lattice a
    pure function of ``(spec, n_fine, seed)``.
    """
    if not _is_power_of_two(n_fine) or n_fine < 2:
        raise ValueError(f"n_fine must be a power of two >= 2, got {n_fine}")
    return IncrementLattice(sample_increments(spec, 1.0 / n_fine, n_fine, rng).T)


def coarsen_array(increments, factor):
    """Block sums along the last axis by repeated adjacent-pair addition.

    The pairwise tree makes ``coarsen(coarsen(x, a), b) == coarsen(x, a*b)``
    bit for bit.
    """
    n = increments.shape[-1]
    if not _is_power_of_two(factor):
        raise ValueError(f"factor must be a power of two, got {factor}")
    if n % factor:
        raise ValueError(f"factor {factor} does not divide {n}")
    out = increments
    while factor > 1:
        out = out[..., 0::2] + out[..., 1::2]
        factor //= 2
    return out


def coarsen(lattice, factor):
    """Lattice of increments over blocks of ``factor`` fine steps."""
    return IncrementLattice(coarsen_array(lattice.increments, factor))


# ---------------------------------------------------------------------------
# statistical self-checks


def default_lambdas(dim, count=8):
    """Fixed probe set: magnitudes 2**-2 .. 2**5 on rotating directions."""
    out = []
    for k in range(count):
        direction = np.zeros(dim)
        direction[k % dim] = 1.0
        if dim > 1 and k % 2:
            direction[(k + 1) % dim] = 1.0
        direction /= np.linalg.norm(direction)
        out.append(2.0 ** (k - 2) * direction * (-1) ** k)
    return out


@dataclass
class CharExponentReport:
    dt: float
    M: int
    threshold: float
    lambdas: list
    empirical: list
    target: list
    discrepancy: list
    passed: bool

    def rows(self):
        return list(zip(self.lambdas, self.empirical, self.target, self.discrepancy))


def validate_char_exponent(spec, dt, M, lambdas=None, rng=None, sampler_spec=None, slack=0.005):
    """Compare the empirical characteristic function of sampled increments
    with ``exp(-dt * Phi(lam))``.

    ``sampler_spec`` draws from a different process than the target (used for
    negative controls).
    """
    if M < 10_000:
        raise ValueError(f"need M >= 10^4 samples, got {M}")
    lambdas = default_lambdas(spec.dim) if lambdas is None else [np.atleast_1d(np.asarray(l, float)) for l in lambdas]
    x = sample_increments(sampler_spec or spec, dt, M, as_generator(rng))
    threshold = 3.0 / math.sqrt(M) + slack
    emp, tgt, disc = [], [], []
    for lam in lambdas:
        e = float(np.mean(np.cos(x @ lam)))
        t = math.exp(-dt * char_exponent(spec, lam))
        emp.append(e)
        tgt.append(t)
        disc.append(abs(e - t))
    return CharExponentReport(dt, M, threshold, lambdas, emp, tgt, disc, max(disc) < threshold)


@dataclass
class H3Report:
    p: float
    t_grid: np.ndarray
    moments: np.ndarray
    slope: float
    expected_slope: float
    heavy_tail: bool


def verify_h3_moments(spec, p, t_grid=None, M=100_000, rng=None):
    """Log-log slope of ``E[|L_t|**p ∧ 1]`` against ``t``.

    For ``p`` below the moment index the slope should be ``p / alpha``; above
    it the clamp dominates and the slope saturates at ``alpha_tilde / alpha``.
    """
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    t_grid = 2.0 ** np.arange(-12, -1) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t_grid.size < 3:
        raise ValueError("t_grid needs at least 3 points")
    rng = as_generator(rng)
    moments = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        x = sample_increments(spec, float(t), M, rng)
        r = np.linalg.norm(x, axis=1)
        moments[i] = np.mean(np.minimum(r**p, 1.0))
    slope = float(np.polyfit(np.log(t_grid), np.log(moments), 1)[0])
    expected = min(p, spec.alpha_tilde) / spec.alpha
    return H3Report(p, t_grid, moments, slope, expected, p >= spec.alpha_tilde)


def ks_cauchy(draws):
    """Two-sided KS statistic of draws against the standard Cauchy CDF."""
    return stats.kstest(draws, stats.cauchy.cdf).statistic
