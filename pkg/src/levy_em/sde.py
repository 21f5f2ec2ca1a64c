"""Bounded Hölder drifts and the Euler-Maruyama scheme on shared noise.

The scheme for ``dX = b(X) dt + dL`` on ``[0, 1]`` with ``n`` steps is

    X_{k+1} = X_k + b(X_k) / n + (L_{(k+1)/n} - L_{k/n}).

Paths are stored as ``x0 + drift_part + noise`` so that two solutions driven
by the same lattice differ only through their drift parts; with zero or
constant drift the strong error is exactly representable.
"""
from dataclasses import dataclass, field
import csv
import math

import numpy as np

from . import kernels
from .levy import IncrementLattice
from .rng import as_generator

DRIFT_KINDS = {
    "Zero": kernels.ZERO,
    "Constant": kernels.CONSTANT,
    "SmoothSine": kernels.SMOOTH_SINE,
    "HolderPower": kernels.HOLDER_POWER,
    "Weierstrass": kernels.WEIERSTRASS,
}


@dataclass(frozen=True)
class DriftSpec:
    """Coordinatewise bounded drift with declared Hölder data.

    ``holder_seminorm`` bounds ``|b(x) - b(y)| / |x - y|**min(beta, 1)`` for
    ``|x - y| <= 1``; for smooth drifts (``beta >= 1``) it is the Lipschitz
    constant. ``offset`` is subtracted from every coordinate (constant shift).
    """

    kind: str
    beta: float
    sup_bound: float
    holder_seminorm: float
    params: dict = field(default_factory=dict)
    offset: tuple = ()

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @classmethod
    def zero(cls):
        return cls("Zero", 1.0, 0.0, 0.0)

    @classmethod
    def constant(cls, value):
        value = tuple(float(v) for v in np.atleast_1d(value))
        return cls("Constant", 1.0, max(abs(v) for v in value), 0.0, {"value": value})

    @classmethod
    def smooth_sine(cls, amplitude=1.0, frequency=1.0, beta=2.0):
        amplitude, frequency = float(amplitude), float(frequency)
        return cls(
            "SmoothSine",
            float(beta),
            abs(amplitude),
            abs(amplitude * frequency),
            {"amplitude": amplitude, "frequency": frequency},
        )

    @classmethod
    def holder_power(cls, beta, amplitude=1.0, center=0.0):
        """``amplitude * sign(x - center) * (|x - center|**beta ∧ 1)``."""
        if not 0 < beta <= 1:
            raise ValueError(f"HolderPower needs beta in (0, 1], got {beta}")
        amplitude = float(amplitude)
        return cls(
            "HolderPower",
            float(beta),
            abs(amplitude),
            abs(amplitude) * 2.0 ** (1.0 - beta),
            {"amplitude": amplitude, "center": float(center)},
        )

    @classmethod
    def weierstrass(cls, beta, base=2, terms=20, amplitude=1.0):
        """Truncated Weierstrass function ``sum_k base**(-beta k) cos(base**k x)``."""
        if not 0 < beta < 1:
            raise ValueError(f"Weierstrass needs beta in (0, 1), got {beta}")
        if int(base) != base or base < 2:
            raise ValueError(f"base must be an integer >= 2, got {base}")
        a, amplitude = float(base), float(amplitude)
        sup = abs(amplitude) * sum(a ** (-beta * k) for k in range(terms + 1))
        # split the series where base**k |h| crosses 2
        q = 2.0 ** (1.0 - beta)
        sem = abs(amplitude) * (q * a ** (1.0 - beta) / (a ** (1.0 - beta) - 1.0) + q / (1.0 - a ** (-beta)))
        return cls(
            "Weierstrass",
            float(beta),
            sup,
            sem,
            {"base": int(base), "terms": int(terms), "amplitude": amplitude},
        )

    @property
    def code(self):
        return DRIFT_KINDS[self.kind]

    def kernel_args(self, dim):
        """``(code, params, offset)`` arrays for the compiled kernels."""
        p = self.params
        if self.kind == "Zero":
            params = np.zeros(1)
        elif self.kind == "Constant":
            params = np.array(p["value"], dtype=float)
            if params.size == 1:
                params = np.full(dim, params[0])
            if params.size != dim:
                raise ValueError(f"constant drift has {params.size} entries, expected {dim}")
        elif self.kind == "SmoothSine":
            params = np.array([p["amplitude"], p["frequency"]])
        elif self.kind == "HolderPower":
            params = np.array([self.beta, p["amplitude"], p["center"]])
        else:
            params = np.array([self.beta, p["base"], p["terms"], p["amplitude"]], dtype=float)
        offset = np.zeros(dim) if not self.offset else np.broadcast_to(np.array(self.offset, float), (dim,)).copy()
        return self.code, params, offset

    def __call__(self, x):
        """Evaluate on ``(..., d)`` arrays."""
        x = np.asarray(x, dtype=float)
        code, params, offset = self.kernel_args(x.shape[-1])
        return kernels.drift_numpy(code, params, offset, x)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind in ("SmoothSine", "HolderPower", "Weierstrass"):
            out["beta"] = self.beta
        for k, v in self.params.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        if self.offset:
            out["offset"] = list(self.offset)
        return out

    @classmethod
    def from_dict(cls, data):
        kind = data.get("kind")
        if kind == "Zero":
            spec = cls.zero()
        elif kind == "Constant":
            spec = cls.constant(data["value"])
        elif kind == "SmoothSine":
            spec = cls.smooth_sine(data.get("amplitude", 1.0), data.get("frequency", 1.0), data.get("beta", 2.0))
        elif kind == "HolderPower":
            spec = cls.holder_power(data["beta"], data.get("amplitude", 1.0), data.get("center", 0.0))
        elif kind == "Weierstrass":
            spec = cls.weierstrass(data["beta"], data.get("base", 2), data.get("terms", 20), data.get("amplitude", 1.0))
        else:
            raise ValueError(f"unknown drift kind {kind!r}")
        if data.get("offset"):
            spec = _with_offset(spec, tuple(float(v) for v in data["offset"]))
        return spec


def _with_offset(drift, offset):
    shift = max(abs(v) for v in offset) if offset else 0.0
    return DriftSpec(drift.kind, drift.beta, drift.sup_bound + shift, drift.holder_seminorm, drift.params, offset)


def holder_check(drift, dim=1, n_pairs=10_000, rng=None, radius=3.0):
    """Largest observed ``|b(x)-b(y)| / (seminorm |x-y|**min(beta,1))`` and
    ``|b(x)| / sup_bound`` over random probes; both should be <= 1."""
    rng = as_generator(rng)
    expo = min(drift.beta, 1.0)
    center = float(drift.params.get("center", 0.0))
    x = center + rng.uniform(-radius, radius, (n_pairs, dim))
    direction = rng.standard_normal((n_pairs, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    h = 10.0 ** rng.uniform(-6.0, 0.0, n_pairs)
    # a quarter of the pairs straddle the center symmetrically
    q = n_pairs // 4
    x[:q] = center - 0.5 * h[:q, None] * direction[:q]
    y = x + h[:, None] * direction
    bx, by = drift(x), drift(y)
    sup_ratio = float(np.max(np.abs(np.concatenate([bx, by])))) / drift.sup_bound if drift.sup_bound else 0.0
    diff = np.max(np.abs(bx - by), axis=1)
    if drift.holder_seminorm == 0:
        holder_ratio = math.inf if diff.max() > 0 else 0.0
    else:
        holder_ratio = float(np.max(diff / (drift.holder_seminorm * h**expo)))
    return sup_ratio, holder_ratio


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SolutionPath:
    """Scheme output on the grid ``k / grid_n``.

    ``states = (x0 + drift_part) + noise`` row by row; ``noise`` is the
    driving process at the grid times, shared between coupled solutions.
    """

    grid_n: int
    x0: np.ndarray
    drift_part: np.ndarray
    noise: np.ndarray

    @property
    def states(self):
        return (self.x0 + self.drift_part) + self.noise

    @property
    def times(self):
        return np.arange(self.grid_n + 1) / self.grid_n

    def to_csv(self, path):
        states = self.states
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"X_{i + 1}" for i in range(states.shape[1])])
            for t, row in zip(self.times, states):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def _x0(x0, dim):
    if x0 is None:
        return np.zeros(dim)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size == 1 and dim > 1:
        x0 = np.full(dim, x0[0])
    if x0.shape != (dim,):
        raise ValueError(f"x0 must have {dim} entries")
    return x0


def _stride(n, n_fine):
    if int(n) != n or n < 1 or n_fine % n:
        raise ValueError(f"n={n} must divide n_fine={n_fine}")
    return n_fine // int(n)


def em_batch(drift, noise, n, x0=None, noise_shift=None):
    """Drift parts for a batch of cumulative noise paths.

    noise: ``(B, n_fine + 1, d)``; returns ``(B, n + 1, d)``.
    """
    _, n_fine1, dim = noise.shape
    stride = _stride(n, n_fine1 - 1)
    code, params, offset = drift.kernel_args(dim)
    shift = np.zeros(dim) if noise_shift is None else _x0(noise_shift, dim)
    return kernels.em_drift_part(code, params, offset, shift, noise, _x0(x0, dim), stride, 1.0 / int(n))


def euler_maruyama(drift, lattice, n, x0=None, noise_shift=None):
    """Euler-Maruyama with ``n`` steps on the noise of ``lattice``.

    ``noise_shift`` adds ``kappa * dt`` to every increment (see
    :func:`shift_reduce`).
    """
    if not isinstance(lattice, IncrementLattice):
        raise TypeError("lattice must be an IncrementLattice")
    stride = _stride(n, lattice.n_fine)
    x0 = _x0(x0, lattice.dim)
    noise = lattice.noise_path()
    drift_part = em_batch(drift, noise[None], n, x0, noise_shift)[0]
    return SolutionPath(int(n), x0, drift_part, noise[::stride].copy())


def reference_solution(drift, lattice, x0=None, noise_shift=None):
    """The scheme on the finest grid; stands in for the exact solution."""
    return euler_maruyama(drift, lattice, lattice.n_fine, x0, noise_shift)


def shift_reduce(drift, kappa):
    """Rewrite ``b`` as ``b - kappa`` with noise ``L_t + kappa t``.

    Returns ``(shifted_drift, kappa)``; pass ``kappa`` as ``noise_shift`` to
    the integrator to reproduce the original dynamics.
    """
    kappa = tuple(float(v) for v in np.atleast_1d(kappa))
    if all(v == 0 for v in kappa):
        return drift, kappa
    if drift.kind == "Zero":
        return DriftSpec.constant([-v for v in kappa]), kappa
    if drift.kind == "Constant":
        value = np.array(drift.params["value"], float) - np.array(kappa)
        if np.all(value == 0):
            return DriftSpec.zero(), kappa
        return DriftSpec.constant(value), kappa
    base = np.array(drift.offset or (0.0,), float)
    return _with_offset(drift, tuple(float(v) for v in base + np.array(kappa))), kappa
