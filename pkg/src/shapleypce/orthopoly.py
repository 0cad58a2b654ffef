"""Univariate orthogonal polynomial families under probability weights.

Both families use the probabilists' normalization: the weight is the density of
the standard random variable (``U(-1, 1)`` for Legendre, ``N(0, 1)`` for the
Hermite ``He`` polynomials), so quadrature weights sum to one and expectations
read directly off sums.  Polynomials are *not* normalized to unit norm; use
:func:`norm_sq` for ``E[phi_n^2]``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal


class Family(str, enum.Enum):
    LEGENDRE = "legendre"
    HERMITE = "hermite"


def eval_table(family: Family, max_degree: int, x) -> np.ndarray:
    """Evaluate degrees ``0..max_degree`` at ``x``; result has shape ``x.shape + (max_degree+1,)``."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree == 0:
        return out
    out[..., 1] = x
    for n in range(1, max_degree):
        if family is Family.LEGENDRE:
            out[..., n + 1] = ((2 * n + 1) * x * out[..., n] - n * out[..., n - 1]) / (n + 1)
        else:
            out[..., n + 1] = x * out[..., n] - n * out[..., n - 1]
    return out


def eval_univariate(family: Family, degree: int, x):
    """Value of the degree-``degree`` polynomial of ``family`` at ``x`` (scalar or array)."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    res = eval_table(Family(family), degree, x)[..., degree]
    return float(res) if np.ndim(res) == 0 else res


def norm_sq(family: Family, degree: int) -> float:
    """``E[phi_degree(Z)^2]`` for the standard variable ``Z`` of ``family``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if Family(family) is Family.LEGENDRE:
        return 1.0 / (2 * degree + 1)
    return float(math.factorial(degree))


def _recurrence(family: Family, n: int) -> tuple[np.ndarray, np.ndarray]:
    # monic three-term recurrence: diagonal a_k and off-diagonal sqrt(b_k)
    k = np.arange(1, n, dtype=float)
    if family is Family.LEGENDRE:
        b = k * k / (4.0 * k * k - 1.0)
    else:
        b = k
    return np.zeros(n), np.sqrt(b)


@lru_cache(maxsize=256)
def _gauss_rule_cached(family: Family, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    diag, off = _recurrence(family, n_points)
    if n_points == 1:
        nodes = np.zeros(1)
    else:
        nodes = eigh_tridiagonal(diag, off, eigvals_only=True)
        # one Newton polish on the degree-n polynomial; eigenvalues are already
        # accurate but this tightens the tails for large n
        tab = eval_table(family, n_points, nodes)
        p_n, p_nm1 = tab[:, n_points], tab[:, n_points - 1]
        if family is Family.LEGENDRE:
            dp = n_points * (nodes * p_n - p_nm1) / (nodes * nodes - 1.0)
        else:
            dp = n_points * p_nm1
        nodes = nodes - p_n / dp
    nodes = np.sort(nodes)
    # symmetric families: enforce exact symmetry of the node set
    nodes = 0.5 * (nodes - nodes[::-1])
    # Christoffel form of the weights: 1 / sum_k phi_k(x)^2 / ||phi_k||^2
    tab = eval_table(family, n_points - 1, nodes)
    norms = np.array([norm_sq(family, k) for k in range(n_points)])
    weights = 1.0 / np.sum(tab * tab / norms, axis=-1)
    weights = 0.5 * (weights + weights[::-1])
    weights /= weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_rule(family: Family, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule for the probability weight of ``family``.

    Exact for polynomials of degree ``2 * n_points - 1``; weights sum to one.
    Nodes come from the Jacobi matrix of the recurrence (Golub-Welsch).
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    return _gauss_rule_cached(Family(family), int(n_points))


@dataclass(frozen=True)
class Uniform:
    """Uniform input on ``[lower, upper]``, mapped affinely onto the Legendre domain."""

    lower: float
    upper: float

    family = Family.LEGENDRE

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or not self.lower < self.upper:
            raise ValueError(f"Uniform bounds must satisfy lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def shift(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def scale(self) -> float:
        return 0.5 * (self.upper - self.lower)

    def to_physical(self, zeta):
        return self.shift + self.scale * np.asarray(zeta, dtype=float)

    def from_physical(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def contains(self, x, rtol: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        slack = rtol * max(abs(self.lower), abs(self.upper), 1.0)
        return (x >= self.lower - slack) & (x <= self.upper + slack)

    def sample_standard(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=n)

    def to_dict(self) -> dict:
        return {"dist": "uniform", "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class Normal:
    """Gaussian input ``mean + std * Z`` with ``Z ~ N(0, 1)`` (Hermite ``He`` family)."""

    mean: float
    std: float

    family = Family.HERMITE

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"Normal std must be positive, got {self.std}")

    @property
    def shift(self) -> float:
        return self.mean

    @property
    def scale(self) -> float:
        return self.std

    def to_physical(self, zeta):
        return self.mean + self.std * np.asarray(zeta, dtype=float)

    def from_physical(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def contains(self, x, rtol: float = 0.0) -> np.ndarray:
        return np.isfinite(np.asarray(x, dtype=float))

    def sample_standard(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal(n)

    def to_dict(self) -> dict:
        return {"dist": "normal", "mean": self.mean, "std": self.std}


InputDist = Uniform | Normal


def dist_from_dict(d: dict) -> InputDist:
    kind = d.get("dist", "uniform")
    if kind == "uniform":
        return Uniform(float(d["lower"]), float(d["upper"]))
    if kind == "normal":
        return Normal(float(d["mean"]), float(d["std"]))
    raise ValueError(f"unknown distribution {kind!r} (expected 'uniform' or 'normal')")
