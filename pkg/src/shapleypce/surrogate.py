"""Polynomial chaos surrogates of scalar models: fitting, evaluation, moments, JSON I/O."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import PceBasis
from .orthopoly import InputDist, dist_from_dict, gauss_rule

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_MAX_EVALS = 10**7


class DomainError(ValueError):
    """Input outside the support of a bounded input distribution."""


class IllConditionedError(ArithmeticError):
    """Regression design matrix is rank deficient."""


class BudgetExceededError(ValueError):
    pass


@dataclass(frozen=True)
class ModelFunction:
    """A deterministic scalar model of ``dims`` physical inputs.

    ``func`` receives an ``(n, dims)`` array and returns ``n`` outputs.
    """

    dims: int
    func: Callable[[np.ndarray], np.ndarray]
    name: str = "model"

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dims:
            raise ValueError(f"{self.name} expects {self.dims} inputs, got {x.shape[1]}")
        return np.asarray(self.func(x), dtype=float).reshape(x.shape[0])


class PceSurrogate:
    """Coefficients over a :class:`PceBasis`; mean is the constant coefficient."""

    def __init__(self, basis: PceBasis, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (len(basis),):
            raise ValueError(f"expected {len(basis)} coefficients, got shape {coeffs.shape}")
        coeffs.setflags(write=False)
        self.basis = basis
        self.coeffs = coeffs

    def __repr__(self) -> str:
        return f"PceSurrogate({self.basis!r}, mean={self.mean():.6g}, variance={self.variance():.6g})"

    def mean(self) -> float:
        return float(self.coeffs[0])

    def variance(self) -> float:
        return float(np.sum(self.coeffs[1:] ** 2 * self.basis.norms[1:]))

    def partial_variances(self) -> np.ndarray:
        """``a_k^2 E[Phi_k^2]`` per basis term, zero for the constant term."""
        out = self.coeffs**2 * self.basis.norms
        out[0] = 0.0
        return out

    def evaluate_standard(self, zeta) -> np.ndarray:
        return self.basis.design_matrix(zeta) @ self.coeffs

    def evaluate(self, x):
        """Surrogate value at physical-space point(s) ``x``.

        Accepts one point of length M or an ``(n, M)`` array.  Points outside a
        bounded input's support raise :class:`DomainError`.
        """
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        arr = np.atleast_2d(arr)
        for k, d in enumerate(self.basis.dists):
            bad = ~d.contains(arr[:, k])
            if np.any(bad):
                raise DomainError(
                    f"input {k} value {arr[bad, k][0]!r} lies outside the support of {d}"
                )
        y = self.evaluate_standard(self.basis.to_standard(arr))
        return float(y[0]) if single else y

    def sample_outputs(self, n: int, seed: int) -> np.ndarray:
        """Surrogate outputs at ``n`` i.i.d. input draws; reproducible per seed."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        zeta = self.basis.sample_standard(rng, n)
        out = np.empty(n)
        chunk = 200_000
        for lo in range(0, n, chunk):
            out[lo:lo + chunk] = self.evaluate_standard(zeta[lo:lo + chunk])
        return out

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "dims": self.basis.dims,
            "degree": self.basis.degree,
            "families": [d.family.value for d in self.basis.dists],
            "bounds": [d.to_dict() for d in self.basis.dists],
            "indices": [list(alpha) for alpha in self.basis.indices],
            "coeffs": [float(c) for c in self.coeffs],
        }

    def to_json(self, **kw) -> str:
        # json emits repr() floats: shortest round-trip form, never more than 17 significant digits
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc: dict) -> "PceSurrogate":
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported surrogate document version {doc.get('version')!r}")
        dists = [dist_from_dict(b) for b in doc["bounds"]]
        fams = [d.family.value for d in dists]
        if fams != list(doc["families"]):
            raise ValueError(f"families {doc['families']} disagree with bounds {fams}")
        if len(dists) != doc["dims"]:
            raise ValueError("dims does not match the number of inputs")
        basis = PceBasis(dists, doc["degree"], indices=[tuple(a) for a in doc["indices"]])
        return cls(basis, doc["coeffs"])

    @classmethod
    def from_json(cls, text: str) -> "PceSurrogate":
        return cls.from_dict(json.loads(text))


def tensor_grid(dists: Sequence[InputDist], n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss grid in standard coordinates with product weights (sum to 1)."""
    rules = [gauss_rule(d.family, n_points) for d in dists]
    nodes = np.array(list(itertools.product(*[r[0] for r in rules])))
    weights = np.prod(np.array(list(itertools.product(*[r[1] for r in rules]))), axis=1)
    return nodes, weights


def fit_projection(model: Callable, basis: PceBasis, quad_points: int | None = None,
                   max_evals: int = DEFAULT_MAX_EVALS) -> PceSurrogate:
    """Spectral projection ``a_k = E[f Phi_k] / E[Phi_k^2]`` by tensor Gauss quadrature.

    ``quad_points`` defaults to ``degree + 6`` points per dimension; transcendental
    models such as Ishigami need the extra points for the printed digits to settle.
    """
    if quad_points is None:
        quad_points = basis.degree + 6
    if quad_points < basis.degree + 1:
        raise ValueError(f"need at least degree+1 = {basis.degree + 1} points per dimension")
    n_evals = quad_points**basis.dims
    if n_evals > max_evals:
        raise BudgetExceededError(
            f"{quad_points}^{basis.dims} = {n_evals} model evaluations exceed the budget of {max_evals}"
        )
    zeta, w = tensor_grid(basis.dists, quad_points)
    y = np.asarray(model(basis.to_physical(zeta)), dtype=float).reshape(-1)
    psi = basis.design_matrix(zeta)
    coeffs = psi.T @ (w * y) / basis.norms
    return PceSurrogate(basis, coeffs)


def fit_regression(x, y, basis: PceBasis, oversampling: float = 2.0,
                   rcond: float = 1e-10) -> PceSurrogate:
    """Least-squares fit of the coefficients to physical-space samples ``(x, y)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must have the same number of samples")
    need = int(np.ceil(oversampling * len(basis)))
    if x.shape[0] < need:
        raise ValueError(f"{x.shape[0]} samples given, at least {need} required for {len(basis)} terms")
    psi = basis.design_matrix(basis.to_standard(x))
    # column scaling keeps the singular values comparable across degrees
    scale = np.sqrt(basis.norms)
    u, s, vt = np.linalg.svd(psi / scale, full_matrices=False)
    deficient = s < rcond * s[0]
    if np.any(deficient):
        dirs = []
        for v in vt[deficient]:
            dirs.append(basis.indices[int(np.argmax(np.abs(v)))])
        raise IllConditionedError(
            f"design matrix is rank deficient ({int(deficient.sum())} directions); "
            f"dominant basis terms of the null space: {dirs}"
        )
    coeffs = (vt.T @ ((u.T @ y) / s)) / scale
    return PceSurrogate(basis, coeffs)
