"""Total-degree multi-index sets and the tensor-product multivariate basis."""
from __future__ import annotations

import enum
import itertools
import math
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .orthopoly import InputDist, Uniform, eval_table, norm_sq

DEFAULT_MAX_TERMS = 10**6

MultiIndex = tuple[int, ...]
# sorted tuple of 0-based variable positions
Subset = tuple[int, ...]


class BasisTooLargeError(ValueError):
    pass


class Support(enum.Enum):
    EXACT = "exact"
    PROPER_SUBSET = "proper_subset"
    OUTSIDE = "outside"


def n_terms(m: int, p: int) -> int:
    """Number of multi-indices of dimension ``m`` with total degree ``<= p``."""
    return math.comb(m + p, p)


def _compositions(total: int, m: int):
    # all m-tuples of non-negative ints summing to total, in descending lex order
    if m == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, m - 1):
            yield (first,) + rest


def enumerate_indices(m: int, p: int, max_terms: int = DEFAULT_MAX_TERMS) -> list[MultiIndex]:
    """All multi-indices with total degree ``<= p`` in graded order.

    Degrees increase block by block starting from the all-zero index; inside a
    block the order is descending lexicographic, e.g. ``(2,0), (1,1), (0,2)``.
    """
    if m < 1:
        raise ValueError("dimension must be >= 1")
    if p < 0:
        raise ValueError("degree must be >= 0")
    count = n_terms(m, p)
    if count > max_terms:
        raise BasisTooLargeError(
            f"basis with M={m}, P={p} has {count} terms, above the cap of {max_terms}"
        )
    return [alpha for total in range(p + 1) for alpha in _compositions(total, m)]


def support_of(alpha: Sequence[int]) -> Subset:
    return tuple(k for k, a in enumerate(alpha) if a > 0)


def classify_index(alpha: Sequence[int], u: Iterable[int]) -> Support:
    """Relation between the support of ``alpha`` and the variable subset ``u``."""
    supp = set(support_of(alpha))
    u = set(u)
    if supp == u:
        return Support.EXACT
    if supp < u:
        return Support.PROPER_SUBSET
    return Support.OUTSIDE


def all_subsets(m: int, include_empty: bool = False) -> list[Subset]:
    """Subsets of ``range(m)`` ordered by size, then lexicographically."""
    start = 0 if include_empty else 1
    return [c for r in range(start, m + 1) for c in itertools.combinations(range(m), r)]


class PceBasis:
    """Tensor-product orthogonal basis of total degree ``degree`` over independent inputs."""

    def __init__(self, dists: Sequence[InputDist], degree: int, max_terms: int = DEFAULT_MAX_TERMS,
                 indices: Sequence[MultiIndex] | None = None):
        if not dists:
            raise ValueError("at least one input distribution is required")
        self.dists = tuple(dists)
        self.degree = int(degree)
        if indices is None:
            indices = enumerate_indices(len(self.dists), self.degree, max_terms)
        else:
            indices = [tuple(int(a) for a in alpha) for alpha in indices]
            self._check_indices(indices)
        self.indices: list[MultiIndex] = list(indices)
        self.multi = np.array(self.indices, dtype=int).reshape(len(self.indices), self.dims)
        self.norms = np.array([
            math.prod(norm_sq(d.family, int(a)) for d, a in zip(self.dists, alpha))
            for alpha in self.indices
        ])
        self.multi.setflags(write=False)
        self.norms.setflags(write=False)

    def _check_indices(self, indices):
        m = len(self.dists)
        if not indices or any(a != 0 for a in indices[0]):
            raise ValueError("the first multi-index must be the all-zero tuple")
        if len(set(indices)) != len(indices):
            raise ValueError("duplicate multi-indices")
        for alpha in indices:
            if len(alpha) != m or min(alpha) < 0 or sum(alpha) > self.degree:
                raise ValueError(f"multi-index {alpha} is not admissible for M={m}, P={self.degree}")

    @classmethod
    def uniform(cls, bounds: Sequence[tuple[float, float]], degree: int, **kw) -> "PceBasis":
        return cls([Uniform(lo, hi) for lo, hi in bounds], degree, **kw)

    @property
    def dims(self) -> int:
        return len(self.dists)

    def __len__(self) -> int:
        return len(self.indices)

    def __repr__(self) -> str:
        fams = ",".join(d.family.value for d in self.dists)
        return f"PceBasis(M={self.dims}, P={self.degree}, n_C={len(self)}, families=[{fams}])"

    @cached_property
    def position(self) -> dict[MultiIndex, int]:
        return {alpha: k for k, alpha in enumerate(self.indices)}

    @cached_property
    def supports(self) -> list[Subset]:
        return [support_of(alpha) for alpha in self.indices]

    @cached_property
    def subset_members(self) -> dict[Subset, np.ndarray]:
        """Positions of the indices whose support is exactly each subset (empty subset included)."""
        groups: dict[Subset, list[int]] = {u: [] for u in all_subsets(self.dims, include_empty=True)}
        for k, u in enumerate(self.supports):
            groups[u].append(k)
        return {u: np.array(v, dtype=int) for u, v in groups.items()}

    def to_standard(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.column_stack([d.from_physical(x[:, k]) for k, d in enumerate(self.dists)])

    def to_physical(self, zeta) -> np.ndarray:
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        return np.column_stack([d.to_physical(zeta[:, k]) for k, d in enumerate(self.dists)])

    def design_matrix(self, zeta) -> np.ndarray:
        """Rows are points in standard coordinates, columns the basis functions."""
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        if zeta.shape[1] != self.dims:
            raise ValueError(f"expected points with {self.dims} coordinates, got {zeta.shape[1]}")
        out = np.ones((zeta.shape[0], len(self)))
        for k, d in enumerate(self.dists):
            tab = eval_table(d.family, self.degree, zeta[:, k])
            out *= tab[:, self.multi[:, k]]
        return out

    def eval_multivariate(self, alpha: Sequence[int], zeta: Sequence[float]) -> float:
        if len(alpha) != self.dims or len(zeta) != self.dims:
            raise ValueError("alpha and zeta must both have length M")
        val = 1.0
        for d, a, z in zip(self.dists, alpha, zeta):
            val *= float(eval_table(d.family, int(a), z)[..., int(a)])
        return val

    def sample_standard(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.column_stack([d.sample_standard(rng, n) for d in self.dists])
