"""Variance-based and moment-independent sensitivity metrics.

Sobol indices of every order come algebraically from PCE coefficients, the
coalition worths ``c(u) = Var(E[Y | X_u]) / Var(Y)`` from sums of Sobol indices,
and Shapley effects from either the worths (marginal-contribution form) or the
Sobol indices directly (each interaction shared equally among its members).
Monte Carlo pick-and-freeze Sobol and histogram Borgonovo deltas work from raw
model evaluations and serve as independent checks.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .basis import Subset, all_subsets
from .orthopoly import InputDist
from .surrogate import PceSurrogate

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12


class ZeroVarianceError(ArithmeticError):
    pass


class IncompleteWorthsError(ValueError):
    pass


class TooFewSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class SobolDecomposition:
    by_subset: dict[Subset, float]
    total: np.ndarray
    variance: float

    @property
    def dims(self) -> int:
        return len(self.total)

    @property
    def first(self) -> np.ndarray:
        return np.array([self.by_subset[(i,)] for i in range(self.dims)])

    def order(self, s: int) -> dict[Subset, float]:
        return {u: v for u, v in self.by_subset.items() if len(u) == s}


@dataclass(frozen=True)
class Ranking:
    order: tuple[int, ...]
    ties: tuple[tuple[int, ...], ...] = ()

    def labels(self, names: Sequence[str]) -> list[str]:
        return [names[i] for i in self.order]

    @property
    def one_based(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in self.order)


def sobol_from_pce(s: PceSurrogate) -> SobolDecomposition:
    """Sobol index of every nonempty subset from the surrogate coefficients."""
    var = s.variance()
    if not var > VARIANCE_FLOOR * max(1.0, s.mean() ** 2):
        raise ZeroVarianceError(f"surrogate variance {var:.3e} is too small for Sobol indices")
    parts = s.partial_variances()
    by_subset = {}
    for u, members in s.basis.subset_members.items():
        if u:
            by_subset[u] = float(parts[members].sum() / var)
    return _decomposition(by_subset, s.basis.dims, var)


def _decomposition(by_subset: Mapping[Subset, float], m: int, var: float) -> SobolDecomposition:
    total = np.zeros(m)
    for u, v in by_subset.items():
        for i in u:
            total[i] += v
    return SobolDecomposition(dict(by_subset), total, var)


def decomposition_from_values(values: Mapping[Subset, float], m: int, variance: float = 1.0) -> SobolDecomposition:
    """Build a decomposition from explicit subset values; missing subsets count as zero."""
    by_subset = {u: float(values.get(u, 0.0)) for u in all_subsets(m)}
    return _decomposition(by_subset, m, variance)


def worths_from_sobol(d: SobolDecomposition) -> dict[Subset, float]:
    """``c(u)`` for every subset, including ``c(()) = 0``."""
    worths = {}
    for u in all_subsets(d.dims, include_empty=True):
        members = set(u)
        worths[u] = float(sum(v for w, v in d.by_subset.items() if set(w) <= members))
    return worths


def shapley_from_worths(worths: Mapping[Subset, float], m: int | None = None) -> np.ndarray:
    """Shapley effects from a complete worth table (marginal-contribution form)."""
    if m is None:
        m = max((max(u) + 1 for u in worths if u), default=0)
    missing = [u for u in all_subsets(m, include_empty=True) if u not in worths]
    if missing:
        raise IncompleteWorthsError(f"worth table is missing {len(missing)} subsets, e.g. {missing[:3]}")
    # |u|!(m-1-|u|)! as integers; differences converted exactly, one rounding at the end
    fact = [math.factorial(k) for k in range(m + 1)]
    out = np.zeros(m)
    for i in range(m):
        acc = Fraction(0)
        for u in all_subsets(m, include_empty=True):
            if i in u:
                continue
            with_i = tuple(sorted(u + (i,)))
            diff = Fraction(worths[with_i]) - Fraction(worths[u])
            acc += fact[len(u)] * fact[m - 1 - len(u)] * diff
        out[i] = float(acc / fact[m])
    return out


def shapley_from_sobol(d: SobolDecomposition) -> np.ndarray:
    """Shapley effects as ``sum over u containing i of S_u / |u|``."""
    out = [Fraction(0)] * d.dims
    for u, v in d.by_subset.items():
        share = Fraction(v) / len(u)
        for i in u:
            out[i] += share
    return np.array([float(x) for x in out])


def rank_variables(values, tol: float = 1e-9) -> Ranking:
    """Descending order; groups of values within ``tol`` of each other are reported as ties."""
    vals = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("cannot rank non-finite values")
    order = tuple(int(i) for i in np.argsort(-vals, kind="stable"))
    ties, group = [], [order[0]] if order else []
    for prev, cur in zip(order, order[1:]):
        if abs(vals[prev] - vals[cur]) <= tol:
            group.append(cur)
        else:
            if len(group) > 1:
                ties.append(tuple(group))
            group = [cur]
    if len(group) > 1:
        ties.append(tuple(group))
    return Ranking(order, tuple(ties))


@dataclass(frozen=True)
class PickFreezeResult:
    first: np.ndarray
    total: np.ndarray
    first_se: np.ndarray
    total_se: np.ndarray
    variance: float
    n: int


def _draw_physical(dists: Sequence[InputDist], rng: np.random.Generator, n: int) -> np.ndarray:
    return np.column_stack([d.to_physical(d.sample_standard(rng, n)) for d in dists])


def mc_sobol_pick_freeze(model: Callable, dists: Sequence[InputDist], n: int, seed: int) -> PickFreezeResult:
    """Saltelli paired-matrix estimates of first-order and total Sobol indices.

    First order uses ``mean(f_B (f_ABi - f_A))`` and total the Jansen form
    ``mean((f_A - f_ABi)^2) / 2``, both divided by the pooled variance of
    ``f_A`` and ``f_B``.  Standard errors are those of the numerator sample means.
    """
    if n < 1000:
        raise ValueError("pick-and-freeze needs n >= 1000")
    rng = np.random.default_rng(seed)
    m = len(dists)
    a = _draw_physical(dists, rng, n)
    b = _draw_physical(dists, rng, n)
    # all matrices exist before any model call, so results do not depend on evaluation order
    ab = np.repeat(a[None, :, :], m, axis=0)
    for i in range(m):
        ab[i, :, i] = b[:, i]
    fa = np.asarray(model(a), dtype=float)
    fb = np.asarray(model(b), dtype=float)
    fab = np.asarray(model(ab.reshape(m * n, m)), dtype=float).reshape(m, n)
    var = float(np.var(np.concatenate([fa, fb])))
    if not var > 0:
        raise ZeroVarianceError("model output has zero variance")
    first_terms = fb[None, :] * (fab - fa[None, :])
    total_terms = 0.5 * (fa[None, :] - fab) ** 2
    first = first_terms.mean(axis=1) / var
    total = total_terms.mean(axis=1) / var
    first_se = first_terms.std(axis=1, ddof=1) / math.sqrt(n) / var
    total_se = total_terms.std(axis=1, ddof=1) / math.sqrt(n) / var
    if np.any(first < 0) or np.any(total < 0):
        warnings.warn("negative Monte Carlo Sobol estimate (reported unclipped)", RuntimeWarning, stacklevel=2)
    return PickFreezeResult(first, total, first_se, total_se, var, n)


DEFAULT_SLICES = 30
DEFAULT_OUT_BINS = 12
MIN_PER_SLICE = 500


def borgonovo_from_samples(x_i, y, n_slices: int = DEFAULT_SLICES, n_out_bins: int = DEFAULT_OUT_BINS,
                           min_per_slice: int = MIN_PER_SLICE) -> float:
    """Delta index of one input from paired samples ``(x_i, y)``.

    The input is cut into ``n_slices`` equal-probability slices.  Output
    densities (pooled and per slice) are histograms on one common grid of
    ``n_out_bins`` equal-probability bins of the pooled sample; the delta index
    is invariant under monotone maps of ``y``, so the choice of grid only
    trades resolution against sampling noise.  Returns half the slice-averaged
    L1 distance between the conditional and unconditional histograms.
    """
    x_i = np.asarray(x_i, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n_slices < 5:
        raise ValueError("n_slices must be >= 5")
    if n // n_slices < min_per_slice:
        raise TooFewSamplesError(
            f"{n} samples over {n_slices} slices leaves {n // n_slices} per slice (< {min_per_slice})"
        )
    edges = np.unique(np.quantile(y, np.linspace(0.0, 1.0, n_out_bins + 1)))
    edges[0], edges[-1] = -np.inf, np.inf
    if edges.size < 2:
        return 0.0
    p_y = np.histogram(y, bins=edges)[0] / n
    order = np.argsort(x_i, kind="stable")
    shifts = []
    for idx in np.array_split(order, n_slices):
        p_cond = np.histogram(y[idx], bins=edges)[0] / idx.size
        shifts.append(np.abs(p_y - p_cond).sum())
    return 0.5 * float(np.mean(shifts))


def borgonovo_delta(model: Callable, dists: Sequence[InputDist], i: int, n: int, seed: int,
                    n_slices: int = DEFAULT_SLICES, n_out_bins: int = DEFAULT_OUT_BINS) -> float:
    """Moment-independent delta of input ``i`` from ``n`` fresh model evaluations."""
    if n < 10_000:
        raise ValueError("borgonovo_delta needs n >= 10000")
    rng = np.random.default_rng(seed)
    x = _draw_physical(dists, rng, n)
    y = np.asarray(model(x), dtype=float)
    return borgonovo_from_samples(x[:, i], y, n_slices, n_out_bins)


def borgonovo_all(model: Callable, dists: Sequence[InputDist], n: int, seed: int,
                  n_slices: int = DEFAULT_SLICES, n_out_bins: int = DEFAULT_OUT_BINS) -> np.ndarray:
    """Deltas of every input from one shared sample of size ``n``."""
    if n < 10_000:
        raise ValueError("borgonovo needs n >= 10000")
    rng = np.random.default_rng(seed)
    x = _draw_physical(dists, rng, n)
    y = np.asarray(model(x), dtype=float)
    return np.array([borgonovo_from_samples(x[:, k], y, n_slices, n_out_bins) for k in range(len(dists))])


def subset_label(u: Subset, names: Sequence[str]) -> str:
    return ",".join(names[i] for i in u)


@dataclass
class SensitivityReport:
    """All metrics for one scalar output."""

    names: list[str]
    sobol: SobolDecomposition
    worths: dict[Subset, float]
    shapley: np.ndarray
    borgonovo: np.ndarray | None = None
    mean: float | None = None
    # optional published values keyed like the metrics, for side-by-side output
    reference: dict = field(default_factory=dict)

    @classmethod
    def from_surrogate(cls, s: PceSurrogate, names: Sequence[str], borgonovo=None,
                       reference: dict | None = None) -> "SensitivityReport":
        d = sobol_from_pce(s)
        w = worths_from_sobol(d)
        return cls(list(names), d, w, shapley_from_worths(w, d.dims), borgonovo, s.mean(), reference or {})

    def rankings(self) -> dict[str, Ranking]:
        out = {
            "first_sobol": rank_variables(self.sobol.first),
            "total_sobol": rank_variables(self.sobol.total),
            "shapley": rank_variables(self.shapley),
        }
        if self.borgonovo is not None:
            out["borgonovo"] = rank_variables(self.borgonovo)
        return out

    def to_dict(self) -> dict:
        names = self.names
        ref = self.reference
        out = {
            "variables": names,
            "mean": self.mean,
            "variance": self.sobol.variance,
            "sobol": [
                {"subset": subset_label(u, names), "sobol": v, **_ref(ref, "sobol", u)}
                for u, v in self.sobol.by_subset.items()
            ],
            "worths": [
                {"subset": subset_label(u, names), "worth": v, **_ref(ref, "worth", u)}
                for u, v in self.worths.items() if u
            ],
            "variables_table": self.variable_rows(),
            "rankings": {k: r.labels(names) for k, r in self.rankings().items()},
            "ties": {k: [[names[i] for i in t] for t in r.ties] for k, r in self.rankings().items() if r.ties},
        }
        return out

    def variable_rows(self) -> list[dict]:
        rows = []
        for i, name in enumerate(self.names):
            row = {
                "variable": name,
                "sobol": float(self.sobol.first[i]),
                "total_sobol": float(self.sobol.total[i]),
                "shapley": float(self.shapley[i]),
                "borgonovo": None if self.borgonovo is None else float(self.borgonovo[i]),
            }
            for metric in ("total_sobol", "shapley", "borgonovo"):
                row.update(_ref(self.reference, metric, i))
            rows.append(row)
        return rows

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def sobol_csv(self) -> str:
        has_ref = "sobol" in self.reference
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subset", "sobol"] + (["reference_sobol"] if has_ref else []))
        for u, v in self.sobol.by_subset.items():
            row = [subset_label(u, self.names), repr(float(v))]
            if has_ref:
                row.append(_fmt(self.reference["sobol"].get(u)))
            w.writerow(row)
        return buf.getvalue()

    def worths_csv(self) -> str:
        has_ref = "worth" in self.reference
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["subset", "worth"] + (["reference_worth"] if has_ref else []))
        for u, v in self.worths.items():
            if not u:
                continue
            row = [subset_label(u, self.names), repr(float(v))]
            if has_ref:
                row.append(_fmt(self.reference["worth"].get(u)))
            w.writerow(row)
        return buf.getvalue()

    def variables_csv(self) -> str:
        metrics = ["sobol", "total_sobol", "shapley", "borgonovo"]
        refs = [m for m in ("total_sobol", "shapley", "borgonovo") if m in self.reference]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variable"] + metrics + [f"reference_{m}" for m in refs])
        for row in self.variable_rows():
            w.writerow([row["variable"]] + [_fmt(row[m]) for m in metrics]
                       + [_fmt(row.get(f"reference_{m}")) for m in refs])
        return buf.getvalue()


def _ref(ref: dict, metric: str, key) -> dict:
    table = ref.get(metric)
    if table is None:
        return {}
    return {f"reference_{metric}": table.get(key)}


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))
