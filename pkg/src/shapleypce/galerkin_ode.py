"""Intrusive Galerkin expansion of ODEs with uncertain parameters.

Right-hand sides are sums of terms ``scale * coef * factor`` where ``coef`` is
either 1 or an uncertain parameter ``theta = shift + scale_p * zeta_p``, and the
factor is 1, a state, a product of two states, or (with ``coef == 1``) a
deterministic exogenous signal of time.  Substituting PC series for the states
and projecting onto each basis function gives ODEs for the coefficients; the
projections need ``E[Phi_a Phi_b Phi_c]``, ``E[zeta_p Phi_a Phi_b Phi_c]`` and
``E[zeta_p Phi_a Phi_b]``, all of which factor over the input dimensions.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .basis import PceBasis, Subset, all_subsets
from .orthopoly import InputDist, eval_table, gauss_rule, norm_sq
from .sensitivity import (
    VARIANCE_FLOOR,
    rank_variables,
)
from .surrogate import PceSurrogate

log = logging.getLogger(__name__)

DROP_TOL = 1e-14
BLOWUP = 1e12


class StructuralError(ValueError):
    """Model is outside the affine-parameter, bilinear-state term language."""


class BlowUpError(ArithmeticError):
    def __init__(self, t: float, value: float):
        super().__init__(f"integration blew up at t={t:.6g} (|coefficient| = {value:.3e})")
        self.t = t


@dataclass(frozen=True)
class Term:
    """One additive RHS contribution ``scale * [param] * factors[0] * factors[1]`` or ``scale * signal(t)``."""

    state: str
    scale: float = 1.0
    param: str | None = None
    factors: tuple[str, ...] = ()
    signal: str | None = None


@dataclass(frozen=True)
class StochasticOdeModel:
    states: tuple[str, ...]
    params: Mapping[str, InputDist]
    terms: tuple[Term, ...]
    initial: Mapping[str, float | str]
    signals: Mapping[str, Callable[[float], float]] = field(default_factory=dict)
    name: str = "ode"

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "initial", dict(self.initial))
        self.validate()

    @property
    def param_names(self) -> list[str]:
        return list(self.params)

    @property
    def dists(self) -> list[InputDist]:
        return list(self.params.values())

    def validate(self):
        states = set(self.states)
        if len(states) != len(self.states):
            raise StructuralError("duplicate state names")
        for t in self.terms:
            if t.state not in states:
                raise StructuralError(f"term targets unknown state {t.state!r}")
            if t.param is not None and t.param not in self.params:
                raise StructuralError(f"term references unknown parameter {t.param!r}")
            if len(t.factors) > 2:
                raise StructuralError(
                    f"term {t} is a product of {len(t.factors)} states; at most bilinear terms are supported"
                )
            for f in t.factors:
                if f not in states:
                    raise StructuralError(f"term references unknown state {f!r}")
            if t.signal is not None:
                if t.signal not in self.signals:
                    raise StructuralError(f"term references unknown signal {t.signal!r}")
                if t.param is not None or t.factors:
                    raise StructuralError("exogenous signals may only be scaled by constants")
        for s in self.states:
            v = self.initial.get(s)
            if v is None:
                raise StructuralError(f"missing initial condition for state {s!r}")
            if isinstance(v, str) and v not in self.params:
                raise StructuralError(f"initial condition of {s!r} references unknown parameter {v!r}")

    def rhs(self, t: float, y: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Deterministic RHS for a batch: ``y`` is ``(n, states)``, ``theta`` is ``(n, params)``."""
        pidx = {p: k for k, p in enumerate(self.params)}
        sidx = {s: k for k, s in enumerate(self.states)}
        out = np.zeros_like(y)
        for term in self.terms:
            if term.signal is not None:
                out[:, sidx[term.state]] += term.scale * self.signals[term.signal](t)
                continue
            val = np.full(y.shape[0], term.scale)
            if term.param is not None:
                val = val * theta[:, pidx[term.param]]
            for f in term.factors:
                val = val * y[:, sidx[f]]
            out[:, sidx[term.state]] += val
        return out

    def initial_state(self, theta: np.ndarray) -> np.ndarray:
        pidx = {p: k for k, p in enumerate(self.params)}
        y0 = np.empty((theta.shape[0], len(self.states)))
        for k, s in enumerate(self.states):
            v = self.initial[s]
            y0[:, k] = theta[:, pidx[v]] if isinstance(v, str) else float(v)
        return y0


def _sym3(tab: np.ndarray) -> np.ndarray:
    # fill every permutation from the sorted-index entry so the table is exactly symmetric
    n = tab.shape[0]
    out = np.empty_like(tab)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                a, b, c = sorted((i, j, k))
                out[i, j, k] = tab[a, b, c]
    return out


def _univariate_tables(dist: InputDist, degree: int):
    fam = dist.family
    n_pts = (3 * degree + 3) // 2 + 1
    x, w = gauss_rule(fam, n_pts)
    phi = eval_table(fam, degree, x)
    norms = np.array([norm_sq(fam, k) for k in range(degree + 1)])
    scale3 = np.sqrt(np.einsum("i,j,k->ijk", norms, norms, norms))
    e3 = np.einsum("q,qi,qj,qk->ijk", w, phi, phi, phi)
    e4 = np.einsum("q,q,qi,qj,qk->ijk", w, x, phi, phi, phi)
    e2z = np.einsum("q,q,qi,qj->ij", w, x, phi, phi)
    # quadrature round-off on structurally zero entries
    e3[np.abs(e3) < 1e-13 * scale3] = 0.0
    e4[np.abs(e4) < 1e-13 * scale3] = 0.0
    e2z[np.abs(e2z) < 1e-13 * np.sqrt(np.outer(norms, norms))] = 0.0
    e2z = 0.5 * (e2z + e2z.T)
    return _sym3(e3), _sym3(e4), e2z


@dataclass(frozen=True)
class SparseTensor3:
    """COO storage of a 3-index tensor over basis positions."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    values: np.ndarray
    size: int

    @classmethod
    def from_dense(cls, dense: np.ndarray, tol: float = DROP_TOL) -> "SparseTensor3":
        a, b, c = np.nonzero(np.abs(dense) >= tol)
        return cls(a, b, c, dense[a, b, c], dense.shape[0])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.size,) * 3)
        out[self.a, self.b, self.c] = self.values
        return out

    def __len__(self) -> int:
        return len(self.values)

    def get(self, a: int, b: int, c: int) -> float:
        hit = (self.a == a) & (self.b == b) & (self.c == c)
        return float(self.values[hit][0]) if np.any(hit) else 0.0


@dataclass(frozen=True)
class GalerkinTensors:
    basis: PceBasis
    triple: SparseTensor3
    quad_weighted: tuple[SparseTensor3, ...]
    pair_weighted: tuple[np.ndarray, ...]
    first_moment: tuple[np.ndarray, ...]

    @property
    def norms(self) -> np.ndarray:
        return self.basis.norms


def build_tensors(basis: PceBasis) -> GalerkinTensors:
    """Triple products and their ``zeta_p``-weighted variants, factorized over dimensions."""
    tabs = [_univariate_tables(d, basis.degree) for d in basis.dists]
    A = basis.multi
    n, m = len(basis), basis.dims
    ia, ib, ic = (np.arange(n)[:, None, None], np.arange(n)[None, :, None], np.arange(n)[None, None, :])
    factors3 = [tabs[d][0][A[ia, d], A[ib, d], A[ic, d]] for d in range(m)]
    triple = np.prod(factors3, axis=0) if m > 1 else factors3[0].copy()
    quad = []
    pair = []
    first = []
    # E[Phi_a Phi_b] factor for dimensions other than p
    delta = [(A[:, None, d] == A[None, :, d]) * np.array([norm_sq(basis.dists[d].family, int(k)) for k in A[:, d]])[:, None]
             for d in range(m)]
    for p in range(m):
        f = list(factors3)
        f[p] = tabs[p][1][A[ia, p], A[ib, p], A[ic, p]]
        quad.append(SparseTensor3.from_dense(np.prod(f, axis=0)))
        g = [delta[d] for d in range(m) if d != p] + [tabs[p][2][A[:, None, p], A[None, :, p]]]
        pw = np.prod(g, axis=0)
        pw[np.abs(pw) < DROP_TOL] = 0.0
        pair.append(pw)
        first.append(pw[0].copy())
    return GalerkinTensors(basis, SparseTensor3.from_dense(triple), tuple(quad), tuple(pair), tuple(first))


@dataclass(frozen=True)
class _Bilinear:
    target: int
    left: int
    right: int
    tensor: SparseTensor3  # already scaled and divided by norms of the test index


class ExpandedOdeSystem:
    """Coefficient ODEs ``da/dt = A a + bilinear(a) + c + signals(t)`` on a flattened state."""

    def __init__(self, model: StochasticOdeModel, basis: PceBasis, tensors: GalerkinTensors | None = None):
        if basis.dims != len(model.params):
            raise StructuralError(
                f"basis has {basis.dims} dimensions but the model has {len(model.params)} uncertain parameters"
            )
        for name, (d_model, d_basis) in zip(model.params, zip(model.dists, basis.dists)):
            if d_model != d_basis:
                raise StructuralError(f"basis input {d_basis} does not match parameter {name} ~ {d_model}")
        self.model = model
        self.basis = basis
        self.tensors = tensors if tensors is not None else build_tensors(basis)
        self.n = len(basis)
        self._assemble()

    @property
    def states(self) -> tuple[str, ...]:
        return self.model.states

    @property
    def size(self) -> int:
        return len(self.states) * self.n

    def _assemble(self):
        model, n, T = self.model, self.n, self.tensors
        norms = self.basis.norms
        sidx = {s: k for k, s in enumerate(model.states)}
        pidx = {p: k for k, p in enumerate(model.params)}
        S = len(model.states)
        lin = np.zeros((S * n, S * n))
        const = np.zeros(S * n)
        bil: list[_Bilinear] = []
        sig: list[tuple[int, float, Callable]] = []
        for term in model.terms:
            tgt = sidx[term.state]
            rows = slice(tgt * n, (tgt + 1) * n)
            if term.signal is not None:
                sig.append((tgt * n, term.scale, model.signals[term.signal]))
                continue
            if term.param is None:
                shift, slope, p = 1.0, 0.0, None
            else:
                p = pidx[term.param]
                dist = model.params[term.param]
                shift, slope = dist.shift, dist.scale
            c0, c1 = term.scale * shift, term.scale * slope
            if not term.factors:
                const[rows.start] += c0
                if p is not None:
                    const[rows] += c1 * T.first_moment[p] / norms
            elif len(term.factors) == 1:
                src = sidx[term.factors[0]]
                cols = slice(src * n, (src + 1) * n)
                block = c0 * np.eye(n)
                if p is not None:
                    # [w, b] = E[zeta_p Phi_b Phi_w] / E[Phi_w^2]
                    block = block + c1 * T.pair_weighted[p] / norms[:, None]
                lin[rows, cols] += block
            else:
                left, right = (sidx[f] for f in term.factors)
                parts = [(c0, T.triple)]
                if p is not None:
                    parts.append((c1, T.quad_weighted[p]))
                for coef, ten in parts:
                    if coef == 0.0:
                        continue
                    vals = coef * ten.values / norms[ten.c]
                    bil.append(_Bilinear(tgt, left, right, SparseTensor3(ten.a, ten.b, ten.c, vals, n)))
        self.linear = lin
        self.constant = const
        self.bilinear = tuple(bil)
        self.signal_terms = tuple(sig)

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        n = self.n
        out = self.linear @ y + self.constant
        for b in self.bilinear:
            ten = b.tensor
            left = y[b.left * n:(b.left + 1) * n]
            right = y[b.right * n:(b.right + 1) * n]
            contrib = np.bincount(ten.c, weights=ten.values * left[ten.a] * right[ten.b], minlength=n)
            out[b.target * n:(b.target + 1) * n] += contrib
        for slot, scale, fn in self.signal_terms:
            out[slot] += scale * fn(t)
        return out

    def initial_coefficients(self) -> np.ndarray:
        """Mean slot gets the deterministic value; an uncertain initial value puts its
        affine slope into the first-order slot of its own input dimension."""
        n = self.n
        y0 = np.zeros(self.size)
        pidx = {p: k for k, p in enumerate(self.model.params)}
        for k, s in enumerate(self.states):
            v = self.model.initial[s]
            if isinstance(v, str):
                dist = self.model.params[v]
                y0[k * n] = dist.shift
                e_p = tuple(1 if d == pidx[v] else 0 for d in range(self.basis.dims))
                if e_p in self.basis.position:
                    y0[k * n + self.basis.position[e_p]] = dist.scale
            else:
                y0[k * n] = float(v)
        return y0


def expand(model: StochasticOdeModel, basis: PceBasis) -> ExpandedOdeSystem:
    return ExpandedOdeSystem(model, basis)


def time_grid(t_end: float, dt: float, t0: float = 0.0) -> np.ndarray:
    if not dt > 0 or not t_end > t0:
        raise ValueError("need dt > 0 and t_end > t0")
    n_full = int(math.floor((t_end - t0) / dt + 1e-9))
    times = t0 + dt * np.arange(n_full + 1)
    if t_end - times[-1] > 1e-9 * max(1.0, abs(t_end)):
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


def rk4(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, times: np.ndarray,
        blowup: float = BLOWUP, record: bool = True, callback=None) -> np.ndarray | None:
    """Classic fixed-step RK4 over the given grid (last step may be shorter)."""
    y = np.array(y0, dtype=float)
    out = np.empty((len(times),) + y.shape) if record else None
    if record:
        out[0] = y
    if callback is not None:
        callback(0, y)
    for k in range(len(times) - 1):
        t, h = times[k], times[k + 1] - times[k]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        peak = float(np.max(np.abs(y))) if y.size else 0.0
        if not np.isfinite(peak) or peak > blowup:
            raise BlowUpError(float(times[k + 1]), peak)
        if record:
            out[k + 1] = y
        if callback is not None:
            callback(k + 1, y)
    return out


@dataclass(frozen=True)
class CoefficientTrajectory:
    times: np.ndarray
    coeffs: np.ndarray  # (n_times, n_states, n_C)
    states: tuple[str, ...]
    basis: PceBasis
    param_names: tuple[str, ...] = ()

    def state_index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise KeyError(f"unknown state {state!r}; have {self.states}") from None

    def coefficients(self, state: str) -> np.ndarray:
        return self.coeffs[:, self.state_index(state), :]

    def mean_series(self, state: str) -> np.ndarray:
        return self.coefficients(state)[:, 0].copy()

    def variance_series(self, state: str) -> np.ndarray:
        c = self.coefficients(state)
        return np.sum(c[:, 1:] ** 2 * self.basis.norms[1:], axis=1)

    def index_at(self, t: float) -> int:
        """Grid index closest to time ``t``."""
        return int(np.argmin(np.abs(self.times - t)))

    def surrogate_at(self, state: str, k: int) -> PceSurrogate:
        """Surrogate of ``state`` at grid index ``k`` (see :meth:`index_at`)."""
        return PceSurrogate(self.basis, self.coefficients(state)[k])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "state", "index", "coefficient"])
        labels = [" ".join(map(str, a)) for a in self.basis.indices]
        for k, t in enumerate(self.times):
            for s_i, s in enumerate(self.states):
                for j, lab in enumerate(labels):
                    w.writerow([repr(float(t)), s, lab, repr(float(self.coeffs[k, s_i, j]))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "times": self.times.tolist(),
            "states": list(self.states),
            "params": list(self.param_names),
            "indices": [list(a) for a in self.basis.indices],
            "coeffs": {s: self.coeffs[:, i, :].tolist() for i, s in enumerate(self.states)},
        })


def integrate(sys: ExpandedOdeSystem, t_end: float, dt: float) -> CoefficientTrajectory:
    times = time_grid(t_end, dt)
    out = rk4(sys.rhs, sys.initial_coefficients(), times)
    coeffs = out.reshape(len(times), len(sys.states), sys.n)
    return CoefficientTrajectory(times, coeffs, sys.states, sys.basis, tuple(sys.model.param_names))


def moments_at(traj: CoefficientTrajectory, state: str, t: float) -> tuple[float, float]:
    """Mean and variance at time ``t`` (coefficients linearly interpolated)."""
    times = traj.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError(f"t={t} outside the trajectory span [{times[0]}, {times[-1]}]")
    c = traj.coefficients(state)
    k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
    lam = (t - times[k]) / (times[k + 1] - times[k])
    lam = min(max(lam, 0.0), 1.0)
    a = (1 - lam) * c[k] + lam * c[k + 1]
    return float(a[0]), float(np.sum(a[1:] ** 2 * traj.basis.norms[1:]))


@dataclass(frozen=True)
class SensitivitySeries:
    """Per-time Sobol/Shapley metrics of one state; rows with ``valid == False`` had ~zero variance."""

    times: np.ndarray
    names: tuple[str, ...]
    subsets: tuple[Subset, ...]
    mean: np.ndarray
    variance: np.ndarray
    valid: np.ndarray
    sobol: np.ndarray  # (T, n_subsets)
    first: np.ndarray  # (T, M)
    total: np.ndarray
    shapley: np.ndarray

    def rankings(self, metric: str = "shapley") -> list[tuple[int, ...] | None]:
        vals = getattr(self, metric)
        return [rank_variables(v).order if ok else None for v, ok in zip(vals, self.valid)]

    def ties(self, metric: str = "shapley") -> list[tuple]:
        vals = getattr(self, metric)
        return [rank_variables(v).ties if ok else () for v, ok in zip(vals, self.valid)]

    def at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["t", "valid", "mean", "variance"]
        for name in self.names:
            header += [f"sobol[{name}]", f"total_sobol[{name}]", f"shapley[{name}]"]
        header += [f"sobol[{','.join(self.names[i] for i in u)}]" for u in self.subsets if len(u) > 1]
        header += ["rank_total_sobol", "rank_shapley"]
        w.writerow(header)
        rt, rs = self.rankings("total"), self.rankings("shapley")
        multi = [j for j, u in enumerate(self.subsets) if len(u) > 1]
        for k, t in enumerate(self.times):
            row = [repr(float(t)), int(self.valid[k]), repr(float(self.mean[k])), repr(float(self.variance[k]))]
            for i in range(len(self.names)):
                row += [_cell(self.first[k, i]), _cell(self.total[k, i]), _cell(self.shapley[k, i])]
            row += [_cell(self.sobol[k, j]) for j in multi]
            row += [_rank_cell(rt[k], self.names), _rank_cell(rs[k], self.names)]
            w.writerow(row)
        return buf.getvalue()

    def band_csv(self) -> str:
        """First-order / Shapley / total per variable: the sandwich bands."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "variable", "sobol", "shapley", "total_sobol"])
        for k, t in enumerate(self.times):
            for i, name in enumerate(self.names):
                w.writerow([repr(float(t)), name, _cell(self.first[k, i]), _cell(self.shapley[k, i]),
                            _cell(self.total[k, i])])
        return buf.getvalue()

    def rank_csv(self) -> str:
        """Rank position (1 = most important) of every variable under both metrics."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "variable", "rank_total_sobol", "rank_shapley", "tied_total_sobol", "tied_shapley"])
        rt, rs = self.rankings("total"), self.rankings("shapley")
        tt, ts = self.ties("total"), self.ties("shapley")
        for k, t in enumerate(self.times):
            for i, name in enumerate(self.names):
                pos_t = "" if rt[k] is None else rt[k].index(i) + 1
                pos_s = "" if rs[k] is None else rs[k].index(i) + 1
                w.writerow([repr(float(t)), name, pos_t, pos_s,
                            int(any(i in g for g in tt[k])), int(any(i in g for g in ts[k]))])
        return buf.getvalue()


def _cell(v) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


def _rank_cell(order, names) -> str:
    return "" if order is None else ">".join(names[i] for i in order)


def sensitivity_series(traj: CoefficientTrajectory, state: str, stride: int = 1) -> SensitivitySeries:
    """Sobol, worths and Shapley at every ``stride``-th time of the trajectory."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ks = np.arange(0, len(traj.times), stride)
    m = traj.basis.dims
    subsets = tuple(all_subsets(m))
    names = traj.param_names or tuple(f"x{i + 1}" for i in range(m))
    T = len(ks)
    sobol = np.full((T, len(subsets)), np.nan)
    first = np.full((T, m), np.nan)
    total = np.full((T, m), np.nan)
    shap = np.full((T, m), np.nan)
    valid = np.zeros(T, dtype=bool)
    mean = np.empty(T)
    var = np.empty(T)
    # subset-membership operators shared by every time step: same mapping as
    # sobol_from_pce -> worths_from_sobol -> shapley_from_worths, vectorized over time
    groups = traj.basis.subset_members
    member = np.zeros((len(traj.basis), len(subsets)))
    for j, u in enumerate(subsets):
        member[groups[u], j] = 1.0
    contains = np.array([[1.0 if i in u else 0.0 for i in range(m)] for u in subsets])
    single = [subsets.index((i,)) for i in range(m)]
    share = contains / np.array([len(u) for u in subsets])[:, None]
    c = traj.coefficients(state)[ks]
    parts = c**2 * traj.basis.norms
    parts[:, 0] = 0.0
    mean[:] = c[:, 0]
    var[:] = parts.sum(axis=1)
    valid[:] = var > VARIANCE_FLOOR
    sob = parts[valid] @ member / var[valid, None]
    sobol[valid] = sob
    first[valid] = sob[:, single]
    total[valid] = sob @ contains
    shap[valid] = sob @ share
    if not valid.all():
        log.info("%d of %d times had variance below %.0e; indices left null", (~valid).sum(), T, VARIANCE_FLOOR)
    return SensitivitySeries(traj.times[ks], tuple(names), subsets, mean, var, valid, sobol, first, total, shap)


@dataclass(frozen=True)
class McBaseline:
    times: np.ndarray
    states: tuple[str, ...]
    mean: np.ndarray      # (T, S)
    variance: np.ndarray  # (T, S)
    n: int
    snapshots: dict = field(default_factory=dict)  # time index -> (n, S) states
    zeta: np.ndarray | None = None

    def series(self, state: str) -> tuple[np.ndarray, np.ndarray]:
        i = self.states.index(state)
        return self.mean[:, i], self.variance[:, i]


def solve_ensemble(model: StochasticOdeModel, theta: np.ndarray, t_end: float, dt: float,
                   snapshot_times: Sequence[float] = ()) -> McBaseline:
    """Deterministic RK4 solves for a batch of physical parameter vectors."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    times = time_grid(t_end, dt)
    T, S = len(times), len(model.states)
    mean = np.empty((T, S))
    var = np.empty((T, S))
    want = {int(np.argmin(np.abs(times - t))) for t in snapshot_times}
    snaps = {}

    def keep(k, y):
        mean[k] = y.mean(axis=0)
        var[k] = y.var(axis=0, ddof=1) if y.shape[0] > 1 else 0.0
        if k in want:
            snaps[k] = y.copy()

    rk4(lambda t, y: model.rhs(t, y, theta), model.initial_state(theta), times, record=False, callback=keep)
    return McBaseline(times, model.states, mean, var, theta.shape[0], snaps)


def mc_baseline(model: StochasticOdeModel, n: int, t_end: float, dt: float, seed: int,
                zeta: np.ndarray | None = None, snapshot_times: Sequence[float] = ()) -> McBaseline:
    """Ensemble mean/variance per time from ``n`` parameter draws (or the given standard draws)."""
    if zeta is None:
        if n < 100:
            raise ValueError("mc_baseline needs n >= 100 random draws (pass zeta for explicit points)")
        rng = np.random.default_rng(seed)
        zeta = np.column_stack([d.sample_standard(rng, n) for d in model.dists])
    zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
    theta = np.column_stack([d.to_physical(zeta[:, k]) for k, d in enumerate(model.dists)])
    res = solve_ensemble(model, theta, t_end, dt, snapshot_times)
    return McBaseline(res.times, res.states, res.mean, res.variance, res.n, res.snapshots, zeta)


@dataclass(frozen=True)
class PeakHeatmap:
    counts: np.ndarray  # (time bins, magnitude bins)
    time_edges: np.ndarray
    magnitude_edges: np.ndarray
    n_samples: int
    n_boundary: int

    def modal_bin(self) -> tuple[float, float]:
        i, j = np.unravel_index(int(np.argmax(self.counts)), self.counts.shape)
        return (0.5 * (self.time_edges[i] + self.time_edges[i + 1]),
                0.5 * (self.magnitude_edges[j] + self.magnitude_edges[j + 1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        mids = 0.5 * (self.magnitude_edges[:-1] + self.magnitude_edges[1:])
        w.writerow(["t_lo", "t_hi"] + [repr(float(m)) for m in mids])
        for i in range(self.counts.shape[0]):
            w.writerow([repr(float(self.time_edges[i])), repr(float(self.time_edges[i + 1]))]
                       + [int(c) for c in self.counts[i]])
        return buf.getvalue()


def peak_heatmap(traj: CoefficientTrajectory, state: str, n_samples: int, n_bins=(30, 30), seed: int = 0,
                 chunk: int = 4000) -> PeakHeatmap:
    """2-D histogram of (peak time, peak value) of surrogate realizations of ``state``."""
    rng = np.random.default_rng(seed)
    zeta = traj.basis.sample_standard(rng, n_samples)
    coeffs = traj.coefficients(state)  # (T, n_C)
    t_peak = np.empty(n_samples)
    v_peak = np.empty(n_samples)
    boundary = np.zeros(n_samples, dtype=bool)
    last = len(traj.times) - 1
    for lo in range(0, n_samples, chunk):
        psi = traj.basis.design_matrix(zeta[lo:lo + chunk])
        paths = psi @ coeffs.T  # (chunk, T)
        k = np.argmax(paths, axis=1)
        t_peak[lo:lo + chunk] = traj.times[k]
        v_peak[lo:lo + chunk] = paths[np.arange(len(k)), k]
        boundary[lo:lo + chunk] = (k == 0) | (k == last)
    if boundary.any():
        log.warning("%d of %d realizations peak at the boundary of the time window", boundary.sum(), n_samples)
    t_edges = np.linspace(traj.times[0], traj.times[-1], n_bins[0] + 1)
    lo_v, hi_v = float(v_peak.min()), float(v_peak.max())
    if hi_v <= lo_v:
        hi_v = lo_v + 1.0
    m_edges = np.linspace(lo_v, hi_v, n_bins[1] + 1)
    counts = np.histogram2d(t_peak, v_peak, bins=[t_edges, m_edges])[0].astype(np.int64)
    return PeakHeatmap(counts, t_edges, m_edges, n_samples, int(boundary.sum()))
