"""Benchmark models with their published reference values, plus a JSON model format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .galerkin_ode import StochasticOdeModel, Term
from .orthopoly import InputDist, Uniform, dist_from_dict
from .surrogate import ModelFunction


class MissingParameterError(ValueError):
    def __init__(self, model: str, missing):
        self.missing = list(missing)
        super().__init__(f"model {model!r} requires values for: {', '.join(self.missing)}")


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    kind: str  # "static" or "ode"
    names: tuple[str, ...]
    dists: tuple[InputDist, ...]
    model: ModelFunction | StochasticOdeModel
    # metric -> key -> value; Sobol/worth keys are 0-based subsets, per-variable metrics use the variable position
    references: dict[str, dict[Any, float]] = field(default_factory=dict)
    citations: dict[str, str] = field(default_factory=dict)
    defaults: dict[str, Any] = field(default_factory=dict)

    @property
    def dims(self) -> int:
        return len(self.dists)


def _ishigami(x, a=7.0, b=0.1):
    return np.sin(x[:, 0]) + a * np.sin(x[:, 1]) ** 2 + b * x[:, 2] ** 4 * np.sin(x[:, 0])


def ishigami(a: float = 7.0, b: float = 0.1) -> BenchmarkSpec:
    """Ishigami function on ``U(-pi, pi)^3``."""
    refs = {}
    cites = {}
    if (a, b) == (7.0, 0.1):
        refs = {
            "sobol": {(0,): 0.3139, (1,): 0.4424, (2,): 0.0, (0, 1): 0.0, (0, 2): 0.2437, (1, 2): 0.0,
                      (0, 1, 2): 0.0},
            "total_sobol": {0: 0.5576, 1: 0.4424, 2: 0.2437},
            "worth": {(0,): 0.3139, (1,): 0.4424, (2,): 0.0, (0, 1): 0.7563, (0, 2): 0.5576, (1, 2): 0.4424,
                      (0, 1, 2): 1.0},
            "shapley": {0: 0.4357, 1: 0.4424, 2: 0.1218},
            "borgonovo": {0: 0.2392, 1: 0.4222, 2: 0.1957},
        }
        cites = {"sobol": "published analytical Sobol indices", "total_sobol": "published analytical Sobol indices",
                 "worth": "published analytical worths", "shapley": "published analytical Shapley effects",
                 "borgonovo": "published Monte Carlo estimate, n=300000"}
    f = ModelFunction(3, lambda x: _ishigami(x, a, b), "ishigami")
    return BenchmarkSpec("ishigami", "static", ("x1", "x2", "x3"), (Uniform(-math.pi, math.pi),) * 3, f,
                         refs, cites, {"degree": 9})


def _quartic(x):
    return 1.9 * x[:, 0] ** 2 + 2 * x[:, 1] ** 2 + 1.05 * x[:, 2] * x[:, 0] ** 3 + 0.35 * x[:, 3]


def quartic() -> BenchmarkSpec:
    """Four-input polynomial ``1.9 x1^2 + 2 x2^2 + 1.05 x3 x1^3 + 0.35 x4`` on ``U(-1, 1)^4``."""
    sobol = {u: 0.0 for u in _subsets(4)}
    sobol.update({(0,): 0.4169, (1,): 0.4619, (3,): 0.0530, (0, 2): 0.0682})
    refs = {
        "sobol": sobol,
        "total_sobol": {0: 0.4851, 1: 0.4619, 2: 0.0682, 3: 0.0530},
        "worth": {(0,): 0.4169, (1,): 0.4619, (2,): 0.0, (3,): 0.0530, (0, 1): 0.8788, (0, 2): 0.4851,
                  (0, 3): 0.4699, (1, 2): 0.4619, (1, 3): 0.5149, (2, 3): 0.0530, (0, 1, 2): 0.9470,
                  (0, 1, 3): 0.9318, (0, 2, 3): 0.5381, (1, 2, 3): 0.5149, (0, 1, 2, 3): 1.0},
        "shapley": {0: 0.4510, 1: 0.4619, 2: 0.0341, 3: 0.0530},
        "borgonovo": {0: 0.2734, 1: 0.3309, 2: 0.0178, 3: 0.0800},
    }
    cites = {"sobol": "published analytical Sobol indices", "total_sobol": "published analytical Sobol indices",
             "worth": "published analytical worths", "shapley": "published analytical Shapley effects",
             "borgonovo": "published Monte Carlo estimate"}
    f = ModelFunction(4, _quartic, "quartic")
    return BenchmarkSpec("quartic", "static", ("x1", "x2", "x3", "x4"), (Uniform(-1.0, 1.0),) * 4, f,
                         refs, cites, {"degree": 4})


def _subsets(m):
    from .basis import all_subsets
    return all_subsets(m)


def seir() -> BenchmarkSpec:
    """SEIR epidemic with uncertain transmission, incubation and recovery rates (N = 1)."""
    params = {"beta": Uniform(2.5, 5.5), "sigma": Uniform(0.5, 1.5), "gamma": Uniform(0.5, 1.5)}
    terms = (
        Term("S", -1.0, "beta", ("S", "I")),
        Term("E", 1.0, "beta", ("S", "I")),
        Term("E", -1.0, "sigma", ("E",)),
        Term("I", 1.0, "sigma", ("E",)),
        Term("I", -1.0, "gamma", ("I",)),
        Term("R", 1.0, "gamma", ("I",)),
    )
    model = StochasticOdeModel(("S", "E", "I", "R"), params, terms,
                               {"S": 0.99, "E": 0.0, "I": 0.01, "R": 0.0}, name="seir")
    return BenchmarkSpec("seir", "ode", tuple(params), tuple(params.values()), model,
                         defaults={"degree": 4, "t_end": 15.0, "dt": 0.01, "output": "I"})


BERGMAN_REQUIRED = ("G_b", "I_b", "d", "p4")


def fisher_meal(amount: float = 28.98, t_meal: float = 15.0, decay: float | None = None) -> Callable[[float], float]:
    """Meal disturbance: 0 before ``t_meal``, then ``amount * exp(-decay (t - t_meal))``."""
    if decay is None:
        raise MissingParameterError("fisher_meal", ["d"])

    def meal(t: float) -> float:
        return 0.0 if t < t_meal else amount * math.exp(-decay * (t - t_meal))

    return meal


def insulin_bolus(cho_g: float = 45.0, carb_ratio: float = 18.477, volume: float = 12.0,
                  duration: float = 1.0) -> Callable[[float], float]:
    """Bolus input ``1000 * CHO / (CR * V_i)`` on ``0 < t < duration``, zero elsewhere."""
    level = 1000.0 * cho_g / (carb_ratio * volume)

    def bolus(t: float) -> float:
        return level if 0.0 < t < duration else 0.0

    return bolus


def bergman(G_b: float | None = None, I_b: float | None = None, d: float | None = None,
            p4: float | None = None, meal_amount: float = 28.98, t_meal: float = 15.0,
            I0: float = 15.3872) -> BenchmarkSpec:
    """Bergman minimal glucose-insulin model with Fisher meal and insulin bolus.

    The basal levels ``G_b`` and ``I_b``, the meal decay ``d`` and the insulin
    clearance ``p4`` have no built-in defaults and must be supplied.
    """
    given = {"G_b": G_b, "I_b": I_b, "d": d, "p4": p4}
    missing = [k for k in BERGMAN_REQUIRED if given[k] is None]
    if missing:
        raise MissingParameterError("bergman", missing)
    params = {
        "p1": Uniform(0.0201, 0.0373),
        "p2": Uniform(0.0198, 0.0368),
        "p3": Uniform(3.525e-5, 6.545e-5),
        "G0": Uniform(83.43, 154.93),
    }
    terms = (
        Term("G", -1.0, None, ("X", "G")),
        Term("G", -1.0, "p1", ("G",)),
        Term("G", float(G_b), "p1"),
        Term("G", 1.0, signal="D"),
        Term("X", -1.0, "p2", ("X",)),
        Term("X", 1.0, "p3", ("I",)),
        Term("X", -float(I_b), "p3"),
        Term("I", -float(p4), None, ("I",)),
        Term("I", float(p4) * float(I_b)),
        Term("I", 1.0, signal="U"),
    )
    signals = {"D": fisher_meal(meal_amount, t_meal, float(d)), "U": insulin_bolus()}
    model = StochasticOdeModel(("G", "X", "I"), params, terms, {"G": "G0", "X": 0.0, "I": I0}, signals,
                               name="bergman")
    return BenchmarkSpec("bergman", "ode", tuple(params), tuple(params.values()), model,
                         defaults={"degree": 4, "t_end": 300.0, "dt": 0.1, "output": "G"})


BUILTIN = {"ishigami": ishigami, "quartic": quartic, "seir": seir, "bergman": bergman}


def builtin(name: str, **params) -> BenchmarkSpec:
    try:
        factory = BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown built-in model {name!r}; choose from {sorted(BUILTIN)}") from None
    return factory(**params)


# --- JSON model descriptions -------------------------------------------------

def _signal_from_dict(spec: Mapping, constants: Mapping[str, float]) -> Callable[[float], float]:
    def val(key, default=None):
        v = spec.get(key, default)
        if isinstance(v, str):
            return constants[v]
        return v

    kind = spec.get("type")
    if kind == "pulse":
        amp, start, end = float(val("amplitude")), float(val("start", 0.0)), float(val("end"))

        def pulse(t):
            return amp if start < t < end else 0.0
        return pulse
    if kind == "exp_decay":
        amp, start, rate = float(val("amplitude")), float(val("start", 0.0)), float(val("rate"))

        def decay(t):
            return 0.0 if t < start else amp * math.exp(-rate * (t - start))
        return decay
    if kind == "constant":
        level = float(val("value"))
        return lambda t: level
    raise ValueError(f"unknown signal type {kind!r} (expected pulse, exp_decay or constant)")


def _resolve_scale(v, constants: Mapping[str, float]) -> float:
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        sign = -1.0 if v.startswith("-") else 1.0
        name = v.lstrip("-+")
        if name not in constants:
            raise ValueError(f"scale refers to unknown constant {name!r}")
        return sign * constants[name]
    if isinstance(v, list):
        return math.prod(_resolve_scale(x, constants) for x in v)
    raise ValueError(f"cannot interpret scale {v!r}")


def spec_from_dict(doc: Mapping, overrides: Mapping[str, float] | None = None) -> BenchmarkSpec:
    """Build a model from a JSON description.

    ODE documents list ``states``, uncertain ``parameters`` (distributions),
    ``constants`` (``null`` marks a value the user must supply through
    ``overrides``), ``initial`` values (number or parameter name), optional
    ``signals`` and the RHS ``terms``.  Static documents give ``variables`` and
    a ``polynomial`` as a list of ``{"coef", "powers"}`` monomials.
    """
    overrides = dict(overrides or {})
    name = doc.get("name", "model")
    kind = doc.get("kind", "ode")
    if kind == "static":
        variables = doc["variables"]
        names = tuple(variables)
        dists = tuple(dist_from_dict(v) for v in variables.values())
        monomials = [(float(t["coef"]), np.array(t["powers"], dtype=int)) for t in doc["polynomial"]]
        for _, pw in monomials:
            if pw.shape != (len(names),) or np.any(pw < 0):
                raise ValueError(f"monomial powers {pw.tolist()} do not match {len(names)} variables")

        def poly(x):
            return sum(c * np.prod(x ** pw, axis=1) for c, pw in monomials)

        return BenchmarkSpec(name, "static", names, dists, ModelFunction(len(names), poly, name),
                             defaults=dict(doc.get("defaults", {})))
    if kind != "ode":
        raise ValueError(f"unknown model kind {kind!r}")
    constants = dict(doc.get("constants", {}))
    constants.update(overrides)
    missing = [k for k, v in constants.items() if v is None]
    if missing:
        raise MissingParameterError(name, missing)
    constants = {k: float(v) for k, v in constants.items()}
    params = {k: dist_from_dict(v) for k, v in doc["parameters"].items()}
    signals = {k: _signal_from_dict(v, constants) for k, v in doc.get("signals", {}).items()}
    terms = []
    for t in doc["terms"]:
        terms.append(Term(t["state"], _resolve_scale(t.get("scale", 1.0), constants), t.get("param"),
                          tuple(t.get("factors", ())), t.get("signal")))
    initial = {}
    for s, v in doc["initial"].items():
        if isinstance(v, str) and v not in params:
            v = _resolve_scale(v, constants)
        initial[s] = v
    model = StochasticOdeModel(tuple(doc["states"]), params, tuple(terms), initial, signals, name=name)
    return BenchmarkSpec(name, "ode", tuple(params), tuple(params.values()), model,
                         defaults=dict(doc.get("defaults", {})))


def load_spec(path: str | Path, overrides: Mapping[str, float] | None = None) -> BenchmarkSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh), overrides)
