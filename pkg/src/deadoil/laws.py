"""Registries of named scalar laws, spatial field generators and time factors.

Everything here is selected by name plus keyword parameters so that a
configuration file stays declarative.  Instances are frozen and picklable.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError


# ---------------------------------------------------------------------------
# scalar laws r -> law(r), with first and second derivatives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarLaw:
    name = "abstract"
    params: dict = field(default_factory=dict)

    def __call__(self, r):
        return self.value(np.asarray(r, dtype=float))

    def value(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    def describe(self):
        args = " ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.name} {args}".strip()

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.params.items()))))


class Constant(ScalarLaw):
    """c"""
    name = "constant"

    def value(self, r):
        return np.full_like(r, self.params["c"], dtype=float)

    def d1(self, r):
        return np.zeros_like(r, dtype=float)

    def d2(self, r):
        return np.zeros_like(r, dtype=float)


class Affine(ScalarLaw):
    """a + b r"""
    name = "affine"

    def value(self, r):
        return self.params["a"] + self.params["b"] * r

    def d1(self, r):
        return np.full_like(r, self.params["b"], dtype=float)

    def d2(self, r):
        return np.zeros_like(r, dtype=float)


class AffinePlusSine(ScalarLaw):
    """a + b r + c sin(k r)"""
    name = "affine_plus_sine"

    def value(self, r):
        p = self.params
        return p["a"] + p["b"] * r + p["c"] * np.sin(p["k"] * r)

    def d1(self, r):
        p = self.params
        return p["b"] + p["c"] * p["k"] * np.cos(p["k"] * r)

    def d2(self, r):
        p = self.params
        return -p["c"] * p["k"] ** 2 * np.sin(p["k"] * r)


class AffinePlusCosine(ScalarLaw):
    """a + b r + c cos(k r)"""
    name = "affine_plus_cosine"

    def value(self, r):
        p = self.params
        return p["a"] + p["b"] * r + p["c"] * np.cos(p["k"] * r)

    def d1(self, r):
        p = self.params
        return p["b"] - p["c"] * p["k"] * np.sin(p["k"] * r)

    def d2(self, r):
        p = self.params
        return -p["c"] * p["k"] ** 2 * np.cos(p["k"] * r)


class AffinePlusCube(ScalarLaw):
    """a + b r + c r^3"""
    name = "affine_plus_cube"

    def value(self, r):
        p = self.params
        return p["a"] + p["b"] * r + p["c"] * r ** 3

    def d1(self, r):
        p = self.params
        return p["b"] + 3.0 * p["c"] * r ** 2

    def d2(self, r):
        return 6.0 * self.params["c"] * r


class Rational(ScalarLaw):
    """a / (1 + b r^2)"""
    name = "rational"

    def value(self, r):
        p = self.params
        return p["a"] / (1.0 + p["b"] * r ** 2)

    def d1(self, r):
        p = self.params
        s = 1.0 + p["b"] * r ** 2
        return -2.0 * p["a"] * p["b"] * r / s ** 2

    def d2(self, r):
        p = self.params
        b = p["b"]
        s = 1.0 + b * r ** 2
        return p["a"] * (6.0 * b ** 2 * r ** 2 - 2.0 * b) / s ** 3


LAWS = {cls.name: cls for cls in
        (Constant, Affine, AffinePlusSine, AffinePlusCosine, AffinePlusCube, Rational)}

_LAW_DEFAULTS = {
    "constant": {"c": 0.0},
    "affine": {"a": 0.0, "b": 1.0},
    "affine_plus_sine": {"a": 0.0, "b": 1.0, "c": 0.0, "k": 1.0},
    "affine_plus_cosine": {"a": 0.0, "b": 1.0, "c": 0.0, "k": 1.0},
    "affine_plus_cube": {"a": 0.0, "b": 1.0, "c": 0.0},
    "rational": {"a": 1.0, "b": 1.0},
}


def make_law(name, **params):
    if name == "identity":
        name, params = "affine", {"a": 0.0, "b": 1.0}
    if name not in LAWS:
        raise ConfigError(f"unknown law '{name}'; known: {sorted(LAWS)}")
    merged = _merge(name, _LAW_DEFAULTS[name], params)
    return LAWS[name](params=merged)


# ---------------------------------------------------------------------------
# spatial generators (x, y) -> value; Lx, Ly are injected at construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldGenerator:
    name = "abstract"
    params: dict = field(default_factory=dict)
    Lx: float = 1.0
    Ly: float = 1.0

    def __call__(self, x, y):
        raise NotImplementedError

    def describe(self):
        args = " ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.name} {args}".strip()

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.params.items())), self.Lx, self.Ly))


class Zero(FieldGenerator):
    name = "zero"

    def __call__(self, x, y):
        return np.zeros(np.broadcast(x, y).shape)


class ConstantField(FieldGenerator):
    """Constant in the interior; does not vanish on the boundary."""
    name = "constant"

    def __call__(self, x, y):
        return np.full(np.broadcast(x, y).shape, float(self.params["c"]))


class SineProduct(FieldGenerator):
    """amp sin(kx pi x / Lx) sin(ky pi y / Ly)"""
    name = "sine_product"

    def __call__(self, x, y):
        p = self.params
        return (p["amp"] * np.sin(p["kx"] * math.pi * np.asarray(x) / self.Lx)
                * np.sin(p["ky"] * math.pi * np.asarray(y) / self.Ly))


class PolyBump(FieldGenerator):
    """amp 16 x (Lx - x) y (Ly - y) / (Lx^2 Ly^2), peak value amp at the centre."""
    name = "poly_bump"

    def __call__(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (self.params["amp"] * 16.0 * x * (self.Lx - x) * y * (self.Ly - y)
                / (self.Lx ** 2 * self.Ly ** 2))


GENERATORS = {cls.name: cls for cls in (Zero, ConstantField, SineProduct, PolyBump)}

_GEN_DEFAULTS = {
    "zero": {},
    "constant": {"c": 0.0},
    "sine_product": {"amp": 1.0, "kx": 1.0, "ky": 1.0},
    "poly_bump": {"amp": 1.0},
}


def make_generator(name, Lx=1.0, Ly=1.0, **params):
    if name not in GENERATORS:
        raise ConfigError(f"unknown field generator '{name}'; known: {sorted(GENERATORS)}")
    merged = _merge(name, _GEN_DEFAULTS[name], params)
    return GENERATORS[name](params=merged, Lx=Lx, Ly=Ly)


# ---------------------------------------------------------------------------
# time factors and separable space-time fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeFactor:
    """One of: one, linear (a + b t), exp (exp(rate t)), sin (a + b sin(omega t))."""
    kind: str = "one"
    a: float = 0.0
    b: float = 1.0
    rate: float = 0.0
    omega: float = 1.0

    def __call__(self, t):
        if self.kind == "one":
            return 1.0
        if self.kind == "linear":
            return self.a + self.b * t
        if self.kind == "exp":
            return math.exp(self.rate * t)
        if self.kind == "sin":
            return self.a + self.b * math.sin(self.omega * t)
        raise ConfigError(f"unknown time factor '{self.kind}'")


_TIME_DEFAULTS = {
    "one": {},
    "linear": {"a": 0.0, "b": 1.0},
    "exp": {"rate": 0.0},
    "sin": {"a": 0.0, "b": 1.0, "omega": 1.0},
}


def make_time_factor(name, **params):
    if name not in _TIME_DEFAULTS:
        raise ConfigError(f"unknown time factor '{name}'; known: {sorted(_TIME_DEFAULTS)}")
    merged = _merge(name, _TIME_DEFAULTS[name], params)
    return TimeFactor(kind=name, **merged)


@dataclass(frozen=True)
class Separable:
    """Space-time field spatial(x, y) * temporal(t)."""
    spatial: FieldGenerator
    temporal: TimeFactor = TimeFactor()

    def __call__(self, x, y, t):
        return self.spatial(x, y) * self.temporal(t)

    def describe(self):
        return f"{self.spatial.describe()} * {self.temporal}"


def _merge(name, defaults, params):
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"'{name}' got unknown parameter(s) {sorted(unknown)}")
    merged = dict(defaults)
    merged.update({k: float(v) for k, v in params.items()})
    return merged
