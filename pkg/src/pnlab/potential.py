"""Periodic multi-well potentials and external stress fields."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi


class PotentialValidationError(ValueError):
    def __init__(self, assumption, detail):
        super().__init__(f"{assumption}: {detail}")
        self.assumption = assumption
        self.detail = detail


@dataclass(frozen=True)
class PotentialSpec:
    name: str
    derivs: tuple  # callables for W, W', W'', W'''
    params: dict = field(default_factory=dict, compare=False)

    @property
    def beta(self):
        return float(self.derivs[2](0.0))

    def __call__(self, v, order=0):
        return W_eval(self, v, order)


def W_eval(spec, v, order=0):
    if order not in (0, 1, 2, 3):
        raise ValueError(f"derivative order must be 0..3, got {order}")
    return spec.derivs[order](v)


def _cosine():
    c = 1.0 / (4 * np.pi ** 2)
    return (
        lambda v: c * (1.0 - np.cos(TWO_PI * np.asarray(v, float))),
        lambda v: np.sin(TWO_PI * np.asarray(v, float)) / TWO_PI,
        lambda v: np.cos(TWO_PI * np.asarray(v, float)),
        lambda v: -TWO_PI * np.sin(TWO_PI * np.asarray(v, float)),
    )


def _sine_squared():
    # sin^2(pi v)/pi^2 = (1 - cos 2 pi v)/(2 pi^2)
    return tuple(lambda v, f=f: 2.0 * f(v) for f in _cosine())


def _quadratic():
    return (
        lambda v: np.asarray(v, float) ** 2,
        lambda v: 2.0 * np.asarray(v, float),
        lambda v: np.full_like(np.asarray(v, float), 2.0),
        lambda v: np.zeros_like(np.asarray(v, float)),
    )


POTENTIALS = {"cosine": _cosine, "sine_squared": _sine_squared, "quadratic": _quadratic}


def make_potential(name="cosine"):
    try:
        return PotentialSpec(name, POTENTIALS[name]())
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(POTENTIALS)}") from None


def validate_potential(spec, n_samples=97):
    """Check the standing assumptions on W; raise on the first failure."""
    v = np.linspace(-2.0, 2.0, 4 * n_samples + 1)
    report = {}
    period_err = float(np.max(np.abs(spec(v + 1.0) - spec(v))))
    scale = max(1.0, float(np.max(np.abs(spec(v)))))
    report["periodicity"] = period_err
    if period_err > 1e-12 * scale:
        raise PotentialValidationError("periodicity", f"max |W(v+1) - W(v)| = {period_err:.3g}")
    ints = np.arange(-2.0, 3.0)
    zero_err = float(np.max(np.abs(spec(ints))))
    report["zero_on_integers"] = zero_err
    if zero_err > 1e-14:
        raise PotentialValidationError("zero on integers", f"max |W(k)| = {zero_err:.3g}")
    frac = v[np.abs(v - np.round(v)) > 1e-3]
    wmin = float(np.min(spec(frac)))
    report["positivity"] = wmin
    if wmin <= 0.0:
        raise PotentialValidationError("positivity", f"min W off the integers = {wmin:.3g}")
    beta = spec.beta
    report["beta"] = beta
    if not beta > 0.0:
        raise PotentialValidationError("W''(0) > 0", f"W''(0) = {beta:.3g}")
    return report


# -- stress ---------------------------------------------------------------


@dataclass(frozen=True)
class StressSpec:
    name: str
    fn: Callable  # sigma(t, x)
    fn_x: Callable
    fn_t: Callable
    bound: float  # dominates |sigma|, |sigma_x|, |sigma_t|
    holder_alpha: float = 1.0
    holder_const: float = 0.0
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, t, x):
        return self.fn(t, np.asarray(x, dtype=float))

    @property
    def is_zero(self):
        return self.name == "zero"


def zero_stress():
    z = lambda t, x: np.zeros_like(np.asarray(x, float))
    return StressSpec("zero", z, z, z, 0.0, 1.0, 0.0, {})


def constant_stress(A):
    z = lambda t, x: np.zeros_like(np.asarray(x, float))
    return StressSpec("constant", lambda t, x: np.full_like(np.asarray(x, float), A),
                      z, z, abs(A), 1.0, 0.0, {"A": A})


def sine_stress(A, omega, k):
    """sigma = A sin(omega t + k x)."""
    fn = lambda t, x: A * np.sin(omega * t + k * np.asarray(x, float))
    fx = lambda t, x: A * k * np.cos(omega * t + k * np.asarray(x, float))
    ft = lambda t, x: A * omega * np.cos(omega * t + k * np.asarray(x, float))
    bound = abs(A) * max(1.0, abs(k), abs(omega))
    # sigma_x is Lipschitz with constant |A| k^2
    return StressSpec("sine", fn, fx, ft, bound, 1.0, abs(A) * k * k,
                      {"A": A, "omega": omega, "k": k})


def make_stress(name="zero", **params):
    if name == "zero":
        return zero_stress()
    if name == "constant":
        return constant_stress(float(params.get("A", 0.0)))
    if name == "sine":
        return sine_stress(float(params.get("A", 0.0)), float(params.get("omega", 0.0)),
                           float(params.get("k", 1.0)))
    raise ValueError(f"unknown stress {name!r}; choose from ['constant', 'sine', 'zero']")


def check_stress_bound(stress, t=None, x=None):
    """Largest sampled |sigma|, |sigma_x|, |sigma_t| over a test lattice."""
    t = np.linspace(0.0, 5.0, 41) if t is None else np.asarray(t)
    x = np.linspace(-20.0, 20.0, 401) if x is None else np.asarray(x)
    T, X = np.meshgrid(t, x, indexing="ij")
    worst = max(float(np.max(np.abs(f(T, X)))) for f in (stress.fn, stress.fn_x, stress.fn_t))
    return worst, worst <= stress.bound * (1 + 1e-12)
