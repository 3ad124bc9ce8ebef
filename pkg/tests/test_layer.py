import numpy as np
import pytest

from pnlab.layer import (ConvergenceError, compute_corrector, compute_layer, decay_exponent,
                         exact_layer, exact_layer_values, fit_tail, layer_constants)
from pnlab.nonlocal_core import Grid, derivative
from pnlab.potential import make_potential

GAMMA = 2 * np.pi ** 2
SMALL = Grid(30.0, 1501)


def test_exact_layer_closed_form(exact):
    assert exact.u(np.array([0.0]))[0] == 0.5
    assert exact_layer_values(10.0) == pytest.approx(0.5 + np.arctan(10 / np.pi) / np.pi, abs=1e-15)
    assert exact.gamma == pytest.approx(GAMMA, rel=1e-3)
    assert exact.eta * exact.gamma * exact.beta == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        exact_layer(potential=make_potential("sine_squared"))


def test_relaxed_layer_matches_closed_form(relaxed):
    x = relaxed.u.x
    m = np.abs(x) <= 20
    assert np.max(np.abs(relaxed.u.values - exact_layer_values(x))[m]) <= 1e-3
    assert relaxed.residual <= 1e-6
    assert relaxed.u(np.array([0.0]))[0] == pytest.approx(0.5, abs=1e-12)
    assert relaxed.u(np.array([10.0]))[0] == pytest.approx(0.9031078, abs=1e-3)
    assert np.all(np.diff(relaxed.u.values) > 0)


def test_relaxed_constants(relaxed):
    beta, gamma, eta = layer_constants(relaxed)
    assert beta == 1.0
    assert gamma == pytest.approx(GAMMA, rel=5e-3)
    assert eta == pytest.approx(1 / GAMMA, rel=5e-3)


def test_tail_fit(relaxed):
    coeff, kappa = fit_tail(relaxed)
    # x^2 u' -> 1 for the closed-form layer, i.e. 1/(2 s beta)
    assert coeff == pytest.approx(1.0, rel=0.05)
    assert kappa > 2 * relaxed.s
    x, up = relaxed.u_prime.x, relaxed.u_prime.values
    m = (x >= 10) & (x <= 20)
    assert np.all((up * x ** 2)[m] > 0.8) and np.all((up * x ** 2)[m] < 1.0)
    with pytest.raises(ValueError):
        fit_tail(relaxed, window=(31.0, 30.0))


def test_uniqueness_across_initial_steps():
    base = compute_layer(0.5, grid=SMALL, init="tanh", fit=False).u.values
    for init in ("arctan", "erf"):
        other = compute_layer(0.5, grid=SMALL, init=init, fit=False).u.values
        assert np.max(np.abs(other - base)) < 1e-4


def test_layer_errors():
    with pytest.raises(ValueError):
        compute_layer(1.0)
    with pytest.raises(ValueError):
        compute_layer(0.5, grid=SMALL, init="step")
    with pytest.raises(ConvergenceError) as exc:
        compute_layer(0.5, grid=SMALL, max_iter=3)
    assert exc.value.residual > 1e-6


def test_corrector_vanishes_at_half():
    # u' + eta (W''(u) - beta) = 0 identically for the closed-form layer
    c = compute_corrector(exact_layer(SMALL))
    assert np.max(np.abs(c.psi.values)) < 1e-6
    assert abs(c.solvability) < 1e-6


@pytest.fixture(scope="module")
def three_quarter():
    layer = compute_layer(0.75, grid=SMALL, fit=False)
    return layer, compute_corrector(layer)


def test_corrector_defining_properties(three_quarter):
    layer, c = three_quarter
    assert c.residual <= 1e-4
    assert abs(c.inner_product) <= 1e-8
    assert abs(c.solvability) <= 1e-6
    assert np.max(np.abs(c.psi.values)) > 1e-3


def test_corrector_derivative_decay(three_quarter):
    layer, c = three_quarter
    dpsi = derivative(c.psi)
    s = layer.s
    # psi' changes sign near |x| = 4, so the fit starts past it
    assert decay_exponent(dpsi, (10.0, 20.0)) >= 1 + 2 * s - 0.2
    x = dpsi.x
    assert np.max(np.abs(dpsi.values) * (1 + np.abs(x) ** (1 + 2 * s))) < 0.5
