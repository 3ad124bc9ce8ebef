"""Basic layer solution, its constants, and the corrector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve
from scipy.optimize import brentq

from .nonlocal_core import Grid, Profile, TailModel, derivative, integrate_line, operator_for
from .potential import make_potential, validate_potential


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(f"{msg} (last residual {residual:.3e})")
        self.residual = residual


@dataclass
class LayerSolution:
    u: Profile
    u_prime: Profile
    s: float
    potential: object
    beta: float
    gamma: float
    eta: float
    kappa_fit: float = float("nan")
    residual: float = float("nan")
    iterations: int = 0

    def __call__(self, z):
        return self.u(z)


@dataclass
class Corrector:
    psi: Profile
    inner_product: float  # <psi, u'>
    multiplier: float  # Lagrange multiplier of the phase condition
    solvability: float  # <u', rhs>
    residual: float

    def __call__(self, z):
        return self.psi(z)


def default_layer_grid():
    return Grid(60.0, 6001)


def layer_tail(s, beta):
    a = 1.0 / (2 * s * beta)
    return TailModel(0.0, 1.0, 2 * s, a, -a)


def exact_layer_values(x):
    """The closed-form s = 1/2 layer for the cosine potential."""
    return 0.5 + np.arctan(np.asarray(x) / np.pi) / np.pi


def _half_crossing(x, u):
    j = int(np.searchsorted(u, 0.5))
    if j == 0 or j == len(u):
        raise ConvergenceError("layer lost its 1/2-crossing", float("nan"))
    f = PchipInterpolator(x[j - 1:j + 1], u[j - 1:j + 1] - 0.5)
    return brentq(f, x[j - 1], x[j]) if u[j] != 0.5 else x[j]


def _recenter(grid, u, tail):
    """Translate so the 1/2 level sits at x = 0 (monotone interpolation, tail outside)."""
    x = grid.x
    x0 = _half_crossing(x, u)
    if x0 == 0.0:
        return u
    L = grid.half_width
    xs = x + x0
    out = tail(xs)
    inside = np.abs(xs) <= L
    out[inside] = PchipInterpolator(x, u)(xs[inside])
    return out


def _finish_layer(grid, u, s, potential, **kw):
    beta = potential.beta
    # leading-order tail matched to the boundary samples; its coefficient is
    # close to 1/(2 s beta) when L is large, see fit_tail for the comparison
    prof = Profile(grid, u, TailModel.matched(grid, u, 0.0, 1.0, 2 * s), monotone=True, name="u")
    up = derivative(prof, name="u_prime")
    gamma = 1.0 / integrate_line(up, "squared")
    return LayerSolution(prof, up, s, potential, beta, gamma, 1.0 / (gamma * beta), **kw)


def exact_layer(grid=None, potential=None):
    """s = 1/2 closed-form layer; only valid for the default cosine potential."""
    grid = default_layer_grid() if grid is None else grid
    potential = make_potential("cosine") if potential is None else potential
    if potential.name != "cosine":
        raise ValueError("the closed-form layer exists only for the cosine potential")
    return _finish_layer(grid, exact_layer_values(grid.x), 0.5, potential)


def compute_layer(s=0.5, potential=None, grid=None, init="tanh", tol=1e-6,
                  max_iter=200_000, fit=True):
    """Relax u_t = I_s u - W'(u) to steady state, pinned so that u(0) = 1/2."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    potential = make_potential("cosine") if potential is None else potential
    validate_potential(potential)
    grid = default_layer_grid() if grid is None else grid
    x = grid.x
    op = operator_for(grid, s)
    wmax = float(np.max(np.abs(potential(np.linspace(0, 1, 1001), 2))))
    dtau = 0.5 / (wmax + op.diagonal_bound)

    if init == "tanh":
        u = 0.5 + 0.5 * np.tanh(x / 2.0)
    elif init == "arctan":
        u = 0.5 + np.arctan(2.0 * x) / np.pi
    elif init == "erf":
        from scipy.special import erf
        u = 0.5 + 0.5 * erf(x / 3.0)
    else:
        raise ValueError(f"unknown initial step {init!r}")

    # the far field follows the boundary samples during relaxation, so the
    # tail coefficient emerges from the dynamics instead of being imposed
    res = np.inf
    for it in range(max_iter):
        tail = TailModel.matched(grid, u, 0.0, 1.0, 2 * s)
        r = op.apply_values(u, tail) - potential(u, 1)
        res = float(np.max(np.abs(r)))
        if res <= tol:
            break
        u = _recenter(grid, u + dtau * r, tail)
        if np.any(np.diff(u) < 0.0) or u[0] < 0.0 or u[-1] > 1.0:
            raise ConvergenceError(f"monotonicity lost at relaxation step {it}", res)
    else:
        raise ConvergenceError(f"no convergence in {max_iter} steps", res)

    layer = _finish_layer(grid, u, s, potential, residual=res, iterations=it)
    if fit:
        layer.kappa_fit = fit_tail(layer)[1]
    return layer


def layer_constants(layer):
    gamma = 1.0 / integrate_line(layer.u_prime, "squared")
    beta = layer.beta
    return beta, gamma, 1.0 / (gamma * beta)


def fit_tail(layer, window=(5.0, None)):
    """Leading tail coefficient and next-order exponent, averaged over both sides.

    The exponent comes from a log-log fit of |u - H + x/(2s beta |x|^(2s+1))|; the
    coefficient is the intercept of (1-u) x^(2s) regressed on x^(2s-kappa).
    """
    s, beta = layer.s, layer.beta
    x, u = layer.u.x, layer.u.values
    lo = window[0]
    hi = layer.u.grid.half_width / 2 if window[1] is None else window[1]
    right = (x >= lo) & (x <= hi)
    if right.sum() < 4:
        raise ValueError(f"fit window [{lo}, {hi}] is empty")
    a0 = 1.0 / (2 * s * beta)
    coeffs, kappas = [], []
    for z, dist in ((x[right], 1.0 - u[right]), (-x[::-1][right], u[::-1][right])):
        rem = np.abs(dist - a0 * z ** (-2 * s))
        good = rem > 0
        slope = np.polyfit(np.log(z[good]), np.log(rem[good]), 1)[0]
        kappa = -slope
        A = np.vstack([np.ones_like(z), z ** (2 * s - kappa)]).T
        c = np.linalg.lstsq(A, dist * z ** (2 * s), rcond=None)[0]
        coeffs.append(c[0])
        kappas.append(kappa)
    return float(np.mean(coeffs)), float(np.mean(kappas))


def decay_exponent(p, window):
    """Fitted exponent k of |p(x)| ~ C |x|^(-k) over |x| in window (both sides)."""
    x, v = p.x, np.abs(p.values)
    m = (np.abs(x) >= window[0]) & (np.abs(x) <= window[1]) & (v > 0)
    if m.sum() < 4:
        raise ValueError("decay fit window is empty")
    return float(-np.polyfit(np.log(np.abs(x[m])), np.log(v[m]), 1)[0])


def compute_corrector(layer, s=None, potential=None):
    """Solve (I_s - W''(u)) psi = u' + eta (W''(u) - W''(0)) with <psi, u'> = 0."""
    s = layer.s if s is None else s
    W = layer.potential if potential is None else potential
    grid = layer.u.grid
    n, h = grid.n_points, grid.h
    u, up = layer.u.values, layer.u_prime.values
    w2 = W(u, 2)
    rhs = up + layer.eta * (w2 - layer.beta)

    wts = np.full(n, h)
    wts[0] = wts[-1] = 0.5 * h
    solvability = float(np.dot(wts, up * rhs))

    A = operator_for(grid, s).matrix(2 * s)
    A[np.diag_indices(n)] -= w2
    B = np.empty((n + 1, n + 1))
    B[:n, :n] = A
    del A
    B[:n, n] = wts * up
    B[n, :n] = wts * up
    B[n, n] = 0.0
    try:
        sol = solve(B, np.append(rhs, 0.0), overwrite_a=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"corrector system is singular beyond the translation mode: {exc}")
    del B
    psi_v, lam = sol[:n], float(sol[n])
    psi = Profile(grid, psi_v, TailModel.matched(grid, psi_v, 0.0, 0.0, 2 * s), name="psi")
    lhs = operator_for(grid, s).apply_values(psi_v, psi.tail) - w2 * psi_v
    residual = float(np.max(np.abs(lhs - rhs)))
    return Corrector(psi, float(np.dot(wts, psi_v * up)), lam, solvability, residual)
