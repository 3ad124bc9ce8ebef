"""Explicit barriers built from moving layers, their residuals, and the scalar relaxation flow."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .evolution import LIMITS, physical_grid
from .nonlocal_core import Profile, TailModel, operator_for
from .particles import MODES as MODES_SIGN
from .particles import ParticleConfig, _t_max_guess, integrate_particles
from .potential import zero_stress


class BarrierError(RuntimeError):
    pass


# variant -> (particles, particle delta mode, sign of delta in the field, residual sign)
VARIANTS = {
    "single": (1, "none", 1.0, 1.0),
    "two_upper": (2, "widen", 1.0, 1.0),
    "two_hat": (2, "widen", 1.0, 1.0),
    "three_upper": (3, "widen", 1.0, 1.0),
    "three_lower": (3, "shrink", -1.0, -1.0),
    "three_hat": (3, "widen", 1.0, 1.0),
}


@dataclass
class FrozenTrajectory:
    """A single particle at rest; the degenerate input of the barrier construction."""
    position: float
    t_end: float = np.inf

    def positions_at(self, t):
        return np.array([self.position])

    def velocities_at(self, t):
        return np.zeros(1)

    def time_of_gap(self, value, index=None):
        return self.t_end


@dataclass
class BarrierSpec:
    variant: str
    epsilon: float
    delta: float
    trajectory: object
    layer: object
    corrector: object = None  # None means psi = 0
    stress: object = field(default_factory=zero_stress)
    grid: object = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown barrier variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        n, mode, _, _ = VARIANTS[self.variant]
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if self.grid is None:
            self.grid = physical_grid(self.epsilon)
        if n == 1:
            if not isinstance(self.trajectory, FrozenTrajectory):
                raise ValueError("the single variant needs a FrozenTrajectory")
            return
        cfg = self.trajectory.cfg
        if cfg.N != n:
            raise ValueError(f"{self.variant} needs {n} particles, trajectory has {cfg.N}")
        hat = self.variant.endswith("hat")
        if hat != (cfg.start is not None):
            raise ValueError(f"{self.variant}: trajectory variant does not match the barrier")
        if self.delta > 0 and (cfg.delta_mode != mode or cfg.delta != self.delta):
            raise ValueError(f"{self.variant} needs a {mode} trajectory with delta {self.delta}")
        if self.delta == 0 and cfg.delta != 0:
            raise ValueError("trajectory delta differs from the barrier delta")

    @property
    def n(self):
        return VARIANTS[self.variant][0]

    @property
    def zeta(self):
        return np.array([1.0, -1.0, 1.0][:self.n])

    @property
    def limits(self):
        return LIMITS["one" if self.n == 1 else ("two" if self.n == 2 else "three")]


@dataclass
class BarrierTemplate:
    """Everything but delta; spec(delta) integrates the matching particle system."""
    variant: str
    epsilon: float
    x0: tuple
    layer: object
    corrector: object = None
    stress: object = field(default_factory=zero_stress)
    grid: object = None
    start: tuple | None = None  # hat variants: explicit initial positions

    def spec(self, delta):
        n, mode, _, _ = VARIANTS[self.variant]
        if n == 1:
            return BarrierSpec(self.variant, self.epsilon, delta, FrozenTrajectory(self.x0[0]),
                               self.layer, self.corrector, self.stress, self.grid)
        cfg = ParticleConfig(self.x0, s=self.layer.s, gamma=self.layer.gamma, stress=self.stress,
                             delta=delta, delta_mode=mode if delta > 0 else "none",
                             start=self.start)
        traj, _ = integrate_particles(cfg, _t_max_guess(cfg))
        return BarrierSpec(self.variant, self.epsilon, delta, traj, self.layer, self.corrector,
                           self.stress, self.grid)


@dataclass
class ResidualReport:
    variant: str
    epsilon: float
    delta: float
    theta: float
    window: tuple  # (t0, t1)
    times: np.ndarray
    x: np.ndarray
    field: np.ndarray  # sign * I_eps, shape (n_t, n_x); >= 0 certifies the barrier
    min: float
    argmin: tuple  # (t, x)

    def as_dict(self):
        return {"variant": self.variant, "epsilon": self.epsilon, "delta": self.delta,
                "theta": self.theta, "window": list(self.window), "min": self.min,
                "argmin": list(self.argmin), "n_times": len(self.times), "n_x": len(self.x)}


def _layer_u(layer, z):
    return layer.u(z)


def assemble_barrier(spec, t):
    """Barrier field at time t with its matched tail."""
    e, layer = spec.epsilon, spec.layer
    s, beta = layer.s, layer.beta
    try:
        pos = np.atleast_1d(spec.trajectory.positions_at(t))
        vel = np.atleast_1d(spec.trajectory.velocities_at(t))
    except ValueError as exc:
        raise BarrierError(f"{spec.variant}: t = {t:.6g} outside the trajectory window") from exc
    x = spec.grid.x
    _, _, dsign, _ = VARIANTS[spec.variant]
    shift = e ** (2 * s) / beta
    v = shift * (spec.stress(t, x) + dsign * spec.delta)
    for z, p, c in zip(spec.zeta, pos, vel):
        arg = z * (x - p) / e
        v = v + _layer_u(layer, arg)
        if spec.corrector is not None and c != 0.0:
            v = v - z * e ** (2 * s) * c * spec.corrector(arg)
    if spec.n > 1:
        v = v - 1.0
    L = spec.grid.half_width
    far = shift * (spec.stress(t, np.array([-L, L])) + dsign * spec.delta)
    lo, hi = spec.limits
    tail = TailModel.matched2(spec.grid, v, lo + far[0], hi + far[1], 2 * s)
    return Profile(spec.grid, v, tail, name=f"{spec.variant}_barrier")


def _residual_at(field_at, t, dt_fd, grid, eps, s, W, stress):
    vm, v0, vp = field_at(t - dt_fd), field_at(t), field_at(t + dt_fd)
    I = operator_for(grid, s).apply_values(v0.values, v0.tail)
    return (eps * (vp.values - vm.values) / (2 * dt_fd)
            + eps ** (-2 * s) * W(v0.values, 1) - I - stress(t, grid.x))


def _report(variant, eps, delta, theta, times, x, field):
    k = int(np.argmin(field))
    i, j = np.unravel_index(k, field.shape)
    return ResidualReport(variant, eps, delta, theta, (float(times[0]), float(times[-1])),
                          np.asarray(times), x, field, float(field[i, j]),
                          (float(times[i]), float(x[j])))


def gap_time(spec, theta):
    """First time the smallest barrier gap reaches theta (end of the admissible window)."""
    if spec.n == 1:
        return np.inf
    try:
        return spec.trajectory.time_of_gap(theta)
    except ValueError:
        return spec.trajectory.t_end


def residual_field(spec, theta=None, times=None, n_times=9, dt_fd=None):
    """sign * I_eps with I_eps = eps dv/dt + eps^-2s W'(v) - I_s v - sigma over the admissible window."""
    e, s = spec.epsilon, spec.layer.s
    theta = e ** 0.4 if theta is None else theta
    dt_fd = 1e-3 * e ** (2 * s + 1) if dt_fd is None else dt_fd
    t1 = gap_time(spec, theta)
    if times is None:
        if not np.isfinite(t1):
            t1 = 1.0
        times = np.linspace(dt_fd, t1 - dt_fd, n_times)
    times = np.asarray(times, dtype=float)
    if np.any(times > t1 - dt_fd * (1 - 1e-9)) or np.any(times < dt_fd * (1 - 1e-9)):
        raise BarrierError(f"sample times leave the window where all gaps exceed theta = {theta:.4g}")
    if spec.n > 1 and np.min(np.diff(spec.trajectory.positions_at(times), axis=1)) < theta:
        raise BarrierError(f"gap below theta = {theta:.4g} inside the sample window")
    sign = VARIANTS[spec.variant][3]
    field = np.array([sign * _residual_at(lambda tt: assemble_barrier(spec, tt), t, dt_fd,
                                          spec.grid, e, s, spec.layer.potential, spec.stress)
                      for t in times])
    return _report(spec.variant, e, spec.delta, theta, times, spec.grid.x, field)


def residual_tolerance(eps, s):
    """Grid accuracy of I_eps: residuals above minus this count as nonnegative."""
    return 1e-3 * eps ** (-2 * s)


def calibrate_delta(template, theta=None, n_times=9, factor=1.05, attempts=3, tol=None):
    """Smallest tried delta making the residual nonnegative: 1.05 |min| at delta = 0, then amplified.

    Residuals above -tol (default residual_tolerance) count as nonnegative.
    """
    tol = residual_tolerance(template.epsilon, template.layer.s) if tol is None else tol
    rep = residual_field(template.spec(0.0), theta, n_times=n_times)
    if rep.min >= -tol:
        return 0.0, rep
    # delta raises I_eps by about delta (W''(u)/beta + gamma u' = 1 along the layer)
    delta = factor * -rep.min
    for _ in range(attempts + 1):
        if delta > 1.0:
            raise BarrierError(f"calibrated delta {delta:.4g} exceeds 1")
        rep = residual_field(template.spec(delta), theta, n_times=n_times)
        if rep.min >= -tol:
            return delta, rep
        delta += factor * -rep.min
    raise BarrierError(f"residual still negative ({rep.min:.3g}) after {attempts} amplifications")


@dataclass
class _VelocityShift:
    """Trajectory that coincides with ``base`` at t_ref but moves with velocities c + dv."""
    base: object
    dv: np.ndarray
    t_ref: float
    cfg: object

    def positions_at(self, t):
        return self.base.positions_at(t) + self.dv * (t - self.t_ref)

    def velocities_at(self, t):
        return self.base.velocities_at(t) + self.dv


def delta_sensitivity(template, d1, d2, theta=None, n_times=5):
    """min over samples of (I(d2) - I(d1)) / (d2 - d1) at frozen positions.

    The d2 barrier shares the d1 positions at each sample time and differs only in
    the delta shift and in the particle velocities, which change by the delta term.
    """
    if not d2 > d1:
        raise ValueError("need d2 > d1")
    a = template.spec(d1)
    if a.n == 1:
        raise ValueError("delta sensitivity needs a moving barrier")
    e, s = template.epsilon, template.layer.s
    theta = e ** 0.4 if theta is None else theta
    dt_fd = 1e-3 * e ** (2 * s + 1)
    times = np.linspace(dt_fd, gap_time(a, theta) - dt_fd, n_times)
    n, mode, _, sign = VARIANTS[a.variant]
    cfg = a.trajectory.cfg
    dv = cfg.gamma * MODES_SIGN[mode] * a.zeta * (d2 - d1)
    cfg2 = cfg.replace(delta=d2, delta_mode=mode)
    W, grid = a.layer.potential, a.grid
    worst = np.inf
    for t in times:
        b = BarrierSpec(a.variant, e, d2, _VelocityShift(a.trajectory, dv, t, cfg2), a.layer,
                        a.corrector, a.stress, grid)
        ra = _residual_at(lambda tt: assemble_barrier(a, tt), t, dt_fd, grid, e, s, W, a.stress)
        rb = _residual_at(lambda tt: assemble_barrier(b, tt), t, dt_fd, grid, e, s, W, a.stress)
        worst = min(worst, float(np.min(sign * (rb - ra))))
    return worst / (d2 - d1)


# -- ordering ---------------------------------------------------------------


def check_ordering(a, b, tol=1e-6):
    """(a <= b + tol everywhere, worst a - b, where)."""
    if a.grid != b.grid:
        raise ValueError("profiles live on different grids")
    gap = a.values - b.values
    k = int(np.argmax(gap))
    return bool(gap[k] <= tol), float(gap[k]), float(a.x[k])


def three_tail_bound(layer, eps, theta, x2=0.0):
    """C with sup_{x <= x2 - theta} |u(-(x-x2)/eps) + u((x-x2-theta)/eps) - 1| = C eps^2s theta^-2s."""
    s = layer.s
    x = np.linspace(x2 - theta - 50.0 * theta, x2 - theta, 20001)
    w = _layer_u(layer, -(x - x2) / eps) + _layer_u(layer, (x - x2 - theta) / eps) - 1.0
    return float(np.max(np.abs(w)) / (eps ** (2 * s) * theta ** (-2 * s)))


# -- scalar relaxation flow ------------------------------------------------


def h_flow(xi, tau, potential, rtol=1e-12):
    """Solution of h' = -W'(h), h(0) = xi, at the times tau (scalar or array)."""
    if abs(xi) > 0.5:
        raise ValueError(f"|xi| must be at most 1/2, got {xi}")
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    if xi == 0.0:
        out = np.zeros_like(tau)
    else:
        order = np.argsort(tau)
        sol = solve_ivp(lambda t, h: -potential(h, 1), (0.0, float(tau.max())), [xi],
                        method="DOP853", rtol=rtol, atol=1e-15, t_eval=tau[order])
        out = np.empty_like(tau)
        out[order] = sol.y[0]
    return out if out.size > 1 else float(out[0])


def h_flow_cosine(xi, tau):
    """Closed form for the cosine potential: (1/pi) arctan(tan(pi xi) e^-tau)."""
    return np.arctan(np.tan(np.pi * xi) * np.exp(-np.asarray(tau))) / np.pi


# -- moving layer -------------------------------------------------------------


def layer_bounds(layer, window=(1.0, 10.0), v_range=(-1.0, 2.0)):
    """c = min u'(x)|x|^(1+2s) for |x| in window; C = Lipschitz constant of W' on v_range."""
    x, up = layer.u_prime.x, layer.u_prime.values
    m = (np.abs(x) >= window[0]) & (np.abs(x) <= window[1])
    c = float(np.min(up[m] * np.abs(x[m]) ** (1 + 2 * layer.s)))
    v = np.linspace(*v_range, 30001)
    C = float(np.max(np.abs(layer.potential(v, 2))))
    return c, C


def moving_layer_K(layer, eps, mu=None, kappa=None):
    """K from K mu = ((C + mu)/c) kappa^(2s+1) eps^-2s."""
    s = layer.s
    mu = layer.beta / 4 if mu is None else mu
    kappa = eps ** 0.8 if kappa is None else kappa
    c, C = layer_bounds(layer)
    return (C + mu) / c * kappa ** (2 * s + 1) * eps ** (-2 * s) / mu


def moving_layer(layer, eps, rho, y, mu, K, grid):
    """t -> u((x - x(t))/eps) + rho e^(-mu t/eps^(2s+1)), x(t) = y + K rho (e^(-mu t/eps^(2s+1)) - 1)."""
    s = layer.s

    def at(t):
        damp = np.exp(-mu * t / eps ** (2 * s + 1))
        xt = y + K * rho * (damp - 1.0)
        v = _layer_u(layer, (grid.x - xt) / eps) + rho * damp
        tail = TailModel.matched2(grid, v, rho * damp, 1.0 + rho * damp, 2 * s)
        return Profile(grid, v, tail, name="moving_layer")

    return at


def moving_layer_supersolution(layer, eps, rho, y=0.0, mu=None, K=None, kappa=None, grid=None,
                               times=None, n_times=9):
    """Residual eps h_t - I_s h + eps^-2s W'(h) of the moving layer over time samples."""
    beta, s = layer.beta, layer.s
    mu = beta / 4 if mu is None else mu
    if not 0.0 < mu <= beta / 4:
        raise ValueError(f"mu must lie in (0, beta/4] = (0, {beta / 4:.4g}], got {mu}")
    K_rule = moving_layer_K(layer, eps, mu, kappa)
    K = K_rule if K is None else K
    if K < K_rule * (1 - 1e-12):
        raise ValueError(f"K = {K:.4g} is below the rule value {K_rule:.4g}")
    grid = physical_grid(eps) if grid is None else grid
    dt_fd = 1e-3 * eps ** (2 * s + 1)
    if times is None:
        times = np.linspace(dt_fd, 4 * eps ** (2 * s + 1) / mu, n_times)
    at = moving_layer(layer, eps, rho, y, mu, K, grid)
    field = np.array([_residual_at(at, t, dt_fd, grid, eps, s, layer.potential, zero_stress())
                      for t in times])
    rep = _report("moving_layer", eps, 0.0, float("nan"), times, grid.x, field)
    return rep, K
