"""Singular particle systems for two and three transition layers.

Particles carry alternating orientations zeta = (+1, -1[, +1]) and move by

    x_i' = gamma * (sum_j zeta_i zeta_j (x_i - x_j) / (2s |x_i - x_j|^(1+2s))
                    - zeta_i sigma(t, x_i) + m zeta_i delta)

with m = -1 for the widened ("bar", "hat") systems, m = +1 for the shrunk
("underline") system and delta = 0 for the plain system.  Integration runs in
the variables (x_1, upsilon_1, ..., upsilon_{N-1}) with upsilon_i = theta_i^(2s+1):
each gap's self-attraction contributes exactly -gamma (2s+1)/s to upsilon_i',
so the transformed system is Lipschitz up to the collision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .potential import StressSpec, zero_stress

MODES = {"none": 0.0, "widen": -1.0, "shrink": 1.0}
TRIPLE_WINDOW = 1e-6
GAMMA_HALF = 2 * np.pi ** 2  # gamma for s = 1/2 and the cosine potential


class IntegrationError(RuntimeError):
    pass


@dataclass
class ParticleConfig:
    x0: tuple
    s: float = 0.5
    gamma: float = GAMMA_HALF
    stress: StressSpec = field(default_factory=zero_stress)
    delta: float = 0.0
    delta_mode: str = "none"
    start: tuple | None = None  # explicit initial positions, bypassing the delta shift

    def __post_init__(self):
        self.x0 = tuple(float(v) for v in self.x0)
        if self.N not in (2, 3):
            raise ValueError(f"only 2 or 3 particles are supported, got {self.N}")
        if np.any(np.diff(self.x0) <= 0):
            raise ValueError(f"initial positions must be strictly increasing: {self.x0}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.delta_mode not in MODES:
            raise ValueError(f"delta_mode must be one of {sorted(MODES)}")
        if self.start is not None:
            self.start = tuple(float(v) for v in self.start)
            if len(self.start) != self.N or np.any(np.diff(self.start) <= 0):
                raise ValueError(f"start positions must be {self.N} increasing values")
        elif np.any(np.diff(self.initial_positions()) <= 0):
            raise ValueError(f"delta = {self.delta} shifts the initial positions out of order")

    @property
    def N(self):
        return len(self.x0)

    @property
    def zeta(self):
        return np.array([1.0, -1.0, 1.0][:self.N])

    @property
    def mode_sign(self):
        return MODES[self.delta_mode]

    def initial_positions(self):
        if self.start is not None:
            return np.array(self.start)
        # widen: x_i - zeta_i delta, shrink: x_i + zeta_i delta
        return np.array(self.x0) + self.mode_sign * self.zeta * self.delta

    def replace(self, **kw):
        d = dict(x0=self.x0, s=self.s, gamma=self.gamma, stress=self.stress,
                 delta=self.delta, delta_mode=self.delta_mode, start=self.start)
        d.update(kw)
        return ParticleConfig(**d)


def _pair_terms(x, zeta, s):
    d = x[:, None] - x[None, :]
    # the floor only matters for rejected trial steps that overshoot a collision
    ad = np.maximum(np.abs(d), 1e-100)
    np.fill_diagonal(ad, 1.0)
    P = zeta[:, None] * zeta[None, :] * d / (2 * s * ad ** (1 + 2 * s))
    np.fill_diagonal(P, 0.0)
    return P


def _external(cfg, t, x):
    z = cfg.zeta
    return -z * cfg.stress(t, x) + cfg.mode_sign * z * cfg.delta


def velocities(cfg, t, x):
    """Particle velocities c_i = x_i' at positions x."""
    x = np.asarray(x, dtype=float)
    return cfg.gamma * (_pair_terms(x, cfg.zeta, cfg.s).sum(axis=1) + _external(cfg, t, x))


def _unpack(y, s):
    ups = np.maximum(y[1:], 0.0)
    theta = ups ** (1.0 / (2 * s + 1))
    x = np.concatenate([[y[0]], y[0] + np.cumsum(theta)])
    return x, theta


def _rhs(cfg):
    s, g, N = cfg.s, cfg.gamma, cfg.N

    def f(t, y):
        x, theta = _unpack(y, s)
        # distances from the gaps alone, so equal gaps give bitwise equal forces
        P = _pair_terms(np.concatenate([[0.0], np.cumsum(theta)]), cfg.zeta, s)
        ext = _external(cfg, t, x)
        out = np.empty(N)
        out[0] = g * (P[0].sum() + ext[0])
        for i in range(N - 1):
            # regular part of theta_i': everything but the i <-> i+1 attraction,
            # summed term by term so mirror-symmetric data stay bitwise symmetric
            reg = ext[i + 1] - ext[i]
            for j in range(N):
                if j != i and j != i + 1:
                    reg += P[i + 1, j] - P[i, j]
            out[i + 1] = g * (2 * s + 1) * (-1.0 / s + theta[i] ** (2 * s) * reg)
        return out

    return f


@dataclass
class Trajectory:
    cfg: ParticleConfig
    times: np.ndarray
    positions: np.ndarray  # (n_t, N)
    velocities: np.ndarray
    gaps: np.ndarray  # (n_t, N-1)
    upsilon: np.ndarray
    sol: object = None
    t_end: float = 0.0

    def positions_at(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_end * (1 + 1e-12)):
            raise ValueError(f"time outside the trajectory window [0, {self.t_end}]")
        y = self.sol(t)
        s = self.cfg.s
        theta = np.maximum(y[1:], 0.0) ** (1.0 / (2 * s + 1))
        x = np.concatenate([y[:1], y[:1] + np.cumsum(theta, axis=0)], axis=0)
        return x.T

    def velocities_at(self, t):
        x = self.positions_at(t)
        if x.ndim == 1:
            return velocities(self.cfg, float(t), x)
        return np.array([velocities(self.cfg, ti, xi) for ti, xi in zip(np.atleast_1d(t), x)])

    def upsilon_at(self, t):
        return self.sol(np.asarray(t, dtype=float))[1:].T

    def time_of_gap(self, value, index=None):
        """First time the (minimal, or given) gap falls to ``value``."""
        from scipy.optimize import brentq
        g = self.gaps.min(axis=1) if index is None else self.gaps[:, index]
        below = np.nonzero(g <= value)[0]
        if g[0] <= value:
            return 0.0
        if len(below) == 0:
            raise ValueError(f"gap never reaches {value}")
        k = below[0]

        def f(t):
            th = np.diff(self.positions_at(t))
            return (th.min() if index is None else th[index]) - value

        return brentq(f, self.times[k - 1], self.times[k], xtol=1e-14, rtol=1e-14)


@dataclass
class CollisionReport:
    T_c: float
    kind: str  # none | simple | triple
    pairs: tuple
    x_c: float
    stop_gap: float
    t_stop: float

    def as_dict(self):
        return {"T_c": self.T_c, "kind": self.kind, "pairs": [list(p) for p in self.pairs],
                "x_c": self.x_c, "stop_gap": self.stop_gap, "t_stop": self.t_stop}


def integrate_particles(cfg, t_max, stop_fraction=1e-4, n_samples=2001, rtol=1e-12):
    x_init = cfg.initial_positions()
    theta0 = np.diff(x_init)
    s = cfg.s
    stop_gap = stop_fraction * float(theta0.min())
    ups_stop = stop_gap ** (2 * s + 1)
    y0 = np.concatenate([[x_init[0]], theta0 ** (2 * s + 1)])

    events = []
    for i in range(cfg.N - 1):
        ev = (lambda t, y, i=i: y[i + 1] - ups_stop)
        ev.terminal, ev.direction = True, -1
        events.append(ev)

    f = _rhs(cfg)
    sol = solve_ivp(f, (0.0, t_max), y0, method="DOP853", rtol=rtol,
                    atol=1e-14 * max(1.0, float(np.max(np.abs(y0)))),
                    events=events, dense_output=True)
    if sol.status == -1:
        raise IntegrationError(f"integration failed at t = {sol.t[-1]}: {sol.message}; "
                               f"state {sol.y[:, -1]}")
    t_end = float(sol.t[-1])

    times = np.unique(np.concatenate([np.linspace(0.0, t_end, n_samples), sol.t]))
    traj = Trajectory(cfg, times, None, None, None, None, sol.sol, t_end)
    traj.positions = traj.positions_at(times)
    traj.velocities = np.array([velocities(cfg, t, x) for t, x in zip(times, traj.positions)])
    traj.gaps = np.diff(traj.positions, axis=1)
    traj.upsilon = traj.upsilon_at(times)
    if np.any(traj.gaps[:-1] <= 0):
        raise IntegrationError("particle ordering lost before the stop event")

    hit = [i for i, te in enumerate(sol.t_events) if len(te)]
    if sol.status != 1 or not hit:
        return traj, CollisionReport(float("inf"), "none", (), float("nan"), stop_gap, t_end)

    # linear extrapolation of each gap's upsilon to zero from the stop state
    y_end = sol.y[:, -1]
    dy = f(t_end, y_end)
    ups = y_end[1:]
    t_hit = np.full(cfg.N - 1, np.inf)
    for i in range(cfg.N - 1):
        if dy[i + 1] < 0:
            t_hit[i] = t_end + max(ups[i], 0.0) / -dy[i + 1]
    first = int(np.argmin(t_hit))
    T_c = float(t_hit[first])
    together = [i for i in range(cfg.N - 1) if t_hit[i] - T_c <= TRIPLE_WINDOW]
    x_end = traj.positions[-1]
    if len(together) == 2:
        kind, pairs = "triple", ((1, 2), (2, 3))
        x_c = float(x_end[1])
    else:
        kind, pairs = "simple", ((first + 1, first + 2),)
        x_c = float(0.5 * (x_end[first] + x_end[first + 1]))
    return traj, CollisionReport(T_c, kind, pairs, x_c, stop_gap, t_end)


def collision_time_closed_form(cfg):
    """T_c for sigma = 0, delta = 0: two particles, or three with equal gaps."""
    th = np.diff(cfg.initial_positions())
    s, g = cfg.s, cfg.gamma
    if cfg.N == 2:
        return s * th[0] ** (2 * s + 1) / (g * (2 * s + 1))
    if not np.isclose(th[0], th[1], rtol=0, atol=1e-14):
        raise ValueError("closed form needs equal gaps")
    return s * th[0] ** (2 * s + 1) / (g * (2 * s + 1) * (0.5 - 2.0 ** (-1 - 2 * s)))


def _t_max_guess(cfg):
    th = np.diff(cfg.initial_positions())
    s, g = cfg.s, cfg.gamma
    base = s * th.max() ** (2 * s + 1) / (g * (2 * s + 1) * (0.5 - 2.0 ** (-1 - 2 * s)))
    return 20.0 * base + 1.0


def collision_time_convergence(cfg, deltas, window=0.9):
    """(delta, T_c^delta, sup_t |x_bar - x|) for widened systems, sup over [0, window*T_c]."""
    base = cfg.replace(delta=0.0, delta_mode="none")
    traj0, rep0 = integrate_particles(base, _t_max_guess(base))
    if not np.isfinite(rep0.T_c):
        raise ValueError("base configuration does not collide")
    t = np.linspace(0.0, window * rep0.T_c, 2001)
    x0 = traj0.positions_at(t)
    rows = []
    for d in deltas:
        c = cfg.replace(delta=float(d), delta_mode="widen" if d > 0 else "none")
        traj, rep = integrate_particles(c, _t_max_guess(c))
        dev = float(np.max(np.abs(traj.positions_at(np.minimum(t, traj.t_end)) - x0)))
        rows.append((float(d), rep.T_c, dev))
    return rows


def classify_collision(cfg):
    if cfg.N != 3:
        raise ValueError("classification needs three particles")
    if not cfg.stress.is_zero or cfg.delta != 0.0:
        raise ValueError("classification assumes zero stress and delta = 0")
    return integrate_particles(cfg, _t_max_guess(cfg))[1].kind


def holder_constant(traj, levels=8):
    """Largest |v(t+h) - v(t)|/h over dyadic pairs, v = (min gap)^(2s+1)."""
    T = traj.t_end
    best = 0.0
    for k in range(1, levels + 1):
        t = np.linspace(0.0, T, 2 ** k + 1)
        v = np.diff(traj.positions_at(t), axis=1).min(axis=1) ** (2 * traj.cfg.s + 1)
        best = max(best, float(np.max(np.abs(np.diff(v)) / (T / 2 ** k))))
    return best


# -- explicit formulas ------------------------------------------------------


def transition_time(s, gamma, K, theta, sigma_bound, delta_hat, variant="two"):
    a = (K + 2) ** (2 * s)
    load = sigma_bound + delta_hat
    if variant == "two":
        num = 4 * s * a * theta ** (2 * s + 1)
        den = 1.0 - 2 * s * a * theta ** (2 * s) * load
    elif variant == "three":
        num = 2 ** (2 * s + 2) * s * a * theta ** (2 * s + 1)
        den = 2 ** (2 * s) - 1 - 2 ** (2 * s + 1) * s * a * theta ** (2 * s) * load
    else:
        raise ValueError(f"variant must be 'two' or 'three', got {variant!r}")
    if den <= 0:
        raise ValueError(f"outside small-gap regime: denominator {den:.3g} <= 0")
    return num / (gamma * den)


def K_threshold(s):
    return (2 * s + 1) * 2 ** (2 * s + 2) * (1 + 2 ** (2 * s)) / (2 ** (2 * s) - 1)


def M_expression(s, K, M, sigma_bound, delta_hat, theta):
    a = (K + 2) / (M - K - 1)
    return (-1 + a ** (2 * s) + a ** (2 * s + 1)
            + 2 * s * (sigma_bound + delta_hat) * (a + 1) * (K + 2) ** (2 * s) * theta ** (2 * s))


def choose_constants(s, sigma_bound, delta_hat, theta, M_cap=10 ** 7):
    rhs = K_threshold(s)
    K = 2
    while ((K + 2) ** (2 * s + 1) - 1) / (K + 2) ** (2 * s) < rhs:
        K += 1
    for M in range(2 * K + 4, M_cap):
        if M_expression(s, K, M, sigma_bound, delta_hat, theta) < 0:
            return K, M
    raise ValueError(f"no feasible M below {M_cap}; theta = {theta} too large")


# -- hat system -------------------------------------------------------------


def hat_start(bar_positions, theta, K):
    """Hat initial data from the bar positions at the time the first gap equals theta."""
    x = np.asarray(bar_positions, dtype=float)
    if len(x) == 2:
        return (x[0] - theta, x[1] + K * theta)
    return (x[0] - theta, x[1] + K * theta, x[2] - theta)


def hat_checks(bar_cfg, theta, delta_hat, K=None, M=None, n_check=2001):
    """Integrate the hat system from the bar state at gap theta and test its ordering claims."""
    s, g = bar_cfg.s, bar_cfg.gamma
    if K is None:
        K, M = choose_constants(s, bar_cfg.stress.bound, delta_hat, theta)
    bar, _ = integrate_particles(bar_cfg, _t_max_guess(bar_cfg))
    T1 = bar.time_of_gap(theta, index=0)
    xbar = bar.positions_at(T1)
    variant = "two" if bar_cfg.N == 2 else "three"
    t_eps = transition_time(s, g, K, theta, bar_cfg.stress.bound, delta_hat, variant)
    hat_cfg = bar_cfg.replace(delta=delta_hat, delta_mode="widen",
                              start=hat_start(xbar, theta, K))
    hat, rep = integrate_particles(hat_cfg, t_eps)
    if hat.t_end < t_eps * (1 - 1e-12):
        raise IntegrationError("hat system collided before the transition time")
    t = np.linspace(0.0, t_eps, n_check)
    xh = hat.positions_at(t)
    th = np.diff(xh, axis=1)
    out = {
        "K": K, "M": M, "T1": float(T1), "t_eps": float(t_eps), "bar_positions": xbar.tolist(),
        "x1_hat_end": float(xh[-1, 0]),
        "reaches_bar_x2": bool(xh[-1, 0] >= xbar[1]),
        "gap_decreasing": bool(np.all(np.diff(th[:, 0]) < 0)),
        "min_gap1": float(th[:, 0].min()),
        "gap_above_theta": bool(th[:, 0].min() >= theta),
    }
    if bar_cfg.N == 3:
        out["third_gap_ratio"] = float((xbar[2] - xbar[1]) / theta)
        out["third_gap_ok"] = bool(xbar[2] - xbar[1] >= M * theta)
        out["gaps_ordered"] = bool(np.all(th[:, 1] >= th[:, 0]))
    out["all_ok"] = all(v for k, v in out.items() if isinstance(v, bool))
    return out, hat
