"""Time integration of  eps v_t = I_s v - eps^(-2s) W'(v) + sigma  on a physical grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .nonlocal_core import Grid, Profile, TailModel, operator_for
from .potential import zero_stress


class EvolutionError(RuntimeError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


ZETA = {2: (1.0, -1.0), 3: (1.0, -1.0, 1.0)}
LIMITS = {"two": (0.0, 0.0), "three": (0.0, 1.0), "one": (0.0, 1.0)}


def physical_grid(eps, half_width=None, h_factor=0.1):
    """Default grid: spacing eps*h_factor, half width max(2, 40 eps)."""
    L = max(2.0, 40.0 * eps) if half_width is None else half_width
    return Grid.from_spacing(L, h_factor * eps)


@dataclass
class EvolutionConfig:
    epsilon: float
    grid: Grid
    T: float
    s: float = 0.5
    potential: object = None
    stress: object = field(default_factory=zero_stress)
    limits: tuple = (0.0, 0.0)
    far_field: str = "matched"  # matched: fixed limits + algebraic tail; flat: limits follow boundary
    dt: float | None = None
    dt_factor: float = 1.0  # multiplies the default step
    snapshot_every: float | None = None  # time between snapshots
    level: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.grid.h > self.epsilon / 4 * (1 + 1e-12):
            raise ValueError(f"grid spacing {self.grid.h:.4g} does not resolve eps/4 = {self.epsilon / 4:.4g}")
        if self.far_field not in ("matched", "flat"):
            raise ValueError(f"unknown far_field policy {self.far_field!r}")
        if self.potential is None:
            from .potential import make_potential
            self.potential = make_potential("cosine")

    def default_dt(self):
        beta = self.potential.beta
        op = operator_for(self.grid, self.s)
        e = self.epsilon
        return min(0.25 * e ** (2 * self.s + 1) / beta, 0.25 * e / op.diagonal_bound)


@dataclass
class LevelTrack:
    level: float
    times: np.ndarray
    crossings: list  # per snapshot: array of positions
    signs: list  # per snapshot: +1 increasing, -1 decreasing
    events: list  # dicts with t, before, after

    @property
    def first_drop(self):
        for e in self.events:
            if e["after"] < e["before"]:
                return e["t"]
        return None


@dataclass
class EvolutionResult:
    config: EvolutionConfig
    times: np.ndarray  # snapshot times
    snapshots: list  # Profiles
    series_t: np.ndarray  # every step
    supnorm: np.ndarray
    counts: np.ndarray  # crossings of config.level, every step
    events: list
    dt: float
    layer_distance: np.ndarray | None = None
    x_fit: np.ndarray | None = None

    @property
    def final(self):
        return self.snapshots[-1]


@dataclass
class DecayFit:
    t0: float
    t1: float
    rate: float
    reference: float  # beta / (2 eps^(2s+1))
    ratio: float  # rate eps^(2s+1) / beta
    r2: float


def _layer_term(layer, z):
    return layer.u(z) if callable(getattr(layer, "u", None)) else layer(z)


def build_initial(kind, eps, positions, layer, grid, stress=None, beta=None):
    """Superposition of oriented rescaled layers, minus 1, plus the stress shift."""
    positions = np.asarray(positions, dtype=float)
    if kind not in ("one", "two", "three"):
        raise ValueError(f"kind must be 'one', 'two' or 'three', got {kind!r}")
    n = {"one": 1, "two": 2, "three": 3}[kind]
    if len(positions) != n or np.any(np.diff(positions) <= 0):
        raise ValueError(f"{kind} datum needs {n} strictly increasing positions")
    if grid.h > eps / 4 * (1 + 1e-12):
        raise ValueError(f"grid spacing {grid.h:.4g} does not resolve eps/4 = {eps / 4:.4g}")
    s = layer.s
    beta = layer.beta if beta is None else beta
    stress = zero_stress() if stress is None else stress
    x = grid.x
    zeta = (1.0,) if n == 1 else ZETA[n]
    v = sum(_layer_term(layer, z * (x - p) / eps) for z, p in zip(zeta, positions))
    v = v - (0.0 if n == 1 else 1.0)
    shift = eps ** (2 * s) / beta
    v = v + shift * stress(0.0, x)
    lo, hi = LIMITS[kind]
    far = shift * stress(0.0, np.array([-grid.half_width, grid.half_width]))
    tail = TailModel.matched2(grid, v, lo + far[0], hi + far[1], 2 * s)
    return Profile(grid, v, tail, name=f"{kind}_datum")


def crossings(x, v, level=0.5):
    """Linear-interpolated level crossings with orientation signs."""
    d = v - level
    idx = np.nonzero(np.signbit(d[:-1]) != np.signbit(d[1:]))[0]
    pos = x[idx] + d[idx] / (d[idx] - d[idx + 1]) * (x[idx + 1] - x[idx])
    sgn = np.where(d[idx + 1] > d[idx], 1, -1)
    return pos, sgn


def _count(v, level):
    d = np.signbit(v - level)
    return int(np.count_nonzero(d[:-1] != d[1:]))


def evolve(v0, cfg, blowup=10.0):
    """Exponential-Euler IMEX: the stiff linear part -beta v/eps^(2s+1) is integrated exactly."""
    if v0.grid != cfg.grid:
        raise ValueError("initial datum is not on the configuration grid")
    e, s, W = cfg.epsilon, cfg.s, cfg.potential
    beta = W.beta
    op = operator_for(cfg.grid, s)
    dt = cfg.default_dt() * cfg.dt_factor if cfg.dt is None else cfg.dt
    n_steps = int(np.ceil(cfg.T / dt - 1e-9))
    dt = cfg.T / n_steps if n_steps else dt
    lam = beta / e ** (2 * s + 1)
    decay = np.exp(-lam * dt)
    phi = -np.expm1(-lam * dt) / lam
    stiff = 1.0 / e ** (2 * s + 1)
    x = cfg.grid.x
    lo, hi = cfg.limits
    snap_every = cfg.snapshot_every or cfg.T / 50
    snap_stride = max(1, int(round(snap_every / dt)))

    v = v0.values.copy()

    def tail_of(v):
        if cfg.far_field == "flat":
            return TailModel(v[0], v[-1], 2 * s)
        return TailModel.matched2(cfg.grid, v, lo, hi, 2 * s)

    times, snaps = [0.0], [Profile(cfg.grid, v.copy(), tail_of(v))]
    series_t = np.empty(n_steps + 1)
    sup = np.empty(n_steps + 1)
    counts = np.empty(n_steps + 1, dtype=int)
    series_t[0], sup[0], counts[0] = 0.0, np.max(np.abs(v)), _count(v, cfg.level)
    events = []
    zero_sigma = cfg.stress.is_zero
    for k in range(1, n_steps + 1):
        t = (k - 1) * dt
        nonlin = op.apply_values(v, tail_of(v)) / e - (W(v, 1) - beta * v) * stiff
        if not zero_sigma:
            nonlin += cfg.stress(t, x) / e
        v = decay * v + phi * nonlin
        m = float(np.max(np.abs(v)))
        if not np.isfinite(m) or m > blowup:
            raise EvolutionError(f"blow-up at t = {k * dt:.6g} (sup |v| = {m:.3g})",
                                 snaps[-1])
        series_t[k], sup[k] = k * dt, m
        counts[k] = _count(v, cfg.level)
        if counts[k] != counts[k - 1]:
            events.append({"t": k * dt, "before": int(counts[k - 1]), "after": int(counts[k])})
        if k % snap_stride == 0 or k == n_steps:
            times.append(k * dt)
            snaps.append(Profile(cfg.grid, v.copy(), tail_of(v)))
    return EvolutionResult(cfg, np.array(times), snaps, series_t, sup, counts, events, dt)


def track_levels(result, level=None):
    level = result.config.level if level is None else level
    cr, sg = [], []
    for p in result.snapshots:
        pos, sgn = crossings(p.x, p.values, level)
        cr.append(pos)
        sg.append(sgn)
    if level == result.config.level:
        events = list(result.events)
    else:
        n = [len(c) for c in cr]
        events = [{"t": float(result.times[i]), "before": n[i - 1], "after": n[i]}
                  for i in range(1, len(n)) if n[i] != n[i - 1]]
    return LevelTrack(level, result.times, cr, sg, events)


def fit_decay(result, t_start, t_end=None, floor=1e-12):
    t, y = result.series_t, result.supnorm
    t_end = t[-1] if t_end is None else t_end
    m = (t >= t_start) & (t <= t_end)
    if m.sum() < 3:
        raise ValueError("decay fit window holds fewer than 3 samples")
    if np.any(y[m] <= 0):
        raise ValueError("non-positive sup-norm inside the decay fit window")
    m &= y > floor
    tt, ly = t[m], np.log(y[m])
    slope, icpt = np.polyfit(tt, ly, 1)
    pred = slope * tt + icpt
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum((ly - pred) ** 2) / ss if ss > 0 else 1.0
    cfg = result.config
    scale = cfg.epsilon ** (2 * cfg.s + 1)
    beta = cfg.potential.beta
    rate = -slope
    return DecayFit(float(tt[0]), float(tt[-1]), float(rate), beta / (2 * scale),
                    float(rate * scale / beta), float(r2))


def settle_time(result, threshold=0.1):
    """First step after the first crossing-count drop with sup|v| <= threshold."""
    drop = track_levels(result).first_drop
    if drop is None:
        raise ValueError("no crossing-count drop in this run")
    m = (result.series_t >= drop) & (result.supnorm <= threshold)
    if not m.any():
        raise ValueError(f"sup|v| never falls to {threshold} after the drop")
    return float(result.series_t[np.argmax(m)])


def layer_distance(profile, layer, eps, a):
    return float(np.max(np.abs(profile.values - layer.u((profile.x - a) / eps))))


def fit_translation(profile, layer, eps):
    """Best translation a of u((x - a)/eps) in sup norm, searched near increasing 1/2-crossings."""
    pos, sgn = crossings(profile.x, profile.values, 0.5)
    cands = pos[sgn > 0]
    if len(cands) == 0:
        raise ValueError("profile has no increasing 1/2-crossing")
    best = None
    for c in cands:
        r = minimize_scalar(lambda a: layer_distance(profile, layer, eps, a),
                            bounds=(c - eps, c + eps), method="bounded",
                            options={"xatol": 1e-3 * profile.grid.h})
        if best is None or r.fun < best[1]:
            best = (float(r.x), float(r.fun))
    return best


def compare_to_layer(result, layer, eps=None):
    eps = result.config.epsilon if eps is None else eps
    xs, ds = [], []
    for p in result.snapshots:
        try:
            a, d = fit_translation(p, layer, eps)
        except ValueError:
            a, d = float("nan"), float("nan")
        xs.append(a)
        ds.append(d)
    if np.all(np.isnan(xs)):
        raise ValueError("no snapshot has a 1/2-crossing")
    result.x_fit, result.layer_distance = np.array(xs), np.array(ds)
    return result.x_fit, result.layer_distance


def envelope_translations(profile, layer, eps, rho, span=1.0):
    """(y, z): largest y with v <= u((x-y)/eps) + rho, smallest z with v >= u((x-z)/eps) - rho."""
    from scipy.optimize import brentq

    x, v = profile.x, profile.values
    # both gaps are nondecreasing in the shift (upper) or in minus the shift (lower)
    upper = lambda y: float(np.max(v - layer.u((x - y) / eps) - rho))
    lower = lambda z: float(np.max(layer.u((x - z) / eps) - rho - v))
    a, _ = fit_translation(profile, layer, eps)
    lo, hi = a - span, a + span
    if not (upper(lo) <= 0.0 < upper(hi) and lower(hi) <= 0.0 < lower(lo)):
        raise ValueError(f"envelope translations not bracketed within {span} of {a:.6g}")
    xtol = 1e-3 * profile.grid.h
    return brentq(upper, lo, hi, xtol=xtol), brentq(lower, lo, hi, xtol=xtol)
