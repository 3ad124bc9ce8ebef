"""Named experiments, parameter sweeps and run manifests."""
from __future__ import annotations

import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import barriers as bar
from . import evolution as ev
from . import layer as lay
from . import particles as pd
from .nonlocal_core import Grid
from .potential import make_potential, make_stress, validate_potential
from .serial import (ConfigError, sha256, write_csv, write_json,
                     write_jsonl, write_keyvalue, write_profile)

STRESS = dict(stress="zero", stress_A=0.0, stress_omega=0.0, stress_k=1.0)
_LAYER = dict(s=0.5, potential="cosine", init="tanh", half_width=60.0, n_points=6001, tol=1e-6)
_PART = dict(x0=[-0.5, 0.5], s=0.5, gamma="auto", potential="cosine", delta=0.0,
             delta_mode="auto", n_samples=2001, **STRESS)
_EVOL = dict(kind="two", epsilon=0.05, positions=[-0.5, 0.5], T="auto", s=0.5,
             potential="cosine", h_factor=0.1, half_width="auto", dt_factor=1.0,
             far_field="matched", snapshot_every="auto", threshold=0.1, **STRESS)
_BAR = dict(epsilon=0.05, x0=[-0.5, 0.5], s=0.5, potential="cosine", theta="auto",
            n_times=9, half_width="auto", ordering_delta=0.02, **STRESS)

DEFAULTS = {
    "layer": dict(_LAYER, corrector=True),
    "corrector": dict(_LAYER, exact=False),
    "particles": dict(_PART),
    "two_collide": dict(_PART),
    "three_simple": dict(_PART, x0=[0.0, 0.4, 1.0]),
    "three_triple": dict(_PART, x0=[0.0, 0.5, 1.0]),
    "evolve": dict(_EVOL),
    "decay_two": dict(_EVOL),
    "decay_three": dict(_EVOL, kind="three", positions=[-0.5, 0.0, 0.5]),
    "heteroclinic": dict(_EVOL, kind="three", positions=[-0.5, 0.0, 0.5], T=0.3),
    "barrier_two": dict(_BAR),
    "barrier_three": dict(_BAR, x0=[-0.5, 0.0, 0.5]),
    "barrier-check": dict(_BAR, variant="two_upper", delta=0.0, start="none"),
    "sweep": dict(base="two_collide", parameter="delta", values=[]),
}
SCENARIOS = ("layer", "corrector", "two_collide", "three_simple", "three_triple", "barrier_two",
             "barrier_three", "decay_two", "decay_three", "heteroclinic", "sweep")
COMMANDS = tuple(DEFAULTS)
SWEEP_COLUMNS = ("T_c", "min_residual", "rate", "layer_distance")


@dataclass
class ScenarioConfig:
    name: str
    params: dict = field(default_factory=dict)
    out: Path = Path("pnlab_out")
    seed: int = 0  # reserved; the numerics are deterministic

    def __post_init__(self):
        if self.name not in DEFAULTS:
            raise ConfigError(f"unknown scenario {self.name!r}; choose from {sorted(DEFAULTS)}")
        self.out = Path(self.out)
        self.params = validate(self.name, self.params)


@dataclass
class RunManifest:
    scenario: str
    config: dict
    version: str
    timings: dict
    files: list  # [{"path", "sha256"}]
    metrics: dict
    checks: dict
    status: str  # ok | failed | error
    error: dict | None = None

    @property
    def ok(self):
        return self.status == "ok"

    def as_dict(self):
        return {"scenario": self.scenario, "config": self.config, "version": self.version,
                "timings": self.timings, "files": self.files, "metrics": self.metrics,
                "checks": self.checks, "status": self.status, "error": self.error}


# -- configuration ------------------------------------------------------------


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}")
        return value
    if isinstance(value, str) and value == "auto" and default == "auto":
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float) or default == "auto":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be an array, got {value!r}")
        if key == "values":
            return list(value)
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an array of numbers, got {value!r}") from None
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    return value


def validate(name, params):
    """Merge defaults, coerce types, and run the module validators before anything runs."""
    params = dict(params)
    params.pop("seed", None)
    if name == "sweep":
        base = params.get("base", DEFAULTS["sweep"]["base"])
        if base not in DEFAULTS or base == "sweep":
            raise ConfigError(f"sweep base must be a scenario, got {base!r}")
        own = {k: params.pop(k) for k in ("base", "parameter", "values") if k in params}
        out = validate_sweep_fields(dict(DEFAULTS["sweep"], **own))
        out["base_params"] = validate(base, params)
        return out
    defaults = DEFAULTS[name]
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown parameters for {name}: {unknown}")
    p = {k: _coerce(k, params[k], d) if k in params else d for k, d in defaults.items()}
    if "s" in p and not 0.0 < p["s"] < 1.0:
        raise ConfigError(f"s must lie in (0, 1), got {p['s']}")
    if "potential" in p:
        try:
            validate_potential(make_potential(p["potential"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if "stress" in p:
        try:
            make_stress(p["stress"], A=p["stress_A"], omega=p["stress_omega"], k=p["stress_k"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if "epsilon" in p and not 0.0 < p["epsilon"] <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {p['epsilon']}")
    for key in ("x0", "positions"):
        if key in p and (len(p[key]) < 1 or np.any(np.diff(p[key]) <= 0)):
            raise ConfigError(f"{key} must be strictly increasing, got {p[key]}")
    if name in ("particles", "two_collide", "three_simple", "three_triple"):
        try:
            _particle_config(p, gamma=1.0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if "kind" in p:
        n = {"one": 1, "two": 2, "three": 3}.get(p["kind"])
        if n is None or len(p["positions"]) != n:
            raise ConfigError(f"kind {p['kind']!r} needs matching positions, got {p['positions']}")
        if p["far_field"] not in ("matched", "flat"):
            raise ConfigError(f"far_field must be matched or flat, got {p['far_field']!r}")
    if "variant" in p and p["variant"] not in bar.VARIANTS:
        raise ConfigError(f"unknown barrier variant {p['variant']!r}")
    return p


def validate_sweep_fields(p):
    if not isinstance(p["parameter"], str):
        raise ConfigError("sweep parameter must be a name")
    if not isinstance(p["values"], list):
        raise ConfigError("sweep values must be an array")
    return p


# -- helpers ------------------------------------------------------------------


class _Recorder:
    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files, self.timings, self.metrics, self.checks = [], {}, {}, {}

    @contextmanager
    def timed(self, name):
        t0 = time.perf_counter()
        yield
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def add(self, *paths):
        for p in paths:
            self.files.append(Path(p))

    def check(self, name, ok):
        self.checks[name] = bool(ok)


def _stress(p):
    return make_stress(p["stress"], A=p["stress_A"], omega=p["stress_omega"], k=p["stress_k"])


def _closed_form_case(p):
    return p["s"] == 0.5 and p["potential"] == "cosine"


def _layer_for(p):
    """Closed-form layer when it exists, otherwise the relaxed one."""
    W = make_potential(p["potential"])
    if _closed_form_case(p):
        return lay.exact_layer(potential=W)
    return lay.compute_layer(p["s"], W)


def _particle_config(p, gamma=None):
    if gamma is None:
        gamma = pd.GAMMA_HALF if _closed_form_case(p) else _layer_for(p).gamma
        if p["gamma"] != "auto":
            gamma = p["gamma"]
    mode = p["delta_mode"]
    if mode == "auto":
        mode = "widen" if p["delta"] > 0 else "none"
    return pd.ParticleConfig(tuple(p["x0"]), s=p["s"], gamma=gamma, stress=_stress(p),
                             delta=p["delta"], delta_mode=mode)


def _grid(p):
    hw = None if p["half_width"] == "auto" else p["half_width"]
    return ev.physical_grid(p["epsilon"], hw, p["h_factor"] if "h_factor" in p else 0.1)


# -- scenarios ----------------------------------------------------------------


def _run_layer(p, rec, with_corrector=True):
    W = make_potential(p["potential"])
    grid = Grid(p["half_width"], p["n_points"])
    with rec.timed("compute_layer"):
        L = lay.compute_layer(p["s"], W, grid, init=p["init"], tol=p["tol"])
    rec.add(*write_profile(rec.out / "u.csv", L.u), *write_profile(rec.out / "u_prime.csv", L.u_prime))
    consts = {"s": L.s, "beta": L.beta, "gamma": L.gamma, "eta": L.eta,
              "kappa_fit": L.kappa_fit, "residual": L.residual, "iterations": L.iterations}
    rec.add(write_keyvalue(rec.out / "constants.txt", consts))
    rec.metrics.update(gamma=L.gamma, eta=L.eta, kappa_fit=L.kappa_fit, residual=L.residual)
    rec.check("layer_residual", L.residual <= p["tol"])
    if _closed_form_case(p):
        m = np.abs(grid.x) <= 20.0
        err = float(np.max(np.abs(L.u.values[m] - lay.exact_layer_values(grid.x[m]))))
        rec.metrics["sup_error_exact"] = err
        rec.check("matches_closed_form", err <= 1e-3)
        rec.check("gamma_2pi2", abs(L.gamma / (2 * np.pi ** 2) - 1) <= 5e-3)
    if with_corrector:
        with rec.timed("compute_corrector"):
            C = lay.compute_corrector(L)
        rec.add(*write_profile(rec.out / "psi.csv", C.psi))
        rec.metrics["corrector_residual"] = C.residual
        rec.check("corrector_residual", C.residual <= 1e-4)
    return L


def run_layer(p, rec):
    _run_layer(p, rec, p["corrector"])


def run_corrector(p, rec):
    if p["exact"]:
        if not _closed_form_case(p):
            raise ConfigError("exact = true needs s = 0.5 and the cosine potential")
        L = lay.exact_layer(Grid(p["half_width"], p["n_points"]))
    else:
        L = _run_layer(p, rec, with_corrector=False)
    with rec.timed("compute_corrector"):
        C = lay.compute_corrector(L)
    rec.add(*write_profile(rec.out / "psi.csv", C.psi))
    info = {"inner_product": C.inner_product, "multiplier": C.multiplier,
            "solvability": C.solvability, "residual": C.residual}
    if p["s"] != 0.5:
        from .nonlocal_core import derivative
        info["psi_prime_decay"] = lay.decay_exponent(derivative(C.psi), (10.0, 20.0))
    rec.add(write_keyvalue(rec.out / "corrector.txt", info))
    rec.metrics.update(info)
    rec.check("corrector_residual", C.residual <= 1e-4)
    rec.check("orthogonal", abs(C.inner_product) <= 1e-8)


def _write_trajectory(rec, traj, report):
    N = traj.positions.shape[1]
    th = traj.gaps.min(axis=1)
    rows = (list([t]) + list(x) + [g, g ** (2 * traj.cfg.s + 1)]
            for t, x, g in zip(traj.times, traj.positions, th))
    header = ["t"] + [f"x{i + 1}" for i in range(N)] + ["theta_min", "upsilon_min"]
    rec.add(write_csv(rec.out / "trajectory.csv", header, rows))
    rec.add(write_json(rec.out / "collision.json", report.as_dict()))


def run_particles(p, rec):
    cfg = _particle_config(p)
    with rec.timed("integrate_particles"):
        traj, report = pd.integrate_particles(cfg, pd._t_max_guess(cfg), n_samples=p["n_samples"])
    _write_trajectory(rec, traj, report)
    rec.metrics.update(T_c=report.T_c, kind=report.kind)
    plain = cfg.stress.is_zero and cfg.delta == 0.0
    if plain and (cfg.N == 2 or np.isclose(*np.diff(cfg.x0), rtol=0, atol=1e-14)):
        ref = pd.collision_time_closed_form(cfg)
        rec.metrics["T_c_closed_form"] = ref
        rec.check("T_c_closed_form", abs(report.T_c / ref - 1) <= 1e-4)
    return cfg, report


def run_two_collide(p, rec):
    cfg, _ = run_particles(p, rec)
    if cfg.N != 2:
        raise ConfigError("two_collide needs two particles")


def run_three_simple(p, rec):
    cfg, report = run_particles(p, rec)
    if cfg.N != 3:
        raise ConfigError("three_simple needs three particles")
    rec.check("simple", report.kind == "simple")
    if cfg.stress.is_zero and cfg.delta == 0.0:
        th = np.diff(cfg.x0)
        want = (1, 2) if th[0] < th[1] else (2, 3)
        rec.check("smaller_gap_pair", report.pairs == (want,))


def run_three_triple(p, rec):
    cfg, report = run_particles(p, rec)
    if cfg.N != 3:
        raise ConfigError("three_triple needs three particles")
    rec.check("triple", report.kind == "triple")


def _evolution(p, rec, L=None):
    e, grid = p["epsilon"], _grid(p)
    L = _layer_for(p) if L is None else L
    stress = _stress(p)
    kind = p["kind"]
    v0 = ev.build_initial(kind, e, p["positions"], L, grid, stress)
    if p["T"] == "auto":
        # collision time of the zero-stress particle system plus 40 relaxation times
        th = np.diff(p["positions"]).min() if kind != "one" else 1.0
        T = th ** (2 * L.s + 1) / (2 * np.pi ** 2) + 40 * e ** (2 * L.s + 1) / L.beta
    else:
        T = p["T"]
    snap = None if p["snapshot_every"] == "auto" else p["snapshot_every"]
    cfg = ev.EvolutionConfig(e, grid, T, L.s, L.potential, stress, ev.LIMITS[kind],
                             p["far_field"], dt_factor=p["dt_factor"], snapshot_every=snap)
    with rec.timed("evolve"):
        res = ev.evolve(v0, cfg)
    snaps = rec.out / "snapshots"
    snaps.mkdir(exist_ok=True)
    for i, prof in enumerate(res.snapshots):
        rec.add(*write_profile(snaps / f"snap_{i:04d}.csv", prof))
    if kind == "two":
        dist = np.array([float(np.max(np.abs(s.values))) for s in res.snapshots])
        res.layer_distance = dist
    else:
        with rec.timed("compare_to_layer"):
            ev.compare_to_layer(res, L, e)
    sup_at = np.interp(res.times, res.series_t, res.supnorm)
    rec.add(write_csv(rec.out / "series.csv", ["t", "supnorm", "layer_distance"],
                      zip(res.times, sup_at, res.layer_distance)))
    rec.add(write_jsonl(rec.out / "events.jsonl", res.events))
    rec.metrics.update(T=T, dt=res.dt, final_sup=float(res.supnorm[-1]),
                       layer_distance=float(res.layer_distance[-1]),
                       first_drop=ev.track_levels(res).first_drop)
    rec.check("crossings_never_increase", all(e_["after"] <= e_["before"] for e_ in res.events))
    return res, L


def run_evolve(p, rec):
    _evolution(p, rec)


def run_decay_two(p, rec):
    if p["kind"] != "two":
        raise ConfigError("decay_two needs kind = two")
    res, L = _evolution(p, rec)
    t0 = ev.settle_time(res, p["threshold"])
    fit = ev.fit_decay(res, t0)
    rec.metrics.update(rate=fit.rate, ratio=fit.ratio, r2=fit.r2, fit_start=t0)
    rec.check("rate_ratio", fit.ratio >= 0.5)
    rec.check("fit_r2", fit.r2 >= 0.99)


def _distance_decay(res, L, threshold, floor=1e-4):
    t, d = res.times, res.layer_distance
    m = (t >= (ev.track_levels(res).first_drop or 0.0)) & (d <= threshold) & (d >= floor)
    if m.sum() < 3:
        raise ValueError("too few snapshots in the distance decay window")
    slope, _ = np.polyfit(t[m], np.log(d[m]), 1)
    return float(-slope), float(-slope * res.config.epsilon ** (2 * L.s + 1) / L.beta)


def run_decay_three(p, rec):
    if p["kind"] != "three":
        raise ConfigError("decay_three needs kind = three")
    res, L = _evolution(p, rec)
    rate, ratio = _distance_decay(res, L, p["threshold"])
    rec.metrics.update(rate=rate, ratio=ratio)
    rec.check("rate_ratio", ratio >= 0.5)
    rec.check("final_distance", res.layer_distance[-1] <= 0.02)


def run_heteroclinic(p, rec):
    if p["kind"] != "three":
        raise ConfigError("heteroclinic needs kind = three")
    res, L = _evolution(p, rec)
    e, d, t = p["epsilon"], res.layer_distance, res.times
    drop = ev.track_levels(res).first_drop
    if drop is None:
        raise ValueError("no collision in the three-layer run")
    i = int(np.argmax((t >= drop) & (d <= p["threshold"])))
    rho = float(d[i])
    y, z = ev.envelope_translations(res.snapshots[i], L, e, rho)
    K = bar.moving_layer_K(L, e)
    x_end = float(res.x_fit[-1])
    rec.metrics.update(T1=float(t[i]), rho=rho, y=y, z=z, K=K, x_final=x_end,
                       layer_distance=float(d[-1]))
    rec.check("final_distance", d[-1] <= 0.02)
    rec.check("distance_decreasing", bool(np.all(np.diff(d[i:]) <= 0.0)))
    rec.check("translation_window", y - K * rho < x_end < z + K * rho)


def _dump_residual(rec, rep, stem):
    rec.add(write_json(rec.out / f"{stem}.json", rep.as_dict()))
    rows = ((t, x, v) for t, row in zip(rep.times, rep.field) for x, v in zip(rep.x, row))
    rec.add(write_csv(rec.out / f"{stem}_field.csv", ["t", "x", "residual"], rows))


def _barrier_template(p, variant, L, grid=None, start=None):
    grid = _grid(dict(p, h_factor=0.1)) if grid is None else grid
    return bar.BarrierTemplate(variant, p["epsilon"], tuple(p["x0"]), L, None, _stress(p), grid,
                               start)


def _corrector_for(L):
    # the corrector vanishes identically for the closed-form case
    return None if L.s == 0.5 and L.potential.name == "cosine" else lay.compute_corrector(L)


def _calibrate(p, rec, tp, theta):
    with rec.timed("residual_field"):
        rep0 = bar.residual_field(tp.spec(0.0), theta, n_times=p["n_times"])
    _dump_residual(rec, rep0, "residual_delta0")
    rec.metrics.update(min_residual_delta0=rep0.min)
    try:
        with rec.timed("calibrate_delta"):
            delta, rep = bar.calibrate_delta(tp, theta, n_times=p["n_times"])
    except bar.BarrierError as exc:
        rec.metrics["calibration_error"] = str(exc)
        rec.check("calibrated_supersolution", False)
        return None
    _dump_residual(rec, rep, "residual")
    rec.metrics.update(delta=delta, min_residual=rep.min)
    rec.check("calibrated_supersolution", rep.min >= -bar.residual_tolerance(p["epsilon"], p["s"]))
    return delta


def run_barrier_two(p, rec):
    if len(p["x0"]) != 2:
        raise ConfigError("barrier_two needs two positions")
    e = p["epsilon"]
    theta = e ** 0.4 if p["theta"] == "auto" else p["theta"]
    L = _layer_for(p)
    corr = _corrector_for(L)
    tp = _barrier_template(p, "two_upper", L)
    tp.corrector = corr
    delta = _calibrate(p, rec, tp, theta)
    # orderings use the calibrated delta, or the configured fallback when none exists
    dchk = p["ordering_delta"] if delta is None else delta
    rec.metrics["ordering_delta"] = dchk
    spec = tp.spec(dchk)
    v0 = ev.build_initial("two", e, p["x0"], L, spec.grid, _stress(p))
    ok, worst, _ = bar.check_ordering(v0, bar.assemble_barrier(spec, 0.0))
    rec.metrics["initial_ordering_worst"] = worst
    rec.check("initial_below_barrier", ok)
    T1 = bar.gap_time(spec, theta)
    if np.isfinite(T1) and T1 < spec.trajectory.t_end:
        K, M = pd.choose_constants(L.s, _stress(p).bound, dchk, theta)
        xb = spec.trajectory.positions_at(T1)
        hw = float(np.ceil(max(abs(xb[0] - theta), abs(xb[1] + K * theta)) + 2.0))
        big = ev.physical_grid(e, max(hw, spec.grid.half_width))
        tb = _barrier_template(p, "two_upper", L, big)
        th = _barrier_template(p, "two_hat", L, big, pd.hat_start(xb, theta, K))
        tb.corrector = th.corrector = corr
        ok, worst, _ = bar.check_ordering(bar.assemble_barrier(tb.spec(dchk), T1),
                                          bar.assemble_barrier(th.spec(dchk), 0.0))
        rec.metrics.update(K=K, M=M, T1=T1, hat_ordering_worst=worst)
        rec.check("hat_above_bar", ok)


def run_barrier_three(p, rec):
    if len(p["x0"]) != 3:
        raise ConfigError("barrier_three needs three positions")
    e = p["epsilon"]
    theta = e ** 0.4 if p["theta"] == "auto" else p["theta"]
    L = _layer_for(p)
    corr = _corrector_for(L)
    tp = _barrier_template(p, "three_upper", L)
    tl = _barrier_template(p, "three_lower", L)
    tp.corrector = tl.corrector = corr
    delta = _calibrate(p, rec, tp, theta)
    with rec.timed("residual_field"):
        rep_l = bar.residual_field(tl.spec(0.0), theta, n_times=p["n_times"])
    rec.metrics["min_residual_lower_delta0"] = rep_l.min
    dchk = p["ordering_delta"] if delta is None else delta
    rec.metrics["ordering_delta"] = dchk
    up, lo = tp.spec(dchk), tl.spec(dchk)
    v0 = ev.build_initial("three", e, p["x0"], L, up.grid, _stress(p))
    ok1, w1, _ = bar.check_ordering(bar.assemble_barrier(lo, 0.0), v0)
    ok2, w2, _ = bar.check_ordering(v0, bar.assemble_barrier(up, 0.0))
    rec.metrics.update(lower_ordering_worst=w1, upper_ordering_worst=w2)
    rec.check("lower_below_initial", ok1)
    rec.check("initial_below_upper", ok2)
    C1 = bar.three_tail_bound(L, e, theta)
    C2 = bar.three_tail_bound(L, e / 2, (e / 2) ** 0.4)
    rec.metrics.update(tail_constant=C1, tail_constant_half=C2)
    rec.check("tail_constant_stable", abs(C2 / C1 - 1) <= 0.2)


def run_barrier_check(p, rec):
    variant = p["variant"]
    n = bar.VARIANTS[variant][0]
    if len(p["x0"]) != n:
        raise ConfigError(f"{variant} needs {n} positions")
    start = None if p["start"] == "none" else tuple(float(v) for v in p["start"].split(","))
    L = _layer_for(p)
    tp = _barrier_template(p, variant, L, start=start)
    tp.corrector = _corrector_for(L)
    theta = p["epsilon"] ** 0.4 if p["theta"] == "auto" else p["theta"]
    with rec.timed("residual_field"):
        rep = bar.residual_field(tp.spec(p["delta"]), theta, n_times=p["n_times"])
    _dump_residual(rec, rep, "residual")
    rec.metrics.update(min_residual=rep.min, argmin_t=rep.argmin[0], argmin_x=rep.argmin[1])
    rec.check("supersolution", rep.min >= -bar.residual_tolerance(p["epsilon"], p["s"]))


RUNNERS = {
    "layer": run_layer, "corrector": run_corrector, "particles": run_particles,
    "two_collide": run_two_collide, "three_simple": run_three_simple,
    "three_triple": run_three_triple, "evolve": run_evolve, "decay_two": run_decay_two,
    "decay_three": run_decay_three, "heteroclinic": run_heteroclinic,
    "barrier_two": run_barrier_two, "barrier_three": run_barrier_three,
    "barrier-check": run_barrier_check,
}


# -- orchestration --------------------------------------------------------------


def _file_entries(out, files):
    return [{"path": str(f.relative_to(out)), "sha256": sha256(f)} for f in files]


def run_scenario(cfg):
    """Run one scenario into cfg.out and write manifest.json; sweeps go through sweep()."""
    if cfg.name == "sweep":
        sp = cfg.params
        return sweep(sp["base"], sp["base_params"], sp["parameter"], sp["values"], cfg.out)
    rec = _Recorder(cfg.out)
    status, error = "ok", None
    try:
        with rec.timed("total"):
            RUNNERS[cfg.name](cfg.params, rec)
        if not all(rec.checks.values()):
            status = "failed"
    except Exception as exc:  # any module error ends up in the manifest
        status = "error"
        error = {"type": type(exc).__name__, "message": str(exc),
                 "traceback": traceback.format_exc(limit=5)}
    m = RunManifest(cfg.name, cfg.params, __version__, rec.timings,
                    _file_entries(rec.out, rec.files), rec.metrics, rec.checks, status, error)
    write_json(rec.out / "manifest.json", m.as_dict())
    return m


def verify_manifest(out):
    """(ok, problems): every listed file present with a matching checksum."""
    import json
    out = Path(out)
    data = json.loads((out / "manifest.json").read_text())
    problems = []
    for f in data["files"]:
        path = out / f["path"]
        if not path.exists():
            problems.append(f"missing {f['path']}")
        elif sha256(path) != f["sha256"]:
            problems.append(f"checksum mismatch {f['path']}")
    return not problems, problems


def _one(args):
    base, params, out = args
    return run_scenario(ScenarioConfig(base, params, out)).as_dict()


def thread_cap():
    raw = os.environ.get("PNLAB_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PNLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"PNLAB_THREADS must be a positive integer, got {raw!r}")
    return n


def sweep(base, params, parameter, values, out):
    """Run base once per value (in parallel up to PNLAB_THREADS) and aggregate sweep.csv."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if parameter not in DEFAULTS[base]:
        raise ConfigError(f"{base} has no parameter {parameter!r}")
    values = sorted(values)
    jobs = []
    for v in values:
        p = validate(base, dict(params, **{parameter: v}))
        jobs.append((base, p, out / f"{parameter}={v}"))
    workers = min(thread_cap(), len(jobs))
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, jobs))
    else:
        results = [_one(j) for j in jobs]
    rows = []
    for v, r in zip(values, results):
        met = r["metrics"]
        rows.append([v, r["status"]] + [met.get(c, float("nan")) for c in SWEEP_COLUMNS])
    csv_path = write_csv(out / "sweep.csv", [parameter, "status", *SWEEP_COLUMNS], rows)
    files = [csv_path]
    for j in jobs:
        files.append(j[2] / "manifest.json")
    status = "ok" if all(r["status"] == "ok" for r in results) else "failed"
    m = RunManifest("sweep", {"base": base, "parameter": parameter, "values": values,
                              "base_params": params}, __version__,
                    {"total": time.perf_counter() - t0}, _file_entries(out, files),
                    {"rows": len(rows)}, {f"{parameter}={v}": r["status"] == "ok"
                                          for v, r in zip(values, results)}, status)
    write_json(out / "manifest.json", m.as_dict())
    return m
