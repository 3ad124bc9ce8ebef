"""Plain-text serialization: profile CSVs with key=value sidecars, configs, checksums."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .nonlocal_core import Grid, Profile, TailModel


class ConfigError(ValueError):
    pass


def fmt(v):
    """17 significant digits, enough to round-trip a double."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_keyvalue(path, data):
    path = Path(path)
    path.write_text("".join(f"{k} = {fmt(v)}\n" for k, v in data.items()))
    return path


def parse_value(raw):
    raw = raw.strip()
    if raw == "":
        raise ConfigError("empty value")
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if raw[0] in "\"'":
        if len(raw) < 2 or raw[-1] != raw[0]:
            raise ConfigError(f"unterminated string {raw!r}")
        return raw[1:-1]
    if raw[0] == "[":
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad array {raw!r}: {exc}") from None
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def parse_keyvalue(text):
    """Flat key = value lines; '#' starts a comment; TOML-style scalars and numeric arrays."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        k, v = k.strip(), v.strip()
        if not v.startswith(("'", '"')):
            v = v.split("#", 1)[0]
        if not k or not k.replace("_", "").replace("-", "").isalnum():
            raise ConfigError(f"line {n}: bad key {k!r}")
        if k in out:
            raise ConfigError(f"line {n}: duplicate key {k!r}")
        try:
            out[k] = parse_value(v)
        except ConfigError as exc:
            raise ConfigError(f"line {n}: {exc}") from None
    return out


def read_keyvalue(path):
    return parse_keyvalue(Path(path).read_text(encoding="utf-8"))


def profile_meta(p):
    t, g = p.tail, p.grid
    return {"name": p.name, "half_width": g.half_width, "n_points": g.n_points,
            "monotone": p.monotone, "tail_order": t.order,
            "tail_left_limit": t.left_limit, "tail_right_limit": t.right_limit,
            "tail_left_coeff": t.left_coeff, "tail_right_coeff": t.right_coeff,
            "tail_left_coeff2": t.left_coeff2, "tail_right_coeff2": t.right_coeff2}


def write_profile(path, p):
    """CSV x,value plus a path.meta sidecar; returns both paths."""
    path = Path(path)
    write_csv(path, ["x", "value"], zip(p.x, p.values))
    meta = write_keyvalue(path.with_name(path.name + ".meta"), profile_meta(p))
    return path, meta


def read_profile(path):
    path = Path(path)
    meta = read_keyvalue(path.with_name(path.name + ".meta"))
    _, rows = read_csv(path)
    vals = np.array([float(r[1]) for r in rows])
    grid = Grid(float(meta["half_width"]), int(meta["n_points"]))
    tail = TailModel(float(meta["tail_left_limit"]), float(meta["tail_right_limit"]),
                     float(meta["tail_order"]), float(meta["tail_left_coeff"]),
                     float(meta["tail_right_coeff"]), float(meta.get("tail_left_coeff2", 0.0)),
                     float(meta.get("tail_right_coeff2", 0.0)))
    return Profile(grid, vals, tail, monotone=bool(meta["monotone"]), name=str(meta["name"]))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_jsonl(path, records):
    path = Path(path)
    path.write_text("".join(json.dumps(_plain(r), sort_keys=True) + "\n" for r in records))
    return path


def sha256(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path):
    """Read a config file; an empty file is a validation error."""
    params = read_keyvalue(path)
    if not params:
        raise ConfigError(f"configuration {path} is empty")
    return params
