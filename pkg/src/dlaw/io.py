"""Run persistence: records as CSV or JSON, configs as JSON, and a manifest
written last so readers can tell complete runs from partial ones."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import tempfile
import time
from pathlib import Path
from typing import Optional

from . import __version__
from .errors import ConfigError, IOFailure
from .experiments import FIELDS, ExperimentRecord, RunConfig, RunResult
from .fractal import IFSMap, IFSSystem
from .norms import NormSpec, parse_rational, rational_str

SCHEMA_VERSION = 1
MANIFEST = "manifest.json"
_INT_FIELDS = {"trial", "count_N", "seed"}


def _atomic_write(path: Path, data: bytes) -> str:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IOFailure(f"could not write {path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def records_bytes(records, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in FIELDS])
        return buf.getvalue().encode()
    if fmt == "json":
        rows = [{f: getattr(r, f) for f in FIELDS} for r in records]
        return (json.dumps(rows, indent=1, allow_nan=True) + "\n").encode()
    raise ValueError(f"unknown format {fmt!r}")


def write_records(records, path, fmt: str = "csv") -> str:
    """Write records atomically; returns the sha256 of the file."""
    return _atomic_write(Path(path), records_bytes(records, fmt))


def read_records(path, fmt: Optional[str] = None) -> list:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    text = path.read_text()
    if fmt == "csv":
        rows = list(csv.DictReader(io.StringIO(text)))
    elif fmt == "json":
        rows = json.loads(text)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    out = []
    for row in rows:
        vals = {f: (int(row[f]) if f in _INT_FIELDS else float(row[f])) for f in FIELDS}
        out.append(ExperimentRecord(**vals))
    return out


# --------------------------------------------------------------------------
# config


def norm_to_json(norm: NormSpec) -> dict:
    return {"kind": norm.kind, "dimension": norm.dimension, "scale": rational_str(norm.scale),
            "weights": None if norm.weights is None else [rational_str(w) for w in norm.weights]}


def norm_from_json(obj: dict) -> NormSpec:
    weights = obj.get("weights")
    return NormSpec(obj.get("kind", "sup"), int(obj["dimension"]),
                    parse_rational(obj.get("scale", "1")),
                    None if weights is None else tuple(parse_rational(w) for w in weights))


def _mat(rows) -> list:
    return [[rational_str(x) for x in r] for r in rows]


def ifs_to_json(sys: IFSSystem) -> dict:
    return {"rho": rational_str(sys.rho),
            "maps": [{"O": _mat(f.O), "O_prime": _mat(f.O_prime), "w": _mat(f.w)} for f in sys.maps],
            "weights": [rational_str(w) for w in sys.symbol_weights]}


def ifs_from_json(obj: dict) -> IFSSystem:
    rho = parse_rational(obj["rho"])
    maps = []
    for mp in obj["maps"]:
        conv = lambda rows: tuple(tuple(parse_rational(x) for x in r) for r in rows)  # noqa: E731
        maps.append(IFSMap(rho, conv(mp["O"]), conv(mp["O_prime"]), conv(mp["w"])))
    weights = obj.get("weights") or [rational_str(parse_rational(1) / len(maps))] * len(maps)
    return IFSSystem(tuple(maps), tuple(parse_rational(w) for w in weights))


_CONFIG_KEYS = {f.name for f in dataclasses.fields(RunConfig)} | {"version"}


def config_to_json(config: RunConfig) -> dict:
    out = {"version": SCHEMA_VERSION}
    for f in dataclasses.fields(RunConfig):
        v = getattr(config, f.name)
        if f.name == "norms" and v is not None:
            v = [norm_to_json(x) for x in v]
        elif f.name == "ifs" and v is not None:
            v = ifs_to_json(v)
        elif f.name == "grid" and v is not None:
            v = list(v)
        out[f.name] = v
    return out


def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def config_from_json(obj: dict, text: str = "") -> RunConfig:
    """Build a RunConfig; errors carry the line of the offending key."""
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object", 1)
    for key in obj:
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", _line_of(text, key))
    version = obj.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r}", _line_of(text, "version"))
    kwargs = {}
    for key, value in obj.items():
        if key == "version":
            continue
        try:
            if key == "norms" and value is not None:
                value = tuple(norm_from_json(x) for x in value)
            elif key == "ifs" and value is not None:
                value = ifs_from_json(value)
            elif key == "grid" and value is not None:
                value = tuple(float(x) for x in value)
            elif key in ("m", "n", "horizon", "trials", "seed", "cutoff", "threads", "r", "samples"):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ValueError(f"{key} must be an integer")
            elif key == "bits" and value is not None and not isinstance(value, int):
                raise ValueError("bits must be an integer")
        except (ValueError, KeyError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", _line_of(text, key)) from None
        kwargs[key] = value
    if "mode" not in kwargs:
        raise ConfigError("missing required key 'mode'", 1)
    try:
        return RunConfig(**kwargs)
    except ConfigError as exc:
        if exc.line is None:
            key = _guess_key(str(exc))
            raise ConfigError(exc.message, _line_of(text, key) if key else None) from None
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _guess_key(message: str) -> Optional[str]:
    for key in sorted(_CONFIG_KEYS, key=len, reverse=True):
        if message.startswith(key) or f" {key}" in message or f"'{key}'" in message:
            return key
    return None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return config_from_json(obj, text)


def dump_config(config: RunConfig) -> str:
    return json.dumps(config_to_json(config), indent=2)


# --------------------------------------------------------------------------
# run directories


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def write_run(result: RunResult, out_dir, fmt: str = "csv", started: Optional[float] = None) -> dict:
    """records, summary, then the manifest (the commit marker)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stale = out / MANIFEST
    if stale.exists():
        stale.unlink()
    files = {}
    rec_name = f"records.{fmt}"
    files[rec_name] = write_records(result.records, out / rec_name, fmt)
    summary = {"summary": result.summary, "failures": result.failures}
    files["summary.json"] = _atomic_write(
        out / "summary.json", (json.dumps(_jsonable(summary), indent=1) + "\n").encode())
    cal = {k: result.summary[k] for k in ("C", "C0", "M_hat") if k in result.summary}
    manifest = {
        "schema": SCHEMA_VERSION,
        "code_version": __version__,
        "config": config_to_json(result.config),
        "seed": result.config.seed,
        "started": started if started is not None else time.time(),
        "finished": time.time(),
        "calibration": cal,
        "files": files,
        "theta_digests": {str(k): v for k, v in sorted(result.digests.items())},
    }
    _atomic_write(out / MANIFEST, (json.dumps(_jsonable(manifest), indent=1) + "\n").encode())
    return manifest


def read_run(out_dir):
    """(manifest, records) for a complete run, or None without a manifest.

    Raises :class:`IOFailure` if a file no longer matches its digest.
    """
    out = Path(out_dir)
    mpath = out / MANIFEST
    if not mpath.exists():
        return None
    manifest = json.loads(mpath.read_text())
    records = []
    for name, digest in manifest["files"].items():
        data = (out / name).read_bytes()
        if hashlib.sha256(data).hexdigest() != digest:
            raise IOFailure(f"digest mismatch for {name}")
        if name.startswith("records."):
            records = read_records(out / name)
    return manifest, records
