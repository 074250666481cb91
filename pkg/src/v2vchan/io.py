"""File formats: map and parameter documents, trajectories, tracks, realizations and tensors.

Text documents are JSON validated against schemas; validation errors carry
the line of the offending element. Array products go into a small binary
container: a magic line, a little-endian u64 header length, a JSON header
and a little-endian row-major complex payload.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import io as _io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema
import numpy as np
from numpy.typing import ArrayLike

from . import __version__
from .errors import ConfigError, DataError
from .geometry import (AntennaElement, AntennaLayout, AreaPolygon, BuildingPolygon,
                       IntersectionMap, VehicleTrajectory, WallSegment)
from .metrics import MetricRow
from .pathgain import AngularGainParams
from .scatterers import Scatterer, ScattererClass, ScattererRealization
from .synthesis import ChannelTensor

MAGIC = b"V2VCHAN-ARRAY\n"
CONTAINER_VERSION = 1
_DTYPES = {"complex128": "<c16", "complex64": "<c8", "float64": "<f8"}

PathLike = str | Path

# ---------------------------------------------------------------- location-aware JSON


def _line_map(text: str) -> dict[tuple, int]:
    """Line number (1-based) of every value in a JSON document, keyed by its path."""
    dec = json.JSONDecoder()
    ws = " \t\n\r"
    lines: dict[tuple, int] = {}

    breaks = [i for i, ch in enumerate(text) if ch == "\n"]

    def line_of(i: int) -> int:
        return bisect.bisect_left(breaks, i) + 1

    def skip(i: int) -> int:
        while i < len(text) and text[i] in ws:
            i += 1
        return i

    def walk(i: int, path: tuple) -> int:
        i = skip(i)
        lines[path] = line_of(i)
        ch = text[i]
        if ch == "{":
            i = skip(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key, i = json.decoder.scanstring(text, skip(i) + 1)
                i = skip(i) + 1                      # ':'
                i = skip(walk(i, path + (key,)))
                if text[i] == "}":
                    return i + 1
                i += 1                               # ','
        if ch == "[":
            i = skip(i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = skip(walk(i, path + (k,)))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = dec.raw_decode(text, i)
        return end

    walk(0, ())
    return lines


@dataclass
class LocatedDocument:
    data: Any
    source: str
    lines: dict[tuple, int] = field(default_factory=dict)

    def line(self, path: Sequence) -> int:
        p = tuple(path)
        while p not in self.lines and p:
            p = p[:-1]
        return self.lines.get(p, 1)

    def where(self, path: Sequence) -> str:
        loc = "/".join(str(x) for x in path) or "<root>"
        return f"{self.source}:{self.line(path)} ({loc})"


def load_document(path: PathLike, schema: Optional[dict] = None,
                  error: type[Exception] = ConfigError) -> LocatedDocument:
    """Parse a JSON file and validate it, reporting errors as ``file:line (path): message``."""
    src = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise error(f"{src}: cannot read ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise error(f"{src}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    doc = LocatedDocument(data, src, _line_map(text))
    if schema is not None:
        errs = sorted(jsonschema.Draft202012Validator(schema).iter_errors(data),
                      key=lambda e: (doc.line(e.absolute_path), list(e.absolute_path)))
        if errs:
            e = errs[0]
            raise error(f"{doc.where(e.absolute_path)}: {e.message}")
    return doc


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def input_hashes(paths: dict[str, Optional[PathLike]]) -> dict[str, str]:
    return {k: sha256_file(p) for k, p in sorted(paths.items()) if p is not None}


def _dump_json(doc: Any, path: PathLike) -> None:
    text = json.dumps(doc, sort_keys=True, indent=1, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------- schemas

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_POLY = {"type": "array", "items": _POINT, "minItems": 3}

MAP_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "walls": {"type": "array", "items": {
            "type": "object",
            "properties": {"p0": _POINT, "p1": _POINT, "normal": _POINT,
                           "side": {"enum": ["left", "right"]}},
            "required": ["p0", "p1"],
            "additionalProperties": False,
        }},
        "buildings": {"type": "array", "items": {
            "type": "object", "properties": {"vertices": _POLY},
            "required": ["vertices"], "additionalProperties": False}},
        "scattering_areas": {"type": "array", "items": {
            "type": "object",
            "properties": {"vertices": _POLY,
                           "classes": {"type": "array", "items": {"type": "string"}}},
            "required": ["vertices"], "additionalProperties": False}},
        "foliage_areas": {"type": "array", "items": {
            "type": "object", "properties": {"vertices": _POLY},
            "required": ["vertices"], "additionalProperties": False}},
    },
    "additionalProperties": False,
}

_RANGE = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

CLASS_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "kind": {"enum": ["wall", "diffuse_wall", "non_wall", "diffuse_non_wall"]},
        "order": {"enum": [1, 2, 3]},
        "intensity": {"type": "number", "exclusiveMinimum": 0},
        "band_width": {"type": ["number", "null"]},
        "G0_range": _RANGE, "dc_range": _RANGE, "k_range": _RANGE,
    },
    "required": ["name", "kind", "order", "intensity", "G0_range", "dc_range", "k_range"],
    "additionalProperties": False,
}

PARAMS_SCHEMA = {
    "type": "object",
    "properties": {
        "classes": {"type": "array", "items": CLASS_SCHEMA},
        "angular": {"type": "object",
                    "properties": {"xi": {"type": "number"}, "dtheta1": {"type": "number"},
                                   "dtheta2": {"type": "number"}},
                    "additionalProperties": False},
    },
    "required": ["classes"],
    "additionalProperties": False,
}

REALIZATION_SCHEMA = {
    "type": "object",
    "properties": {
        "format": {"const": "v2vchan-realization"},
        "seed": {"type": "integer"},
        "classes": {"type": "array", "items": CLASS_SCHEMA},
        "scatterers": {"type": "array", "items": {
            "type": "object",
            "properties": {"location": _POINT, "class": {"type": "string"}, "normal": _POINT,
                           "G0_db": {"type": "number"}, "d_c": {"type": "number"},
                           "k": {"type": "number"}, "theta": {"type": "number"},
                           "phase": {"type": "number"}},
            "required": ["location", "class", "normal", "G0_db", "d_c", "k", "theta", "phase"],
        }},
    },
    "required": ["format", "seed", "classes", "scatterers"],
}

_GRID = {"type": "object",
         "properties": {"start": {"type": "number"}, "stop": {"type": "number"},
                        "points": {"type": "integer", "minimum": 1}},
         "required": ["start", "stop", "points"], "additionalProperties": False}

_ANTENNAS = {"type": "array", "minItems": 1, "items": {
    "type": "object",
    "properties": {"offset": _POINT,
                   "pattern": {"type": "object",
                               "properties": {"azimuth": {"type": "array", "items": {"type": "number"}},
                                              "gain": {"type": "array", "items": _POINT}},
                               "required": ["azimuth", "gain"], "additionalProperties": False}},
    "additionalProperties": False}}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "map": {"type": "string"},
        "classes": {"type": "string"},
        "tx_trajectory": {"type": "string"},
        "rx_trajectory": {"type": "string"},
        "tx_antennas": _ANTENNAS,
        "rx_antennas": _ANTENNAS,
        "freq": _GRID,
        "time": _GRID,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "output_dir": {"type": "string"},
        "noise_floor_db": {"type": "number"},
        "threshold_offset_db": {"type": "number"},
        "window_s": {"type": "number", "exclusiveMinimum": 0},
        "include_los": {"type": "boolean"},
    },
    "additionalProperties": False,
}


# ---------------------------------------------------------------- maps and parameters


def map_from_dict(data: dict, doc: Optional[LocatedDocument] = None) -> IntersectionMap:
    def where(*p):
        return doc.where(p) if doc else "/".join(map(str, p))

    walls, buildings, scat, fol = [], [], [], []
    try:
        for i, w in enumerate(data.get("walls", [])):
            at = ("walls", i)
            if "normal" in w:
                walls.append(WallSegment(w["p0"], w["p1"], w["normal"]))
            else:
                walls.append(WallSegment.from_points(w["p0"], w["p1"], w.get("side", "left")))
        for i, b in enumerate(data.get("buildings", [])):
            at = ("buildings", i)
            buildings.append(BuildingPolygon(b["vertices"]))
        for i, a in enumerate(data.get("scattering_areas", [])):
            at = ("scattering_areas", i)
            scat.append(AreaPolygon(a["vertices"], "scattering", a.get("classes")))
        for i, a in enumerate(data.get("foliage_areas", [])):
            at = ("foliage_areas", i)
            fol.append(AreaPolygon(a["vertices"], "foliage"))
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"{where(*at)}: {exc}") from None
    return IntersectionMap(walls, buildings, scat, fol, data.get("name", "map"))


def map_to_dict(imap: IntersectionMap) -> dict:
    return {
        "name": imap.name,
        "walls": [{"p0": w.p0.tolist(), "p1": w.p1.tolist(), "normal": w.normal.tolist()}
                  for w in imap.walls],
        "buildings": [{"vertices": b.vertices.tolist()} for b in imap.buildings],
        "scattering_areas": [{"vertices": a.vertices.tolist()} | (
            {"classes": list(a.classes)} if a.classes is not None else {})
            for a in imap.scattering_areas],
        "foliage_areas": [{"vertices": a.vertices.tolist()} for a in imap.foliage_areas],
    }


def load_map(path: PathLike) -> IntersectionMap:
    doc = load_document(path, MAP_SCHEMA)
    return map_from_dict(doc.data, doc)


def save_map(imap: IntersectionMap, path: PathLike) -> None:
    _dump_json(map_to_dict(imap), path)


def class_to_dict(c: ScattererClass) -> dict:
    return {"name": c.name, "kind": c.kind, "order": c.order, "intensity": c.intensity,
            "band_width": c.band_width, "G0_range": list(c.G0_range),
            "dc_range": list(c.dc_range), "k_range": list(c.k_range)}


def _classes_from_list(items: list, doc: LocatedDocument, key: str) -> tuple[ScattererClass, ...]:
    out = []
    for i, c in enumerate(items):
        try:
            out.append(ScattererClass(c["name"], c["kind"], c["order"], c["intensity"],
                                      c.get("band_width"), tuple(c["G0_range"]),
                                      tuple(c["dc_range"]), tuple(c["k_range"])))
        except ConfigError as exc:
            raise ConfigError(f"{doc.where((key, i))}: {exc}") from None
    names = [c.name for c in out]
    if len(set(names)) != len(names):
        raise ConfigError(f"{doc.source}: scatterer class names must be unique")
    return tuple(out)


def load_parameters(path: PathLike) -> tuple[tuple[ScattererClass, ...], AngularGainParams]:
    """Scatterer class table and angular-gain parameters."""
    doc = load_document(path, PARAMS_SCHEMA)
    classes = _classes_from_list(doc.data["classes"], doc, "classes")
    try:
        angular = AngularGainParams(**doc.data.get("angular", {}))
    except ValueError as exc:
        raise ConfigError(f"{doc.where(('angular',))}: {exc}") from None
    return classes, angular


def save_parameters(classes: Sequence[ScattererClass], angular: AngularGainParams,
                    path: PathLike) -> None:
    _dump_json({"classes": [class_to_dict(c) for c in classes],
                "angular": {"xi": angular.xi, "dtheta1": angular.dtheta1,
                            "dtheta2": angular.dtheta2}}, path)


# ---------------------------------------------------------------- realizations


def realization_to_dict(r: ScattererRealization, hashes: Optional[dict] = None) -> dict:
    return {
        "format": "v2vchan-realization",
        "version": __version__,
        "seed": int(r.rng_seed),
        "input_hashes": hashes or {},
        "classes": [class_to_dict(c) for c in r.classes],
        "scatterers": [{"location": s.location.tolist(), "class": s.class_name,
                        "normal": s.normal.tolist(), "G0_db": s.G0_db, "d_c": s.d_c,
                        "k": s.k, "theta": s.theta, "phase": s.phase} for s in r.scatterers],
    }


def save_realization(r: ScattererRealization, path: PathLike,
                     hashes: Optional[dict] = None) -> None:
    _dump_json(realization_to_dict(r, hashes), path)


def load_realization(path: PathLike) -> ScattererRealization:
    doc = load_document(path, REALIZATION_SCHEMA, error=DataError)
    classes = _classes_from_list(doc.data["classes"], doc, "classes")
    known = {c.name for c in classes}
    out = []
    for i, s in enumerate(doc.data["scatterers"]):
        if s["class"] not in known:
            raise DataError(f"{doc.where(('scatterers', i, 'class'))}: unknown class {s['class']!r}")
        out.append(Scatterer(np.asarray(s["location"], float), s["class"],
                             np.asarray(s["normal"], float), float(s["G0_db"]), float(s["d_c"]),
                             float(s["k"]), float(s["theta"]), float(s["phase"])))
    return ScattererRealization(tuple(out), doc.data["seed"], classes)


# ---------------------------------------------------------------- delimited text


def _read_columns(path: PathLike, required: Sequence[str],
                  optional: Sequence[str] = ()) -> dict[str, np.ndarray]:
    src = str(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{src}: cannot read ({exc.strerror})") from None
    with fh:
        rows = [(n, r) for n, r in enumerate(csv.reader(fh), start=1)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"{src}: empty file")
    header = [h.strip() for h in rows[0][1]]
    missing = [c for c in required if c not in header]
    if missing:
        raise DataError(f"{src}:{rows[0][0]}: missing column(s) {', '.join(missing)}")
    wanted = [c for c in (*required, *optional) if c in header]
    cols = {c: [] for c in wanted}
    for lineno, r in rows[1:]:
        if len(r) != len(header):
            raise DataError(f"{src}:{lineno}: expected {len(header)} fields, got {len(r)}")
        for c in wanted:
            raw = r[header.index(c)].strip()
            try:
                cols[c].append(float(raw))
            except ValueError:
                raise DataError(f"{src}:{lineno}: column {c!r}: not a number: {raw!r}") from None
    return {c: np.asarray(v, dtype=float) for c, v in cols.items()}


def load_trajectory(path: PathLike) -> VehicleTrajectory:
    cols = _read_columns(path, ("t", "x", "y", "heading"))
    try:
        return VehicleTrajectory(cols["t"], np.column_stack([cols["x"], cols["y"]]), cols["heading"])
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_trajectory(traj: VehicleTrajectory, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "y", "heading"])
        for t, (x, y), h in zip(traj.t, traj.xy, traj.heading):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y)), repr(float(h))])


@dataclass
class TrackData:
    t: np.ndarray
    d: np.ndarray
    power: Optional[np.ndarray] = None
    theta1: Optional[np.ndarray] = None
    theta2: Optional[np.ndarray] = None


def load_track(path: PathLike) -> TrackData:
    """Delimited ``t,d[,power,theta1,theta2]`` observations."""
    cols = _read_columns(path, ("t", "d"), ("power", "theta1", "theta2"))
    if len(cols["t"]) == 0:
        raise DataError(f"{path}: no observations")
    return TrackData(cols["t"], cols["d"], cols.get("power"), cols.get("theta1"), cols.get("theta2"))


def save_track(track: TrackData, path: PathLike) -> None:
    names = ["t", "d"] + [n for n in ("power", "theta1", "theta2") if getattr(track, n) is not None]
    data = np.column_stack([getattr(track, n) for n in names])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        w.writerows([[repr(float(v)) for v in row] for row in data])


def write_metrics_csv(rows: Sequence[MetricRow], path: PathLike, header_comment: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t_a", "gain_dB", "mean_delay_ns", "rms_ds_ns"])
        for r in rows:
            w.writerow([f"{r.t_a:.9g}", f"{r.gain_db:.6f}", f"{r.mean_delay_ns:.6f}",
                        f"{r.rms_ds_ns:.6f}"])


def read_metrics_csv(path: PathLike) -> list[MetricRow]:
    cols = _read_columns(path, ("t_a", "gain_dB", "mean_delay_ns", "rms_ds_ns"))
    return [MetricRow(*vals) for vals in zip(cols["t_a"], cols["gain_dB"], cols["mean_delay_ns"],
                                             cols["rms_ds_ns"])]


# ---------------------------------------------------------------- binary container


@dataclass
class ArrayFile:
    values: np.ndarray
    axes: list[tuple[str, Optional[np.ndarray]]]
    header: dict


def write_array(path: PathLike, values: np.ndarray, axes: Sequence[tuple[str, Optional[ArrayLike]]],
                meta: Optional[dict] = None, dtype: str = "complex128") -> None:
    """Write an N-D array with named axes; ``None`` axis values mean a plain index axis."""
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    arr = np.ascontiguousarray(np.asarray(values).astype(_DTYPES[dtype]))
    if arr.ndim != len(axes):
        raise ValueError("one axis description per array dimension is required")
    ax = []
    for (name, vals), n in zip(axes, arr.shape):
        if vals is not None and len(vals) != n:
            raise ValueError(f"axis {name!r} has {len(vals)} values for length {n}")
        ax.append({"name": name, "length": int(n),
                   "values": None if vals is None else [float(v) for v in vals]})
    header = {"container_version": CONTAINER_VERSION, "dtype": dtype, "byte_order": "little",
              "layout": "row-major", "shape": list(arr.shape), "axes": ax,
              "version": __version__} | (meta or {})
    hb = json.dumps(header, sort_keys=True, allow_nan=False).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        fh.write(arr.tobytes(order="C"))


def read_array(path: PathLike) -> ArrayFile:
    src = str(path)
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{src}: cannot read ({exc.strerror})") from None
    if not raw.startswith(MAGIC):
        raise DataError(f"{src}: header field 'magic': not a v2vchan array container")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise DataError(f"{src}: header field 'header_length': truncated")
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    if hlen > len(raw) - pos:
        raise DataError(f"{src}: header field 'header_length': {hlen} exceeds file size")
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{src}: header field 'header': unreadable JSON ({exc})") from None
    if not isinstance(header, dict):
        raise DataError(f"{src}: header field 'header': not an object")
    pos += hlen

    def bad(name: str, why: str) -> DataError:
        return DataError(f"{src}: header field {name!r}: {why}")

    if header.get("container_version") != CONTAINER_VERSION:
        raise bad("container_version", f"unsupported value {header.get('container_version')!r}")
    dtype = header.get("dtype")
    if dtype not in _DTYPES:
        raise bad("dtype", f"unsupported value {dtype!r}")
    if header.get("byte_order") != "little":
        raise bad("byte_order", f"expected 'little', got {header.get('byte_order')!r}")
    if header.get("layout") != "row-major":
        raise bad("layout", f"expected 'row-major', got {header.get('layout')!r}")
    shape = header.get("shape")
    if not (isinstance(shape, list) and all(isinstance(n, int) and n >= 0 for n in shape)):
        raise bad("shape", f"expected a list of non-negative integers, got {shape!r}")
    axes_doc = header.get("axes")
    if not (isinstance(axes_doc, list) and len(axes_doc) == len(shape)):
        raise bad("axes", "expected one entry per dimension")
    axes = []
    for i, (a, n) in enumerate(zip(axes_doc, shape)):
        if not (isinstance(a, dict) and isinstance(a.get("name"), str)):
            raise bad(f"axes[{i}].name", "missing axis name")
        vals = a.get("values")
        if vals is not None and (not isinstance(vals, list) or len(vals) != n):
            raise bad(f"axes[{i}].values", f"expected {n} values")
        axes.append((a["name"], None if vals is None else np.asarray(vals, dtype=float)))
    dt = np.dtype(_DTYPES[dtype])
    count = int(np.prod(shape)) if shape else 1
    if len(raw) - pos != count * dt.itemsize:
        raise bad("shape", f"payload holds {len(raw) - pos} bytes, shape needs {count * dt.itemsize}")
    values = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(shape)
    return ArrayFile(values.astype(dt.newbyteorder("=")), axes, header)


TENSOR_AXES = ("freq_hz", "time_s", "rx", "tx")


def write_tensor(tensor: ChannelTensor, path: PathLike, hashes: Optional[dict] = None,
                 dtype: str = "complex128") -> None:
    meta = {"kind": "channel_tensor", "seed": tensor.metadata.get("seed"),
            "parameter_hash": tensor.metadata.get("parameter_set"),
            "input_hashes": hashes or {},
            "metadata": {k: v for k, v in tensor.metadata.items()
                         if k not in ("seed", "parameter_set")}}
    write_array(path, tensor.values,
                [("freq_hz", tensor.freqs), ("time_s", tensor.times), ("rx", None), ("tx", None)],
                meta, dtype)


def read_tensor(path: PathLike) -> ChannelTensor:
    f = read_array(path)
    names = tuple(n for n, _ in f.axes)
    if names != TENSOR_AXES:
        raise DataError(f"{path}: header field 'axes': expected {list(TENSOR_AXES)}, got {list(names)}")
    if f.axes[0][1] is None or f.axes[1][1] is None:
        raise DataError(f"{path}: header field 'axes': frequency and time values are required")
    if "seed" not in f.header:
        raise DataError(f"{path}: header field 'seed': missing")
    meta = dict(f.header.get("metadata", {}))
    meta["seed"] = f.header["seed"]
    meta["parameter_set"] = f.header.get("parameter_hash")
    meta["input_hashes"] = f.header.get("input_hashes", {})
    return ChannelTensor(np.asarray(f.values, dtype=complex), f.axes[0][1], f.axes[1][1], meta)


def write_tensor_text(tensor: ChannelTensor, path: PathLike) -> None:
    """Delimited magnitude/phase dump, meant for small tensors."""
    buf = _io.StringIO()
    buf.write(f"# version={__version__} seed={tensor.metadata.get('seed')} "
              f"parameter_hash={tensor.metadata.get('parameter_set')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["freq_hz", "time_s", "rx", "tx", "magnitude", "phase_rad"])
    F, T, R, X = tensor.values.shape
    for i in range(F):
        for j in range(T):
            for r in range(R):
                for x in range(X):
                    v = tensor.values[i, j, r, x]
                    w.writerow([repr(float(tensor.freqs[i])), repr(float(tensor.times[j])), r, x,
                                repr(float(abs(v))), repr(float(np.angle(v)))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# ---------------------------------------------------------------- antennas and run config


def antenna_layout_from_list(items: Optional[list]) -> AntennaLayout:
    if not items:
        return AntennaLayout()
    elems = []
    for e in items:
        pat = e.get("pattern")
        if pat is not None:
            g = np.asarray(pat["gain"], dtype=float)
            pat = (np.asarray(pat["azimuth"], dtype=float), g[:, 0] + 1j * g[:, 1])
        elems.append(AntennaElement(np.asarray(e.get("offset", [0.0, 0.0]), float), pat))
    return AntennaLayout(tuple(elems))


@dataclass
class GridSpec:
    start: float
    stop: float
    points: int

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points)


@dataclass
class RunConfig:
    """Everything a run needs; every field may be overridden by a command-line flag."""

    map: Optional[str] = None
    classes: Optional[str] = None
    tx_trajectory: Optional[str] = None
    rx_trajectory: Optional[str] = None
    tx_antennas: Optional[list] = None
    rx_antennas: Optional[list] = None
    freq: Optional[GridSpec] = None
    time: Optional[GridSpec] = None
    seed: Optional[int] = None
    output_dir: str = "."
    noise_floor_db: float = -130.0
    threshold_offset_db: float = 5.0
    window_s: float = 30e-3
    include_los: bool = True

    @classmethod
    def load(cls, path: PathLike) -> "RunConfig":
        doc = load_document(path, CONFIG_SCHEMA)
        data = dict(doc.data)
        base = Path(path).parent
        for key in ("map", "classes", "tx_trajectory", "rx_trajectory", "output_dir"):
            if key in data and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        for key in ("freq", "time"):
            if key in data:
                data[key] = GridSpec(**data[key])
        return cls(**data)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"missing required setting(s): {', '.join(missing)}")
        for n in ("freq", "time"):
            g = getattr(self, n)
            if n in names and (g.points < 1 or (g.points > 1 and not g.stop > g.start)):
                raise ConfigError(f"{n} grid must be non-empty with stop > start")
