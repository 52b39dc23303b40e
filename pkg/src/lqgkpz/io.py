"""LQG1 binary grid container and small CSV/JSON helpers.

Layout (little-endian): 8-byte magic, then
``version:u32 nx:u32 ny:u32 h:f64 eps:f64 m:f64 gamma:f64 seed:u64``,
then nx*ny float64 values row-major (x fastest).
"""
import csv
import json
import struct

import numpy as np

MAGIC_FIELD = b"LQG1FLD\0"
MAGIC_MEASURE = b"LQG1MSR\0"
VERSION = 1
_HEADER = struct.Struct("<IIIddddQ")


def write_lqg1(path, values, h, eps, m, gamma, seed, kind="field"):
    magic = {"field": MAGIC_FIELD, "measure": MAGIC_MEASURE}[kind]
    values = np.ascontiguousarray(values, dtype="<f8")
    ny, nx = values.shape
    with open(path, "wb") as f:
        f.write(magic)
        f.write(_HEADER.pack(VERSION, nx, ny, float(h), float(eps), float(m),
                             float(gamma), int(seed) & 0xFFFFFFFFFFFFFFFF))
        f.write(values.tobytes())


def read_lqg1(path):
    """Return (header dict, values array of shape (ny, nx))."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic not in (MAGIC_FIELD, MAGIC_MEASURE):
            raise ValueError(f"{path}: not an LQG1 file")
        version, nx, ny, h, eps, m, gamma, seed = _HEADER.unpack(f.read(_HEADER.size))
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {data.size}")
    header = dict(kind="field" if magic == MAGIC_FIELD else "measure", version=version,
                  nx=nx, ny=ny, h=h, eps=eps, m=m, gamma=gamma, seed=seed)
    return header, data.reshape(ny, nx).astype(float)


def write_field(path, field):
    write_lqg1(path, field.values, field.grid.h, field.eps, field.model.m, 0.0,
               field.seed, "field")


def write_measure(path, measure):
    write_lqg1(path, measure.cell_mass, measure.grid.h, measure.eps,
               measure.model.m, measure.gamma, measure.seed, "measure")


def fmt(x):
    """Round-trippable text form used for every CSV cell."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")
