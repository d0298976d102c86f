"""Image and table files: binary PGM, raw float64 grids with JSON sidecars, CSV."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def write_pgm(path, image: np.ndarray, maxval: int = 65535) -> Path:
    """Binary (P5) PGM, linearly scaled so min -> 0 and max -> maxval."""
    a = np.asarray(image, dtype=float)
    if a.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in 1..65535")
    lo, hi = float(np.nanmin(a)), float(np.nanmax(a))
    span = hi - lo
    q = np.zeros(a.shape) if span <= 0 else (a - lo) / span
    q = np.rint(np.nan_to_num(q) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    path = Path(path)
    with open(path, "wb") as f:
        f.write(f"P5\n{a.shape[1]} {a.shape[0]}\n{maxval}\n".encode("ascii"))
        f.write(q.astype(dtype).tobytes())
    return path


def _pgm_tokens(data: bytes, count: int):
    """Header tokens of a PNM file, skipping '#' comments; returns tokens and data offset."""
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1


def read_pgm(path, normalize: bool = True) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) PGM; values scaled to [0, 1] by default."""
    data = Path(path).read_bytes()
    (magic, w, h, mx), off = _pgm_tokens(data, 4)
    w, h, mx = int(w), int(h), int(mx)
    if magic == b"P5":
        dtype = ">u2" if mx > 255 else "u1"
        n = w * h * np.dtype(dtype).itemsize
        if len(data) - off < n:
            raise ValueError("truncated PGM raster")
        a = np.frombuffer(data[off:off + n], dtype=dtype).reshape(h, w)
    elif magic == b"P2":
        a = np.array(data[off - 1:].split()[: w * h], dtype=int)
        if a.size != w * h:
            raise ValueError("truncated PGM raster")
        a = a.reshape(h, w)
    else:
        raise ValueError(f"not a PGM file: {magic!r}")
    a = a.astype(float)
    return a / mx if normalize else a


def write_raw(path, array: np.ndarray, **meta) -> tuple[Path, Path]:
    """Little-endian float64 raster plus ``<path>.json`` describing it."""
    path = Path(path)
    a = np.ascontiguousarray(array, dtype="<f8")
    path.write_bytes(a.tobytes())
    side = path.with_name(path.name + ".json")
    info = {"dtype": "float64", "byteorder": "little", "shape": list(a.shape)}
    info.update(meta)
    side.write_text(json.dumps(info, indent=2, sort_keys=True, default=_jsonable))
    return path, side


def read_raw(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    info = json.loads(path.with_name(path.name + ".json").read_text())
    a = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(info["shape"])
    return a.copy(), info


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """RFC-4180 CSV (CRLF line ends); floats written with repr for round-tripping."""
    columns = list(columns or (rows[0].keys() if rows else []))
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
