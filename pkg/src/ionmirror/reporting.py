"""Deterministic report writers: JSON, CSV, aligned tables, 16-bit PGM, events.

All writers produce byte-identical output for identical input; anything
timestamped belongs in the sidecar run log, never in report artifacts.

Binary event format (``.evt``)
------------------------------
Little-endian throughout.  16-byte header:

    bytes 0-7    magic ``b"IONMEVT1"``
    bytes 8-11   uint32 record count
    bytes 12-15  reserved, zero

followed by ``count`` fixed 16-byte records:

    offset 0   uint32  trial index
    offset 4   float64 absolute time in ns
    offset 12  uint8   kind (0 pi, 1 sigma+, 2 sigma-, 3 background)
    offset 13  uint8   collected flag
    offset 14  uint8   passed-polarizer flag
    offset 15  uint8   detector (0 unassigned, 1 or 2)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .protocol import EVENT_DTYPE

EVENT_MAGIC = b"IONMEVT1"


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_grid_csv(path: str | Path, grid: np.ndarray) -> Path:
    """Plain 2D CSV of grid values (rows = first axis)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(grid), delimiter=",", fmt="%.8g")
    return path


def format_table(rows: list[tuple[str, str]], title: str | None = None) -> str:
    """Two-column aligned text table."""
    if not rows:
        return ""
    width = max(len(k) for k, _ in rows)
    lines = []
    if title:
        lines.append(title)
        lines.append("-" * max(len(title), width + 3))
    for k, v in rows:
        lines.append(f"{k:<{width}}  {v}")
    return "\n".join(lines) + "\n"


def write_pgm16(path: str | Path, values: np.ndarray) -> Path:
    """16-bit NetPBM (P5) image of a nonnegative grid, max scaled to 65535."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError("PGM export needs a 2D grid")
    peak = v.max()
    scaled = np.zeros_like(v, dtype=np.uint16)
    if peak > 0:
        scaled = np.round(np.clip(v, 0.0, None) / peak * 65535).astype(np.uint16)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{v.shape[1]} {v.shape[0]}\n65535\n".encode("ascii"))
        fh.write(scaled.astype(">u2").tobytes())
    return path


def write_events_csv(path: str | Path, events: np.ndarray) -> Path:
    return write_csv(
        path,
        ["trial", "time_ns", "kind", "detector"],
        (
            (int(e["trial"]), float(e["time_ns"]), int(e["kind"]), int(e["detector"]))
            for e in events
        ),
    )


def write_events_binary(path: str | Path, events: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rec = np.ascontiguousarray(events.astype(EVENT_DTYPE, copy=False))
    with open(path, "wb") as fh:
        fh.write(EVENT_MAGIC)
        fh.write(struct.pack("<II", len(rec), 0))
        fh.write(rec.tobytes())
    return path


def read_events_binary(path: str | Path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != EVENT_MAGIC:
        raise ValueError(f"{path} is not an event file (bad magic)")
    (count, _reserved) = struct.unpack("<II", blob[8:16])
    body = blob[16:]
    expected = count * EVENT_DTYPE.itemsize
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype=EVENT_DTYPE).copy()


def read_events_csv(path: str | Path) -> np.ndarray:
    """Events from the CSV export (header row required)."""
    path = Path(path)
    raw = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="ascii")
    raw = np.atleast_1d(raw)
    out = np.zeros(len(raw), dtype=EVENT_DTYPE)
    out["trial"] = raw["trial"]
    out["time_ns"] = raw["time_ns"]
    out["kind"] = raw["kind"]
    out["detector"] = raw["detector"]
    out["collected"] = 1
    out["passed_polarizer"] = 1
    return out


def read_timestamps_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """External two-column stream: detector id (1 or 2), time in ns."""
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (detector, time_ns)")
    det = data[:, 0].astype(int)
    t = data[:, 1]
    return np.sort(t[det == 1]), np.sort(t[det == 2])


def load_event_streams(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Two sorted detector streams from any supported event file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"event file not found: {path}")
    if path.suffix == ".evt" or path.read_bytes()[:8] == EVENT_MAGIC:
        ev = read_events_binary(path)
        t1 = np.sort(ev["time_ns"][ev["detector"] == 1])
        t2 = np.sort(ev["time_ns"][ev["detector"] == 2])
        return t1, t2
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("trial"):
        ev = read_events_csv(path)
        t1 = np.sort(ev["time_ns"][ev["detector"] == 1])
        t2 = np.sort(ev["time_ns"][ev["detector"] == 2])
        return t1, t2
    return read_timestamps_csv(path)
