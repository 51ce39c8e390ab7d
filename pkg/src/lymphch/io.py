"""Snapshot (binary PGM) and checkpoint (little-endian binary) files.

Checkpoint layout::

    b"LCH1"                       4 bytes
    dim                           u32
    n[0..dim)                     u32 each
    L[0..dim)                     f64 each
    t                             f64
    step_index                    u64
    phi                           f64 x prod(n), row-major
    c                             f64 x prod(n), row-major
    -- optional controller trailer --
    b"CTRL"                       4 bytes
    dt                            f64 (nan before the first step)
    accept_streak                 u64
    lap_phi_sq_cum                f64
    grad_c32_sq_cum               f64

The trailer carries what an exact resume needs beyond the fields.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .grid import Grid
from .stepper import State

__all__ = ["CheckpointError", "write_checkpoint", "read_checkpoint", "write_snapshot", "read_snapshot"]

MAGIC = b"LCH1"
TRAILER_MAGIC = b"CTRL"
_TRAILER = struct.Struct("<4sdQdd")


class CheckpointError(ValueError):
    """Malformed or truncated checkpoint file."""


def _atomic_write(path: Path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_checkpoint(state: State, path, lap_cum: float = 0.0, c32_cum: float = 0.0) -> None:
    g = state.grid
    parts = [
        MAGIC,
        struct.pack("<I", g.dim),
        struct.pack(f"<{g.dim}I", *g.n),
        struct.pack(f"<{g.dim}d", *g.L),
        struct.pack("<dQ", state.t, state.step_index),
        np.ascontiguousarray(state.phi, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.c, dtype="<f8").tobytes(),
        _TRAILER.pack(
            TRAILER_MAGIC,
            float("nan") if state.dt is None else state.dt,
            state.accept_streak,
            lap_cum,
            c32_cum,
        ),
    ]
    _atomic_write(path, b"".join(parts))


def read_checkpoint(path) -> tuple[State, dict]:
    """Return the state and the run ledger ``{"lap_cum", "c32_cum"}``.

    Raises:
        CheckpointError: bad magic, truncated data or a damaged trailer.
    """
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos} (need {n} more)")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    (dim,) = struct.unpack("<I", take(4))
    if dim not in (1, 2):
        raise CheckpointError(f"{path}: unsupported dimension {dim}")
    n = struct.unpack(f"<{dim}I", take(4 * dim))
    L = struct.unpack(f"<{dim}d", take(8 * dim))
    t, step_index = struct.unpack("<dQ", take(16))
    size = int(np.prod(n))
    phi = np.frombuffer(take(8 * size), dtype="<f8").reshape(n).astype(np.float64)
    c = np.frombuffer(take(8 * size), dtype="<f8").reshape(n).astype(np.float64)
    dt, streak, lap_cum, c32_cum = None, 0, 0.0, 0.0
    if pos < len(buf):
        magic, dt_raw, streak, lap_cum, c32_cum = _TRAILER.unpack(take(_TRAILER.size))
        if magic != TRAILER_MAGIC:
            raise CheckpointError(f"{path}: damaged trailer")
        dt = None if np.isnan(dt_raw) else dt_raw
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    try:
        grid = Grid(n, L)
        state = State(grid, phi, c, t=t, step_index=step_index, dt=dt, accept_streak=streak)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return state, {"lap_cum": lap_cum, "c32_cum": c32_cum}


def write_snapshot(field: np.ndarray, path) -> tuple[float, float]:
    """Write an 8-bit P5 image scaled from the field's own min/max.

    The bounds are stored in a header comment and returned. 1D fields become
    a one-row image; in 2D, axis 0 runs down the image.
    """
    f = np.atleast_2d(np.asarray(field, dtype=np.float64))
    lo, hi = float(f.min()), float(f.max())
    if hi > lo:
        pix = np.rint((f - lo) / (hi - lo) * 255.0)
    else:
        pix = np.zeros_like(f)
    pix = np.clip(pix, 0, 255).astype(np.uint8)
    rows, cols = pix.shape
    header = f"P5\n# min={lo!r} max={hi!r}\n{cols} {rows}\n255\n".encode("ascii")
    _atomic_write(path, header + pix.tobytes())
    return lo, hi


def read_snapshot(path) -> tuple[np.ndarray, float, float]:
    """Inverse of :func:`write_snapshot`: pixels plus the recorded bounds."""
    buf = Path(path).read_bytes()
    lines = buf.split(b"\n", 4)
    if len(lines) < 5 or lines[0] != b"P5" or not lines[1].startswith(b"# min="):
        raise ValueError(f"{path}: not a snapshot written by this package")
    lo_s, hi_s = lines[1][2:].decode().split()
    lo = float(lo_s.split("=")[1])
    hi = float(hi_s.split("=")[1])
    cols, rows = (int(x) for x in lines[2].split())
    pix = np.frombuffer(lines[4], dtype=np.uint8)
    if pix.size != rows * cols:
        raise ValueError(f"{path}: truncated pixel data")
    return pix.reshape(rows, cols), lo, hi
