"""Raw volume/sinogram files, slice images and CSV tables.

Raw volume layout: 16-byte header of little-endian int32 ``(magic, Nz, Nx,
Ny)`` followed by little-endian float32 voxels, z slowest then x then y.
Raw sinograms store ``(magic, n_angles, Nz, Nc)``, then the angles as float64,
then float32 values ordered (angle, z, channel). Counts use int32 values.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

VOLUME_MAGIC = 0x4C4F5645  # b"EVOL"
SINOGRAM_MAGIC = 0x4E495345  # b"ESIN"
COUNTS_MAGIC = 0x544E4345  # b"ECNT"
_HEADER = struct.Struct("<4i")


class RawFormatError(ValueError):
    pass


def write_volume(path, volume):
    vol = np.asarray(volume)
    if vol.ndim != 3:
        raise ValueError(f"volume must be 3D, got shape {vol.shape}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(VOLUME_MAGIC, *vol.shape))
        fh.write(np.ascontiguousarray(vol, dtype="<f4").tobytes())
    return path


def read_volume(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise RawFormatError(f"{path}: too short for a volume header")
    magic, nz, nx, ny = _HEADER.unpack_from(raw)
    if magic != VOLUME_MAGIC:
        raise RawFormatError(f"{path}: not a raw volume (bad magic {magic:#x})")
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    if body.size != nz * nx * ny:
        raise RawFormatError(f"{path}: expected {nz * nx * ny} voxels, found {body.size}")
    return body.reshape(nz, nx, ny).astype(np.float64)


def write_sinogram(path, angles, sino):
    sino = np.asarray(sino)
    angles = np.asarray(angles, dtype="<f8").reshape(-1)
    if sino.ndim != 3 or sino.shape[0] != angles.size:
        raise ValueError(f"sinogram shape {sino.shape} does not match {angles.size} angles")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SINOGRAM_MAGIC, *sino.shape))
        fh.write(angles.tobytes())
        fh.write(np.ascontiguousarray(sino, dtype="<f4").tobytes())
    return Path(path)


def read_sinogram(path):
    raw = Path(path).read_bytes()
    magic, na, nz, nc = _HEADER.unpack_from(raw)
    if magic != SINOGRAM_MAGIC:
        raise RawFormatError(f"{path}: not a raw sinogram")
    angles = np.frombuffer(raw, dtype="<f8", count=na, offset=_HEADER.size).copy()
    body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size + 8 * na)
    return angles, body.reshape(na, nz, nc).astype(np.float64)


def write_counts(path, counts):
    counts = np.asarray(counts)
    if counts.ndim == 2:
        counts = counts[None]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(COUNTS_MAGIC, *counts.shape))
        fh.write(np.ascontiguousarray(counts, dtype="<i4").tobytes())
    return Path(path)


def write_slices_png(directory, volume, prefix="slice", vmin=None, vmax=None):
    """One 8-bit grayscale PNG per slice, min-max scaled over the whole volume.

    Returns the written paths and the ``(vmin, vmax)`` mapped to 0 and 255.
    """
    from PIL import Image

    vol = np.asarray(volume, dtype=np.float64)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lo = float(vol.min()) if vmin is None else float(vmin)
    hi = float(vol.max()) if vmax is None else float(vmax)
    span = hi - lo if hi > lo else 1.0
    paths = []
    for k, sl in enumerate(vol):
        img = np.clip(np.round((sl - lo) / span * 255.0), 0, 255).astype(np.uint8)
        p = directory / f"{prefix}_{k:03d}.png"
        Image.fromarray(img).save(p)
        paths.append(p)
    return paths, (lo, hi)


def fmt(x):
    """Locale-independent float text that round-trips exactly."""
    if x is None:
        return ""
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return Path(path)


def read_csv(path):
    with open(path, newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))
