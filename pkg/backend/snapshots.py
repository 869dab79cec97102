"""
Snapshots Module - Density Field Serialization
PLAD flat binary snapshots, index-coordinate CSV exports and grayscale PNG renders
"""

import base64
import csv
import io
import logging
import os
import struct

import numpy as np
from PIL import Image

from backend.errors import FieldError
from backend.fields import DensityField, Grid

logger = logging.getLogger(__name__)

PLAD_MAGIC = b"PLAD"
PLAD_VERSION = 1

# magic, version (u32), then d, n, L as little-endian doubles
_HEADER = struct.Struct("<4sIddd")


def encode_plad(field: DensityField) -> bytes:
    grid = field.grid
    header = _HEADER.pack(PLAD_MAGIC, PLAD_VERSION, float(grid.d), float(grid.n), float(grid.half_width))
    return header + np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")


def decode_plad(payload: bytes) -> DensityField:
    if len(payload) < _HEADER.size:
        raise FieldError("PLAD payload shorter than its header")
    magic, version, d, n, half_width = _HEADER.unpack_from(payload)
    if magic != PLAD_MAGIC:
        raise FieldError(f"not a PLAD snapshot (magic {magic!r})")
    if version != PLAD_VERSION:
        raise FieldError(f"unsupported PLAD version {version}")
    grid = Grid(d=int(d), half_width=half_width, n=int(n))
    expected = grid.n ** grid.d
    values = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size)
    if values.size != expected:
        raise FieldError(f"PLAD body holds {values.size} values, grid needs {expected}")
    return DensityField(grid, values.reshape(grid.shape))


def write_plad(path: str, field: DensityField) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(encode_plad(field))
    return path


def read_plad(path: str) -> DensityField:
    with open(path, "rb") as handle:
        return decode_plad(handle.read())


def write_field_csv(path: str, field: DensityField) -> str:
    """One row per cell: the integer index on every axis, then the value."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    header = [f"i{axis}" for axis in range(field.grid.d)] + ["value"]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for index in np.ndindex(*field.values.shape):
            writer.writerow(list(index) + [repr(float(field.values[index]))])
    return path


def render_png(field: DensityField, strip_height: int = 32) -> Image.Image:
    """
    8-bit grayscale image of the density, scaled to its maximum

    d = 2 renders the first axis horizontally with the second axis pointing up;
    d = 1 renders a strip of `strip_height` rows.
    """
    values = field.values
    peak = float(values.max())
    scaled = values / peak if peak > 0.0 else np.zeros_like(values)
    pixels = np.round(255.0 * scaled).astype(np.uint8)
    if field.grid.d == 1:
        pixels = np.tile(pixels, (strip_height, 1))
    else:
        pixels = np.flipud(pixels.T)
    return Image.fromarray(np.ascontiguousarray(pixels))


def png_base64(field: DensityField) -> str:
    buffer = io.BytesIO()
    render_png(field).save(buffer, format="PNG")
    return base64.b64encode(buffer.getvalue()).decode("ascii")


def save_png(path: str, field: DensityField) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    render_png(field).save(path, format="PNG")
    logger.info("[OK] Snapshot image written to %s", path)
    return path
