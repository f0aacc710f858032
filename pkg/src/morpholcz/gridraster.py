"""North-up raster grids and a minimal multiband float32 GeoTIFF codec.

Supports exactly what the pipeline emits: uncompressed, pixel-interleaved
IEEE float32 bands with pixel-scale/tiepoint georeferencing and a nodata
tag. Missing values are NaN in memory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GridGeometry:
    """Geometry of a north-up grid: top-left origin, square pixels."""

    origin_x: float
    origin_y: float  # top edge
    pixel_size: float
    width: int
    height: int
    crs: str | None = None

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(xs, ys) center coordinate vectors along columns / rows."""
        cols = np.arange(self.width)
        rows = np.arange(self.height)
        xs = self.origin_x + (cols + 0.5) * self.pixel_size
        ys = self.origin_y - (rows + 0.5) * self.pixel_size
        return xs, ys

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (
            self.origin_x,
            self.origin_y - self.height * self.pixel_size,
            self.origin_x + self.width * self.pixel_size,
            self.origin_y,
        )


@dataclass
class Raster:
    geometry: GridGeometry
    data: np.ndarray  # (bands, rows, cols) float32, NaN = nodata
    band_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if not self.band_names:
            self.band_names = [f"band_{i}" for i in range(self.data.shape[0])]

    @property
    def n_bands(self) -> int:
        return int(self.data.shape[0])


# ---------------------------------------------------------------------------
# GeoTIFF

_TAG_WIDTH = 256
_TAG_HEIGHT = 257
_TAG_BITS = 258
_TAG_COMPRESSION = 259
_TAG_PHOTOMETRIC = 262
_TAG_DESCRIPTION = 270
_TAG_STRIP_OFFSETS = 273
_TAG_SAMPLES = 277
_TAG_ROWS_PER_STRIP = 278
_TAG_STRIP_COUNTS = 279
_TAG_PLANAR = 284
_TAG_EXTRA_SAMPLES = 338
_TAG_SAMPLE_FORMAT = 339
_TAG_PIXEL_SCALE = 33550
_TAG_TIEPOINT = 33922
_TAG_GEOKEYS = 34735
_TAG_GDAL_NODATA = 42113

_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 11: 4, 12: 8}


def write_geotiff(path: str | Path, raster: Raster) -> None:
    geom = raster.geometry
    data = np.ascontiguousarray(
        np.moveaxis(raster.data.astype("<f4"), 0, -1)
    )  # rows, cols, bands
    n_bands = raster.n_bands
    pixel_data = data.tobytes()

    epsg = 32767
    if geom.crs:
        digits = "".join(ch for ch in str(geom.crs) if ch.isdigit())
        if digits:
            epsg = int(digits)
    geokeys = np.array(
        [1, 1, 0, 3, 1024, 0, 1, 1, 1025, 0, 1, 1, 3072, 0, 1, epsg],
        dtype="<u2",
    )
    description = ",".join(raster.band_names).encode() + b"\x00"
    nodata = b"nan\x00"
    pixel_scale = struct.pack("<3d", geom.pixel_size, geom.pixel_size, 0.0)
    tiepoint = struct.pack("<6d", 0, 0, 0, geom.origin_x, geom.origin_y, 0)

    # Layout: header(8) | IFD | out-of-line tag data | pixel strip
    entries: list[tuple[int, int, int, bytes]] = [
        (_TAG_WIDTH, 3, 1, struct.pack("<H", geom.width)),
        (_TAG_HEIGHT, 3, 1, struct.pack("<H", geom.height)),
        (_TAG_BITS, 3, n_bands, struct.pack(f"<{n_bands}H", *([32] * n_bands))),
        (_TAG_COMPRESSION, 3, 1, struct.pack("<H", 1)),
        (_TAG_PHOTOMETRIC, 3, 1, struct.pack("<H", 1)),
        (_TAG_DESCRIPTION, 2, len(description), description),
        (_TAG_STRIP_OFFSETS, 4, 1, b""),  # patched below
        (_TAG_SAMPLES, 3, 1, struct.pack("<H", n_bands)),
        (_TAG_ROWS_PER_STRIP, 3, 1, struct.pack("<H", geom.height)),
        (_TAG_STRIP_COUNTS, 4, 1, struct.pack("<I", len(pixel_data))),
        (_TAG_PLANAR, 3, 1, struct.pack("<H", 1)),
    ]
    if n_bands > 1:
        entries.append(
            (_TAG_EXTRA_SAMPLES, 3, n_bands - 1, struct.pack(f"<{n_bands - 1}H", *([0] * (n_bands - 1))))
        )
    entries += [
        (_TAG_SAMPLE_FORMAT, 3, n_bands, struct.pack(f"<{n_bands}H", *([3] * n_bands))),
        (_TAG_PIXEL_SCALE, 12, 3, pixel_scale),
        (_TAG_TIEPOINT, 12, 6, tiepoint),
        (_TAG_GEOKEYS, 3, geokeys.size, geokeys.tobytes()),
        (_TAG_GDAL_NODATA, 2, len(nodata), nodata),
    ]

    ifd_offset = 8
    ifd_size = 2 + 12 * len(entries) + 4
    extra_offset = ifd_offset + ifd_size
    extra = bytearray()
    packed = []
    for tag, typ, count, payload in entries:
        if tag == _TAG_STRIP_OFFSETS:
            packed.append((tag, typ, count, None))
            continue
        if len(payload) <= 4:
            packed.append((tag, typ, count, payload.ljust(4, b"\x00")))
        else:
            packed.append((tag, typ, count, struct.pack("<I", extra_offset + len(extra))))
            extra.extend(payload)
    strip_offset = extra_offset + len(extra)

    with open(path, "wb") as fh:
        fh.write(b"II*\x00" + struct.pack("<I", ifd_offset))
        fh.write(struct.pack("<H", len(packed)))
        for tag, typ, count, payload in packed:
            if payload is None:
                payload = struct.pack("<I", strip_offset)
            fh.write(struct.pack("<HHI", tag, typ, count) + payload)
        fh.write(struct.pack("<I", 0))  # no next IFD
        fh.write(extra)
        fh.write(pixel_data)


def read_geotiff(path: str | Path) -> Raster:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != b"II*\x00":
        raise ValueError(f"{path}: unsupported TIFF header (need little-endian classic)")
    (ifd_offset,) = struct.unpack_from("<I", buf, 4)
    (n_entries,) = struct.unpack_from("<H", buf, ifd_offset)
    tags: dict[int, tuple] = {}
    for i in range(n_entries):
        off = ifd_offset + 2 + 12 * i
        tag, typ, count = struct.unpack_from("<HHI", buf, off)
        size = _TYPE_SIZES.get(typ, 1) * count
        if size <= 4:
            payload = buf[off + 8 : off + 8 + size]
        else:
            (data_off,) = struct.unpack_from("<I", buf, off + 8)
            payload = buf[data_off : data_off + size]
        tags[tag] = (typ, count, payload)

    def _ints(tag, default=None):
        if tag not in tags:
            return default
        typ, count, payload = tags[tag]
        fmt = {3: "H", 4: "I"}[typ]
        return list(struct.unpack(f"<{count}{fmt}", payload))

    width = _ints(_TAG_WIDTH)[0]
    height = _ints(_TAG_HEIGHT)[0]
    n_bands = _ints(_TAG_SAMPLES, [1])[0]
    if _ints(_TAG_COMPRESSION, [1])[0] != 1:
        raise ValueError(f"{path}: compressed TIFF not supported")
    if _ints(_TAG_PLANAR, [1])[0] != 1:
        raise ValueError(f"{path}: planar configuration not supported")
    offsets = _ints(_TAG_STRIP_OFFSETS)
    counts = _ints(_TAG_STRIP_COUNTS)
    raw = b"".join(buf[o : o + c] for o, c in zip(offsets, counts))
    data = np.frombuffer(raw, dtype="<f4").reshape(height, width, n_bands)
    data = np.moveaxis(data, -1, 0)

    scale = struct.unpack("<3d", tags[_TAG_PIXEL_SCALE][2])
    tie = struct.unpack("<6d", tags[_TAG_TIEPOINT][2])
    crs = None
    if _TAG_GEOKEYS in tags:
        keys = np.frombuffer(tags[_TAG_GEOKEYS][2], dtype="<u2")
        for k in range(4, len(keys), 4):
            if keys[k] == 3072 and keys[k + 3] != 32767:
                crs = f"EPSG:{int(keys[k + 3])}"
    band_names = []
    if _TAG_DESCRIPTION in tags:
        band_names = tags[_TAG_DESCRIPTION][2].rstrip(b"\x00").decode().split(",")
        if len(band_names) != n_bands:
            band_names = []
    geom = GridGeometry(
        origin_x=tie[3], origin_y=tie[4], pixel_size=scale[0],
        width=width, height=height, crs=crs,
    )
    return Raster(geometry=geom, data=data.copy(), band_names=band_names)
