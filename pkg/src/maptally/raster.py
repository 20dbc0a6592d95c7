"""Co-registered categorical rasters streamed as fixed-size tiles.

Container format CMAP/1: an ASCII header line

    CMAP 1 <width> <height> <nodata_code> <code_width>\n

followed by row-major little-endian unsigned codes of the declared
width (1, 2 or 4 bytes), no compression. The plain-text variant
CMAPA/1 carries the same header fields under the magic "CMAPA" and a
payload of whitespace-separated decimal codes; it exists for
hand-written fixtures and is parsed into memory on first read.

Binary tiles are fetched with positioned reads (os.pread), so a raster
holds no shared file-position state: multiple threads may stream
disjoint tiles concurrently, and peak memory per read is O(tile area)
regardless of raster size. A returned Tile is owned by the caller and
never aliased by this module.

Nodata is a reserved code declared in the header, never inferred from
the payload. Format version 1 carries no code census; the loader's
census-vs-legend check is reserved for future versions that declare
one.
"""

from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .legend import Legend

DEFAULT_TILE_SIZE = 1024

_DTYPES = {1: np.dtype("<u1"), 2: np.dtype("<u2"), 4: np.dtype("<u4")}
_HEADER_LIMIT = 128  # bytes; a valid v1 header is far shorter


@dataclass(frozen=True)
class Tile:
    """A rectangular window of class codes, owned by the caller."""

    origin_x: int
    origin_y: int
    data: np.ndarray  # 2-D, row-major

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValidationError("tile data must be 2-D")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class TileGrid:
    """Partition of a raster into ceil-division tiles; edges may be ragged."""

    tile_width: int
    tile_height: int
    tiles_x: int
    tiles_y: int

    def __post_init__(self):
        if min(self.tile_width, self.tile_height) < 1:
            raise ValidationError("tile dimensions must be positive")
        if min(self.tiles_x, self.tiles_y) < 1:
            raise ValidationError("tile counts must be positive")

    @classmethod
    def for_raster(cls, raster: "CategoricalRaster", tile_width: int = DEFAULT_TILE_SIZE,
                   tile_height: int | None = None) -> "TileGrid":
        tile_height = tile_width if tile_height is None else tile_height
        if min(tile_width, tile_height) < 1:
            raise ValidationError("tile dimensions must be positive")
        return cls(tile_width, tile_height,
                   math.ceil(raster.width / tile_width),
                   math.ceil(raster.height / tile_height))

    def indices(self):
        """All tile indices in deterministic row-major order."""
        for ty in range(self.tiles_y):
            for tx in range(self.tiles_x):
                yield (tx, ty)


@dataclass(frozen=True)
class AlignmentReport:
    same_dimensions: bool
    pixel_count: int
    notes: str


class CategoricalRaster:
    """A 2-D grid of class codes with a reserved nodata code.

    Immutable after open. Construct via open_raster or from_array.
    """

    def __init__(self, *, width: int, height: int, nodata_code: int,
                 code_width: int, legend: Legend, path: Path | None,
                 payload_offset: int = 0, ascii_payload: bool = False,
                 array: np.ndarray | None = None):
        if width <= 0 or height <= 0:
            raise ValidationError("zero dimension")
        if code_width not in _DTYPES:
            raise ValidationError(
                f"code width {code_width} not in {{1, 2, 4}}")
        if nodata_code in legend:
            raise ValidationError(
                f"nodata code {nodata_code} collides with a code of "
                f"legend {legend.id!r}")
        if not 0 <= nodata_code < (1 << (8 * code_width)):
            raise ValidationError(
                f"nodata code {nodata_code} does not fit {code_width}-byte codes")
        self.width = int(width)
        self.height = int(height)
        self.nodata_code = int(nodata_code)
        self.code_width = int(code_width)
        self.legend = legend
        self.path = path
        self._payload_offset = payload_offset
        self._ascii = ascii_payload
        self._array = array
        self._file = None
        self._load_lock = threading.Lock()
        if path is not None and not ascii_payload:
            self._file = open(path, "rb")

    # -- lifecycle ---------------------------------------------------

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self) -> "CategoricalRaster":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    # -- pixel access ------------------------------------------------

    @property
    def dtype(self) -> np.dtype:
        return _DTYPES[self.code_width]

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def _ensure_array(self) -> np.ndarray:
        """Payload of an in-memory or ASCII raster (lazy for CMAPA)."""
        if self._array is None:
            with self._load_lock:
                if self._array is None:
                    self._array = _parse_ascii_payload(self)
        return self._array

    def to_array(self) -> np.ndarray:
        """The whole payload as one array (test-scale convenience;
        O(raster area) memory, unlike tile streaming)."""
        grid = TileGrid.for_raster(self, self.width, self.height)
        return read_tile(self, grid, (0, 0), validate=False).data

    @property
    def _valid_code_lut(self) -> np.ndarray:
        """Boolean LUT over the code domain: legend codes and nodata."""
        lut = getattr(self, "_valid_lut_cache", None)
        if lut is None:
            top = max(max(self.legend.codes), self.nodata_code)
            lut = np.zeros(top + 1, dtype=bool)
            lut[list(self.legend.codes)] = True
            lut[self.nodata_code] = True
            self._valid_lut_cache = lut
        return lut


def open_raster(path, legend: Legend) -> CategoricalRaster:
    """Open a CMAP/1 or CMAPA/1 file; parses the header, loads no pixels."""
    path = Path(path)
    with open(path, "rb") as handle:
        header = handle.readline(_HEADER_LIMIT)
    if not header.endswith(b"\n"):
        raise ValidationError(f"{path}: malformed header (no newline)")
    try:
        tokens = header.decode("ascii").split()
    except UnicodeDecodeError:
        raise ValidationError(f"{path}: malformed header (not ASCII)") from None
    if len(tokens) != 6 or tokens[0] not in ("CMAP", "CMAPA"):
        raise ValidationError(f"{path}: malformed header {header!r}")
    if tokens[1] != "1":
        raise ValidationError(f"{path}: unsupported format version {tokens[1]}")
    try:
        width, height, nodata_code, code_width = (int(t) for t in tokens[2:])
    except ValueError:
        raise ValidationError(
            f"{path}: malformed header (non-integer field)") from None
    if width <= 0 or height <= 0:
        raise ValidationError(f"{path}: zero dimension")
    ascii_payload = tokens[0] == "CMAPA"
    raster = CategoricalRaster(width=width, height=height,
                               nodata_code=nodata_code,
                               code_width=code_width, legend=legend,
                               path=path, payload_offset=len(header),
                               ascii_payload=ascii_payload)
    if not ascii_payload:
        expected = len(header) + width * height * code_width
        actual = os.stat(path).st_size
        if actual != expected:
            raster.close()
            raise ValidationError(
                f"{path}: payload size mismatch (expected {expected} bytes, "
                f"file has {actual})")
    return raster


def _parse_ascii_payload(raster: CategoricalRaster) -> np.ndarray:
    with open(raster.path, "rb") as handle:
        handle.seek(raster._payload_offset)
        text = handle.read()
    values = np.array(text.split(), dtype=np.uint64)
    if values.size != raster.pixel_count:
        raise ValidationError(
            f"{raster.path}: payload has {values.size} codes, expected "
            f"{raster.pixel_count}")
    if values.size and int(values.max()) >= (1 << (8 * raster.code_width)):
        raise ValidationError(
            f"{raster.path}: code {int(values.max())} does not fit "
            f"{raster.code_width}-byte codes")
    return values.astype(raster.dtype).reshape(raster.height, raster.width)


def from_array(array, nodata_code: int, legend: Legend,
               code_width: int | None = None) -> CategoricalRaster:
    """Wrap an in-memory 2-D code array as a raster.

    The array is copied; the smallest code width that fits the data is
    chosen unless one is given.
    """
    array = np.asarray(array)
    if array.ndim != 2:
        raise ValidationError("raster array must be 2-D")
    if array.size == 0:
        raise ValidationError("zero dimension")
    if np.issubdtype(array.dtype, np.signedinteger) and array.min() < 0:
        raise ValidationError("negative codes are not representable")
    top = max(int(array.max()), int(nodata_code))
    if code_width is None:
        code_width = 1 if top < (1 << 8) else 2 if top < (1 << 16) else 4
    if top >= (1 << (8 * code_width)):
        raise ValidationError(
            f"code {top} does not fit {code_width}-byte codes")
    data = np.ascontiguousarray(array.astype(_DTYPES[code_width]))
    data.flags.writeable = False
    height, width = data.shape
    return CategoricalRaster(width=width, height=height,
                             nodata_code=nodata_code, code_width=code_width,
                             legend=legend, path=None, array=data)


def read_tile(raster: CategoricalRaster, grid: TileGrid,
              index: tuple[int, int], validate: bool = True) -> Tile:
    """Read one tile; repeated reads are identical, memory is O(tile area).

    With validate=True (the default) every code must be nodata or a
    legend code. The streaming cross-tab path reads with
    validate=False because its tally kernels perform the same check
    per pixel without a second pass.
    """
    if (grid.tiles_x != math.ceil(raster.width / grid.tile_width)
            or grid.tiles_y != math.ceil(raster.height / grid.tile_height)):
        raise ValidationError(
            f"tile grid {grid.tiles_x}x{grid.tiles_y} does not match a "
            f"{raster.width}x{raster.height} raster at tile size "
            f"{grid.tile_width}x{grid.tile_height}")
    tx, ty = index
    if not (0 <= tx < grid.tiles_x and 0 <= ty < grid.tiles_y):
        raise ValidationError(f"tile index {index} out of range")
    x0 = tx * grid.tile_width
    y0 = ty * grid.tile_height
    tile_w = min(grid.tile_width, raster.width - x0)
    tile_h = min(grid.tile_height, raster.height - y0)

    if raster._array is not None or raster._ascii:
        data = raster._ensure_array()[y0:y0 + tile_h, x0:x0 + tile_w].copy()
    else:
        data = _read_tile_binary(raster, x0, y0, tile_w, tile_h)

    if validate:
        _validate_tile_codes(raster, data)
    return Tile(origin_x=x0, origin_y=y0, data=data)


def _read_tile_binary(raster: CategoricalRaster, x0: int, y0: int,
                      tile_w: int, tile_h: int) -> np.ndarray:
    if raster._file is None:
        raise OSError(f"raster {raster.path} is closed")
    fd = raster._file.fileno()
    cw = raster.code_width
    dtype = raster.dtype
    base = raster._payload_offset
    if x0 == 0 and tile_w == raster.width:
        # full-width window: one contiguous positioned read
        nbytes = tile_w * tile_h * cw
        buf = os.pread(fd, nbytes, base + y0 * raster.width * cw)
        if len(buf) != nbytes:
            raise OSError(f"{raster.path}: short read at row {y0}")
        return np.frombuffer(buf, dtype=dtype).reshape(tile_h, tile_w).copy()
    data = np.empty((tile_h, tile_w), dtype=dtype)
    row_bytes = tile_w * cw
    for row in range(tile_h):
        offset = base + ((y0 + row) * raster.width + x0) * cw
        buf = os.pread(fd, row_bytes, offset)
        if len(buf) != row_bytes:
            raise OSError(f"{raster.path}: short read at row {y0 + row}")
        data[row] = np.frombuffer(buf, dtype=dtype)
    return data


def _validate_tile_codes(raster: CategoricalRaster, data: np.ndarray) -> None:
    if data.size == 0:
        return
    lut = raster._valid_code_lut
    top = int(data.max())
    if top < lut.size and bool(lut[data].all()):
        return
    flat = data.ravel()
    if top >= lut.size:
        bad_mask = flat >= lut.size
        bad_mask |= ~lut[np.minimum(flat, lut.size - 1)]
    else:
        bad_mask = ~lut[flat]
    bad = int(flat[bad_mask][0])
    raise ValidationError(
        f"pixel code {bad} absent from legend {raster.legend.id!r} "
        f"and not nodata")


def validate_alignment(a: CategoricalRaster,
                       b: CategoricalRaster) -> AlignmentReport:
    """Grid-identity check; sub-pixel geolocation is out of scope."""
    if a.width == b.width and a.height == b.height:
        return AlignmentReport(True, a.width * a.height,
                               f"dimensions match: {a.width}x{a.height}")
    return AlignmentReport(
        False, 0,
        f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")


def _pick_code_width(array: np.ndarray, nodata_code: int) -> int:
    top = max(int(array.max()) if array.size else 0, int(nodata_code))
    return 1 if top < (1 << 8) else 2 if top < (1 << 16) else 4


def write_cmap(path, array, nodata_code: int,
               code_width: int | None = None) -> Path:
    """Write a 2-D code array as a binary CMAP/1 file."""
    path = Path(path)
    array = np.asarray(array)
    if array.ndim != 2 or array.size == 0:
        raise ValidationError("raster array must be 2-D and non-empty")
    if code_width is None:
        code_width = _pick_code_width(array, nodata_code)
    height, width = array.shape
    with open(path, "wb") as handle:
        handle.write(
            f"CMAP 1 {width} {height} {nodata_code} {code_width}\n"
            .encode("ascii"))
        handle.write(np.ascontiguousarray(
            array.astype(_DTYPES[code_width])).tobytes())
    return path


def write_cmapa(path, array, nodata_code: int,
                code_width: int | None = None) -> Path:
    """Write a 2-D code array as a plain-text CMAPA/1 file."""
    path = Path(path)
    array = np.asarray(array)
    if array.ndim != 2 or array.size == 0:
        raise ValidationError("raster array must be 2-D and non-empty")
    if code_width is None:
        code_width = _pick_code_width(array, nodata_code)
    height, width = array.shape
    with open(path, "w", encoding="ascii") as handle:
        handle.write(f"CMAPA 1 {width} {height} {nodata_code} {code_width}\n")
        for row in array:
            handle.write(" ".join(str(int(code)) for code in row))
            handle.write("\n")
    return path
