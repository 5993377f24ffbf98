"""Pixel-level utilities: grid partition, central crops, tile extraction.

Partition and crop are pure integer geometry; extraction decodes the source
with Pillow and re-encodes the tile (PNG by default so pixel comparisons
stay exact). PNG text metadata from the source is carried over into
extracted tiles, and the tile origin/size is recorded under the
``countforge-tile`` key, so downstream consumers (the mock model in
particular) can recover which region of which image they were handed.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

from PIL import Image, PngImagePlugin, UnidentifiedImageError

from .errors import DecodeError, DegenerateCrop, ImageTooSmall, TileOutOfBounds

TILE_METADATA_KEY = "countforge-tile"

_MEDIA_TYPES = {"png": "image/png", "jpeg": "image/jpeg"}


@dataclass(frozen=True)
class TileSpec:
    """One axis-aligned region of a source image, in pixels."""

    x: int
    y: int
    w: int
    h: int
    row: int = 0
    col: int = 0

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValueError(f"tile origin must be non-negative, got ({self.x}, {self.y})")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"tile size must be positive, got {self.w}x{self.h}")

    def box(self) -> tuple[int, int, int, int]:
        """Pillow-style (left, upper, right, lower) box."""
        return (self.x, self.y, self.x + self.w, self.y + self.h)


def full_tile(width: int, height: int) -> TileSpec:
    return TileSpec(0, 0, width, height)


def _axis_offsets(total: int, parts: int) -> list[tuple[int, int]]:
    # Remainder pixels go to the leftmost/topmost tiles.
    base, rem = divmod(total, parts)
    offsets = []
    pos = 0
    for i in range(parts):
        size = base + (1 if i < rem else 0)
        offsets.append((pos, size))
        pos += size
    return offsets


def grid_partition(width: int, height: int, l: int) -> list[TileSpec]:
    """Partition a width x height image into an l x l grid of disjoint tiles.

    Tiles exactly cover the image, differ by at most one pixel per axis,
    and are returned in row-major order.
    """
    if l < 1:
        raise ValueError(f"grid size must be >= 1, got {l}")
    if width < l or height < l:
        raise ImageTooSmall(f"cannot cut {width}x{height} image into {l}x{l} tiles")
    cols = _axis_offsets(width, l)
    rows = _axis_offsets(height, l)
    return [
        TileSpec(x=x, y=y, w=w, h=h, row=r, col=c)
        for r, (y, h) in enumerate(rows)
        for c, (x, w) in enumerate(cols)
    ]


def central_crop(width: int, height: int, fraction: float) -> TileSpec:
    """Centered crop covering ``fraction`` of each dimension.

    Sizes round half up; the centering offset biases toward the top-left
    by at most one pixel.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    w = int(fraction * width + 0.5)
    h = int(fraction * height + 0.5)
    if w < 1 or h < 1:
        raise DegenerateCrop(
            f"fraction {fraction} of {width}x{height} collapses below one pixel"
        )
    return TileSpec(x=(width - w) // 2, y=(height - h) // 2, w=w, h=h)


def image_size(image_path: str | Path) -> tuple[int, int]:
    """Decode just the dimensions of an image file."""
    try:
        with Image.open(image_path) as im:
            return im.size
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode {image_path}: {exc}") from exc


def extract_and_encode(
    image_path: str | Path, tile: TileSpec, format: str = "png"
) -> tuple[bytes, str]:
    """Cut one tile out of an image file and return (bytes, media type)."""
    if format not in _MEDIA_TYPES:
        raise ValueError(f"unsupported format {format!r}")
    try:
        with Image.open(image_path) as im:
            im.load()
            width, height = im.size
            source_text = dict(getattr(im, "text", {}) or {})
            if tile.x + tile.w > width or tile.y + tile.h > height:
                raise TileOutOfBounds(
                    f"tile {tile.box()} exceeds image bounds {width}x{height}"
                )
            region = im.crop(tile.box())
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode {image_path}: {exc}") from exc

    buf = io.BytesIO()
    if format == "png":
        info = PngImagePlugin.PngInfo()
        for key, value in source_text.items():
            info.add_text(key, str(value))
        info.add_text(TILE_METADATA_KEY, f"{tile.x},{tile.y},{tile.w},{tile.h}")
        # Tiles are transport payloads; trade compression for encode speed.
        region.save(buf, format="PNG", pnginfo=info, compress_level=1)
    else:
        if region.mode not in ("RGB", "L"):
            region = region.convert("RGB")
        region.save(buf, format="JPEG")
    return buf.getvalue(), _MEDIA_TYPES[format]


def decode_tile_metadata(data: bytes) -> tuple[dict[str, str], TileSpec | None]:
    """Read PNG text metadata and the embedded tile region, if any."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            # Chunks ahead of the pixel data land in ``info`` at open time;
            # decode the pixels only when nothing was found there.
            text = {k: v for k, v in im.info.items() if isinstance(v, str)}
            if not text:
                im.load()
                text = dict(getattr(im, "text", {}) or {})
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"cannot decode image bytes: {exc}") from exc
    tile = None
    raw = text.get(TILE_METADATA_KEY)
    if raw:
        try:
            x, y, w, h = (int(v) for v in raw.split(","))
            tile = TileSpec(x=x, y=y, w=w, h=h)
        except (ValueError, TypeError):
            tile = None
    return text, tile
