"""Readers and writers for scenes, masks and score fields.

Formats
-------
BSQ
    Raw band-sequential binary (float32 little-endian unless the header
    says ``dtype = float64``) with a text header of ``key = value`` lines.
    Only ``height``, ``width``, ``bands`` and ``dtype`` are honored.
CSV
    One pixel per row, one band per column.  The spatial shape comes from a
    sidecar header (same syntax as BSQ) or an explicit ``dims`` argument;
    without either the image is ``n x 1``.
PGM
    Masks and detection maps, P2 (ASCII) or P5 (binary).  Nonzero = anomaly.
"""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np

from .detectors import ScoreField
from .errors import HeaderError, InvalidData, NonFiniteData, ShapeMismatch, SizeMismatch
from .linalg import DataMatrix
from .scenes import SceneBundle

__all__ = [
    "header_path",
    "read_header",
    "write_header",
    "load_bsq",
    "write_bsq",
    "load_csv",
    "write_csv_image",
    "read_pgm",
    "write_pgm",
    "load_mask",
    "load_scene",
    "save_scene",
    "save_scores",
    "load_scores",
    "save_map",
]

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def header_path(path) -> Path:
    """``scene.bsq`` -> ``scene.hdr``."""
    return Path(path).with_suffix(".hdr")


def read_header(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise HeaderError(f"header file {path} not found")
    meta = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise HeaderError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        meta[key.lower()] = value
    out = {}
    for key in ("height", "width", "bands"):
        if key not in meta:
            continue
        try:
            out[key] = int(meta[key])
        except ValueError:
            raise HeaderError(f"{path}: {key} must be an integer, got {meta[key]!r}") from None
        if out[key] < 1:
            raise HeaderError(f"{path}: {key} must be >= 1")
    dtype = meta.get("dtype", "float32").lower()
    if dtype not in _DTYPES:
        raise HeaderError(f"{path}: unsupported dtype {dtype!r} (float32 or float64)")
    out["dtype"] = dtype
    return out


def write_header(path, height: int, width: int, bands: int, dtype: str = "float32") -> None:
    Path(path).write_text(
        f"height = {height}\nwidth = {width}\nbands = {bands}\ndtype = {dtype}\n")


def _require(meta: dict, path, keys=("height", "width", "bands")) -> None:
    missing = [k for k in keys if k not in meta]
    if missing:
        raise HeaderError(f"{path}: missing header keys {missing}")


def load_bsq(path, header=None) -> DataMatrix:
    path = Path(path)
    hdr = Path(header) if header is not None else header_path(path)
    meta = read_header(hdr)
    _require(meta, hdr)
    h, w, b = meta["height"], meta["width"], meta["bands"]
    raw = np.fromfile(path, dtype=_DTYPES[meta["dtype"]])
    if raw.size != h * w * b:
        raise SizeMismatch(f"{path}: expected {h}*{w}*{b}={h * w * b} values, found {raw.size}")
    if not np.all(np.isfinite(raw)):
        raise NonFiniteData(f"{path}: non-finite values in image")
    cube = raw.reshape(b, h * w).T.astype(np.float64)
    return DataMatrix(cube, (h, w))


def write_bsq(path, values, shape: tuple[int, int], dtype: str = "float32") -> None:
    values = np.asarray(values)
    if values.ndim == 1:
        values = values[:, None]
    h, w = shape
    if values.shape[0] != h * w:
        raise ShapeMismatch(f"{values.shape[0]} pixels do not fit a {h}x{w} image")
    np.ascontiguousarray(values.T, dtype=_DTYPES[dtype]).tofile(path)
    write_header(header_path(path), h, w, values.shape[1], dtype)


def _parse_dims(dims) -> tuple[int, int]:
    if isinstance(dims, str):
        parts = re.split(r"[x,\s]+", dims.strip())
        if len(parts) != 2:
            raise InvalidData(f"dims must look like HEIGHTxWIDTH, got {dims!r}")
        try:
            return int(parts[0]), int(parts[1])
        except ValueError:
            raise InvalidData(f"dims must be integers, got {dims!r}") from None
    h, w = dims
    return int(h), int(w)


def load_csv(path, dims=None) -> DataMatrix:
    path = Path(path)
    try:
        values = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise InvalidData(f"{path}: malformed CSV ({exc})") from None
    if values.size == 0:
        raise InvalidData(f"{path}: empty CSV")
    if not np.all(np.isfinite(values)):
        raise NonFiniteData(f"{path}: non-finite values in image")
    if dims is None and header_path(path).exists():
        meta = read_header(header_path(path))
        _require(meta, header_path(path), ("height", "width"))
        dims = (meta["height"], meta["width"])
    shape = _parse_dims(dims) if dims is not None else (values.shape[0], 1)
    if shape[0] * shape[1] != values.shape[0]:
        raise SizeMismatch(f"{path}: {values.shape[0]} rows do not fit a "
                           f"{shape[0]}x{shape[1]} image")
    return DataMatrix(values, shape)


def write_csv_image(path, image: DataMatrix) -> None:
    np.savetxt(path, image.values, delimiter=",", fmt="%.17g")
    write_header(header_path(path), *image.shape, image.band_count, "float64")


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i >= len(data):
            raise HeaderError("truncated PGM header")
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = _pgm_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise HeaderError(f"{path}: not a PGM file (magic {magic!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise HeaderError(f"{path}: malformed PGM header") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise HeaderError(f"{path}: invalid PGM dimensions or maxval")
    if magic == b"P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        body = data[pos + 1:]
        img = np.frombuffer(body, dtype=dtype)
    else:
        try:
            img = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise InvalidData(f"{path}: malformed P2 pixel data") from None
    if img.size != w * h:
        raise SizeMismatch(f"{path}: expected {w * h} pixels, found {img.size}")
    return img.reshape(h, w).astype(np.int64)


def write_pgm(path, image, binary: bool = True, maxval: int = 255) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ShapeMismatch("PGM images must be 2-D")
    h, w = img.shape
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode()
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            fh.write(np.ascontiguousarray(img, dtype=np.uint8 if maxval < 256 else ">u2").tobytes())
        else:
            for row in img:
                fh.write((" ".join(str(int(v)) for v in row) + "\n").encode())


def load_mask(path, shape: tuple[int, int] | None = None) -> np.ndarray:
    img = read_pgm(path)
    if shape is not None and tuple(img.shape) != tuple(shape):
        raise ShapeMismatch(f"mask is {img.shape[0]}x{img.shape[1]}, image is "
                            f"{shape[0]}x{shape[1]}")
    return (img != 0).astype(np.uint8).ravel()


def load_scene(image_path, fmt: str | None = None, dims=None, mask_path=None,
               header=None) -> SceneBundle:
    """Load an image (``fmt`` in ``{"csv", "bsq"}``, inferred from the suffix) and optional mask."""
    image_path = Path(image_path)
    if fmt is None:
        fmt = "csv" if image_path.suffix.lower() == ".csv" else "bsq"
    if fmt == "bsq":
        image = load_bsq(image_path, header)
    elif fmt == "csv":
        image = load_csv(image_path, dims)
    else:
        raise InvalidData(f"unknown format {fmt!r}")
    truth = load_mask(mask_path, image.shape) if mask_path else None
    return SceneBundle(image, truth, f"{fmt}:{os.fspath(image_path)}")


def save_scene(bundle: SceneBundle, directory, fmt: str = "bsq", stem: str = "scene") -> dict:
    """Write image (+ header) and mask; return the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    if fmt == "bsq":
        paths["image"] = directory / f"{stem}.bsq"
        write_bsq(paths["image"], bundle.image.values, bundle.shape)
    elif fmt == "csv":
        paths["image"] = directory / f"{stem}.csv"
        write_csv_image(paths["image"], bundle.image)
    else:
        raise InvalidData(f"unknown format {fmt!r}")
    if bundle.truth is not None:
        paths["mask"] = directory / f"{stem}_mask.pgm"
        write_pgm(paths["mask"], bundle.truth.reshape(bundle.shape) * 255)
    return paths


def save_scores(field: ScoreField, path) -> None:
    """Scores as float32: ``.csv`` (9 significant digits, row-major) or ``.bsq``."""
    if not path:
        raise InvalidData("empty output path")
    path = Path(path)
    s = np.asarray(field.scores, dtype=np.float32)
    shape = field.shape if field.shape is not None else (s.shape[0], 1)
    if path.suffix.lower() == ".bsq":
        write_bsq(path, s, shape)
    else:
        np.savetxt(path, s.reshape(shape), delimiter=",", fmt="%.9g")
        write_header(header_path(path), *shape, 1)


def load_scores(path) -> ScoreField:
    path = Path(path)
    if path.suffix.lower() == ".bsq":
        img = load_bsq(path)
        return ScoreField(img.values[:, 0].astype(np.float32), img.shape)
    try:
        grid = np.loadtxt(path, delimiter=",", dtype=np.float32, ndmin=2)
    except ValueError as exc:
        raise InvalidData(f"{path}: malformed score file ({exc})") from None
    if not np.all(np.isfinite(grid)):
        raise NonFiniteData(f"{path}: non-finite scores")
    return ScoreField(grid.ravel(), (grid.shape[0], grid.shape[1]))


def save_map(binary_image, path) -> None:
    if not path:
        raise InvalidData("empty output path")
    write_pgm(path, (np.asarray(binary_image) != 0).astype(np.uint8) * 255)
