"""Binary PGM/PPM images and the PLSW generator weight container.

PLSW layout (little-endian throughout)::

    b"PLSW"  u32 version
    u32 entry count
    per entry: u32 name length, UTF-8 name, u32 rank, u32 dims[rank],
               float32 payload[prod(dims)]

The ``meta`` entry holds ``[d, k, r0, out_channels, slope, widths...]``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .generator import GeneratorError, GeneratorSpec

MAGIC = b"PLSW"
VERSION = 1
META = "meta"


class FormatError(ValueError):
    pass


# -- netpbm -------------------------------------------------------------------


def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte after the last.
    """
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated header")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos : pos + 1].isspace():
        raise FormatError("malformed header: missing separator before raster")
    return tokens, pos + 1


def decode_image(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}; expected P5 or P6")
    tokens, offset = _header_tokens(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"malformed header values {tokens!r}") from None
    if width <= 0 or height <= 0:
        raise FormatError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is supported")
    channels = 1 if magic == b"P5" else 3
    size = width * height * channels
    raster = data[2 + offset : 2 + offset + size]
    if len(raster) < size:
        raise FormatError(f"truncated payload: expected {size} bytes, got {len(raster)}")
    img = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    return img.reshape(height, width) if channels == 1 else img.reshape(height, width, 3)


def encode_image(image) -> bytes:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"cannot encode image of shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise FormatError("image has non-finite values")
    # clamp, then round half up
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + q.tobytes()


def read_image(path) -> np.ndarray:
    try:
        return decode_image(Path(path).read_bytes())
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_image(path, image) -> None:
    Path(path).write_bytes(encode_image(image))


# -- PLSW -------------------------------------------------------------------------


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def decode_tensors(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}; not a PLSW file")
    pos = 4

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"truncated file while reading {what}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported PLSW version {version}")
    tensors = {}
    for index in range(count):
        (name_len,) = struct.unpack("<I", take(4, f"entry {index} name length"))
        try:
            name = take(name_len, f"entry {index} name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"entry {index}: name is not valid UTF-8") from None
        (rank,) = struct.unpack("<I", take(4, f"entry {name!r} rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"entry {name!r} dims"))
        size = int(np.prod(dims, dtype=np.int64))
        payload = take(4 * size, f"entry {name!r} payload ({size} floats)")
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after last entry")
    return tensors


def spec_tensors(spec: GeneratorSpec) -> dict[str, np.ndarray]:
    meta = np.array([spec.d, spec.k, spec.r0, spec.out_channels, spec.slope, *spec.widths])
    return {META: meta, **spec.weights}


def spec_from_tensors(tensors: dict[str, np.ndarray]) -> GeneratorSpec:
    if not tensors:
        raise FormatError("weight file has no tensors; mapping and synthesis weights are required")
    if META not in tensors:
        raise FormatError("weight file has no 'meta' entry")
    meta = tensors[META]
    if meta.ndim != 1 or meta.size < 5:
        raise FormatError("malformed 'meta' entry")
    d, k, r0, out_channels = (int(x) for x in meta[:4])
    widths = tuple(int(x) for x in meta[5:])
    weights = {n: a for n, a in tensors.items() if n != META}
    try:
        return GeneratorSpec(d, k, r0, widths, weights, out_channels, float(meta[4]))
    except GeneratorError as exc:
        raise FormatError(f"invalid generator weights: {exc}") from None


def write_weights(path, spec: GeneratorSpec) -> None:
    Path(path).write_bytes(encode_tensors(spec_tensors(spec)))


def read_weights(path) -> GeneratorSpec:
    try:
        return spec_from_tensors(decode_tensors(Path(path).read_bytes()))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
