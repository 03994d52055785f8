"""Grayscale image I/O: PGM (P2/P5) and MNIST IDX readers, PGM writer, point rasterizer."""

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import IndexOutOfRange, MalformedHeader, UnsupportedMagic

IDX_IMAGES_MAGIC = 0x00000803


@dataclass(frozen=True)
class ImageGrid:
    intensities: np.ndarray  # (n_rows, n_cols), values in [0, 1]

    @property
    def n_rows(self):
        return self.intensities.shape[0]

    @property
    def n_cols(self):
        return self.intensities.shape[1]


def _pgm_tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens = []
    n = len(data)
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
            raise MalformedHeader("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pgm(data):
    """Decode PGM bytes into an :class:`ImageGrid` with intensities divided by maxval."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise MalformedHeader(f"not a PGM file (magic {magic!r})")
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise MalformedHeader("non-integer PGM header field") from None
    if w < 1 or h < 1 or not 0 < maxval <= 65535:
        raise MalformedHeader(f"invalid PGM header: {w}x{h}, maxval {maxval}")
    if magic == b"P2":
        body = data[pos:].split()
        if len(body) < w * h:
            raise MalformedHeader(f"expected {w * h} samples, found {len(body)}")
        pixels = np.array([int(v) for v in body[: w * h]], dtype=np.float64)
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos : pos + w * h * dtype.itemsize]
        if len(raw) < w * h * dtype.itemsize:
            raise MalformedHeader("truncated P5 raster")
        pixels = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    if np.any(pixels > maxval):
        raise MalformedHeader("sample exceeds maxval")
    return ImageGrid(pixels.reshape(h, w) / maxval)


def load_pgm(path):
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def load_idx(path, index=0):
    """Image ``index`` of an MNIST-style IDX image file (magic ``0x00000803``)."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise MalformedHeader("truncated IDX header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise UnsupportedMagic(f"IDX magic {magic:#010x} is not an unsigned-byte image file")
        if not 0 <= index < count:
            raise IndexOutOfRange(f"image index {index} outside [0, {count})")
        fh.seek(16 + index * rows * cols)
        raw = fh.read(rows * cols)
    if len(raw) < rows * cols:
        raise MalformedHeader("truncated IDX image data")
    return ImageGrid(np.frombuffer(raw, dtype=np.uint8).reshape(rows, cols) / 255.0)


def load_image(path, index=0):
    """Dispatch on the file's leading bytes: PGM magic or IDX."""
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"P2", b"P5"):
        return load_pgm(path)
    return load_idx(path, index)


def write_pgm(path, intensities, maxval=255, binary=True):
    """Write intensities in ``[0, 1]`` as a P5 (default) or P2 file."""
    I = np.clip(np.asarray(intensities, dtype=np.float64), 0.0, 1.0)
    h, w = I.shape
    q = np.rint(I * maxval).astype(np.int64)
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
            fh.write(q.astype(">u2" if maxval > 255 else "u1").tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n{maxval}\n".encode())
            for row in q:
                fh.write((" ".join(str(v) for v in row) + "\n").encode())


def rasterize(points, n=28):
    """Max-normalized 2-D histogram on the ``n x n`` grid of pixel centres ``(i/(n-1), j/(n-1))``."""
    P = np.asarray(points, dtype=np.float64)
    idx = np.rint(P * (n - 1)).astype(np.int64)
    keep = np.all((idx >= 0) & (idx < n), axis=1)
    H = np.zeros((n, n))
    np.add.at(H, (idx[keep, 0], idx[keep, 1]), 1.0)
    top = H.max()
    return H / top if top > 0 else H


def normalized_cross_correlation(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / denom) if denom > 0 else 0.0
