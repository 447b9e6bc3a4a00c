"""Binary PGM (P5) reading and writing, plus a small in-process read cache.

Images are stored 8-bit and mapped to/from float64 [0,1]; masks use the
two values {0, 255} and map to/from boolean arrays.
"""

import os

import numpy as np

from .errors import DataError


def write_pgm(path, img):
    """Write a float image in [0,1] as an 8-bit binary PGM."""
    img = np.asarray(img, dtype=np.float64)
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


def write_mask_pgm(path, mask):
    """Write a boolean mask as a {0,255} binary PGM."""
    mask = np.asarray(mask, dtype=np.bool_)
    write_pgm(path, mask.astype(np.float64))


def _read_pgm_bytes(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read image file {path}: {exc}") from exc

    # header = 4 tokens (magic, width, height, maxval), '#' starts a comment
    tokens = []
    i = 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise DataError(f"{path}: truncated PGM header")
        tokens.append(data[i:j])
        i = j
    if tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise DataError(f"{path}: bad PGM header") from exc
    if maxval != 255 or w < 1 or h < 1:
        raise DataError(f"{path}: unsupported PGM geometry {w}x{h}/{maxval}")
    raster = data[i + 1 : i + 1 + w * h]
    if len(raster) != w * h:
        raise DataError(f"{path}: raster truncated ({len(raster)} of {w * h} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


def read_pgm(path):
    """Read an 8-bit PGM as a float64 array in [0,1]."""
    return _read_pgm_bytes(path).astype(np.float64) / 255.0


def read_mask_pgm(path):
    """Read a {0,255} PGM as a boolean mask."""
    return _read_pgm_bytes(path) >= 128


class ImageCache:
    """Caches decoded image/mask arrays by absolute path for one run."""

    def __init__(self):
        self._images = {}
        self._masks = {}

    def image(self, path):
        key = os.path.abspath(path)
        if key not in self._images:
            self._images[key] = read_pgm(path)
        return self._images[key]

    def mask(self, path):
        key = os.path.abspath(path)
        if key not in self._masks:
            self._masks[key] = read_mask_pgm(path)
        return self._masks[key]

    def pair(self, image_path, mask_path):
        return self.image(image_path), self.mask(mask_path)
