"""Binary PGM (P5) / PPM (P6) image IO, 8-bit, dependency-free."""

import numpy as np


class PnmError(ValueError):
    pass


def write_pnm(path, image):
    """Write a (H,W) uint8 array as P5 or an (H,W,3) array as P6."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise PnmError(f"image must be uint8, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise PnmError(f"image must be (H,W) or (H,W,3), got shape {img.shape}")
    h, w = img.shape[:2]
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(img).tobytes())


def read_pnm(path):
    """Read a binary P5/P6 file into a uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise PnmError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        w, h, maxval = (int(x) for x in fields)
    except ValueError as exc:
        raise PnmError(f"{path}: malformed header") from exc
    if maxval != 255:
        raise PnmError(f"{path}: only 8-bit images supported, maxval={maxval}")
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    payload = data[pos:pos + need]
    if len(payload) != need:
        raise PnmError(f"{path}: expected {need} pixel bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(h, w).copy()
    return arr.reshape(h, w, 3).copy()
