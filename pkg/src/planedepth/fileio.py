"""File formats: PFM float maps, netpbm images, PNG, and normal colorizing.

PFM is the float-map format used throughout the stereo ecosystem: a ``Pf``
(1-channel) or ``PF`` (3-channel) magic, ASCII dimensions, a scale line whose
sign encodes endianness (negative = little-endian), then rows of 32-bit
floats stored bottom to top. Non-finite values mark invalid pixels.
"""

import numpy as np
from PIL import Image


class MalformedHeader(ValueError):
    """File header does not follow the declared format."""


class TruncatedPayload(ValueError):
    """File ends before the declared pixel payload is complete."""


class UnsupportedChannelCount(ValueError):
    """Only 1- and 3-channel maps exist in the PFM format."""


def _read_token(f, what):
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise MalformedHeader(f"unexpected end of header while reading {what}")
        if c in b"#" and not tok:
            while c and c != b"\n":
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                if c == b"\r":  # tolerate CRLF line ends
                    pos = f.tell()
                    if f.read(1) != b"\n":
                        f.seek(pos)
                return tok
            continue
        tok += c


def read_pfm(path):
    """Read a PFM file.

    Returns:
        (values, valid): float64 grid of shape (H, W) or (H, W, 3) and the
        (H, W) validity mask (False where any channel is non-finite).
    """
    with open(path, "rb") as f:
        magic = _read_token(f, "magic")
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise MalformedHeader(f"not a PFM file (magic {magic!r})")
        try:
            width = int(_read_token(f, "width"))
            height = int(_read_token(f, "height"))
            scale = float(_read_token(f, "scale"))
        except ValueError as exc:
            raise MalformedHeader(str(exc)) from None
        if width <= 0 or height <= 0:
            raise MalformedHeader(f"bad dimensions {width} x {height}")
        if scale == 0:
            raise MalformedHeader("scale must be nonzero")
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        raw = f.read(count * 4)
    if len(raw) != count * 4:
        raise TruncatedPayload(
            f"expected {count * 4} payload bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype=endian + "f4").astype(np.float64)
    shape = (height, width, 3) if channels == 3 else (height, width)
    values = np.flipud(data.reshape(shape)).copy()
    finite = np.isfinite(values)
    valid = finite.all(axis=-1) if channels == 3 else finite
    return values, valid


def write_pfm(values, path, valid=None):
    """Write a grid as little-endian PFM; invalid pixels become +inf."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        magic = b"Pf"
    elif values.ndim == 3 and values.shape[2] == 3:
        magic = b"PF"
    else:
        raise UnsupportedChannelCount(
            f"PFM holds 1 or 3 channels, got shape {values.shape}")
    out = values.copy()
    if valid is not None:
        out[~np.asarray(valid, dtype=bool)] = np.inf
    h, w = out.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(out).astype("<f4").tobytes())


def read_netpbm(path):
    """Read a PGM/PPM image (P2/P3/P5/P6), normalized by its maxval to [0, 1]."""
    with open(path, "rb") as f:
        magic = _read_token(f, "magic")
        if magic not in (b"P2", b"P3", b"P5", b"P6"):
            raise MalformedHeader(f"unsupported netpbm magic {magic!r}")
        color = magic in (b"P3", b"P6")
        ascii_mode = magic in (b"P2", b"P3")
        try:
            width = int(_read_token(f, "width"))
            height = int(_read_token(f, "height"))
            maxval = int(_read_token(f, "maxval"))
        except ValueError as exc:
            raise MalformedHeader(str(exc)) from None
        if width <= 0 or height <= 0 or maxval <= 0 or maxval > 65535:
            raise MalformedHeader("bad netpbm dimensions or maxval")
        count = width * height * (3 if color else 1)
        if ascii_mode:
            try:
                data = np.array([int(_read_token(f, "pixel"))
                                 for _ in range(count)], dtype=np.float64)
            except MalformedHeader:
                raise TruncatedPayload("ascii pixel data ended early") from None
        else:
            itemsize = 2 if maxval > 255 else 1
            raw = f.read(count * itemsize)
            if len(raw) != count * itemsize:
                raise TruncatedPayload(
                    f"expected {count * itemsize} payload bytes, got {len(raw)}")
            dtype = ">u2" if itemsize == 2 else "u1"
            data = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    data /= maxval
    shape = (height, width, 3) if color else (height, width)
    return data.reshape(shape)


def load_image(path):
    """Load a guide/confidence image as float64 in [0, 1] by extension."""
    name = str(path).lower()
    if name.endswith((".pgm", ".ppm")):
        return read_netpbm(path)
    img = Image.open(path)
    if img.mode in ("I;16", "I"):
        return np.asarray(img, dtype=np.float64) / 65535.0
    if img.mode in ("RGBA", "P"):
        img = img.convert("RGB")
    elif img.mode == "LA":
        img = img.convert("L")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr


def write_png(values_uint8, path):
    """Write an 8-bit grayscale or RGB array as PNG."""
    Image.fromarray(np.asarray(values_uint8, dtype=np.uint8)).save(path)


def colorize_normals(normals, valid=None):
    """Map unit normals to RGB: round(255 * (n + 1) / 2); invalid pixels white."""
    normals = np.asarray(normals, dtype=np.float64)
    if valid is None:
        valid = np.all(np.isfinite(normals), axis=-1)
    safe = np.where(valid[..., None], normals, 0.0)
    rgb = np.floor(255.0 * (safe + 1.0) / 2.0 + 0.5)
    rgb = np.clip(rgb, 0, 255).astype(np.uint8)
    rgb[~valid] = 255
    return rgb
