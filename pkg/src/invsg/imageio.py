"""Render targets and image formats: PFM (read/write), Radiance RGBE (read),
PNG previews with gamma 2.2 encode.

PFM layout: "PF" (color) or "Pf" (gray) header, "width height", scale line
whose sign gives endianness (negative = little-endian), then float32 rows
bottom-to-top.  Radiance pixels decode as c * 2^(e - 136) per channel.
"""

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

GAMMA = 2.2


class ImageFormatError(ValueError):
    """Malformed image file; message carries the byte offset when known."""


@dataclass
class RenderTarget:
    """Linear-radiance image plus a binary hit mask."""

    rgb: np.ndarray     # [H, W, 3] float64, linear radiance
    alpha: np.ndarray   # [H, W] float64 in {0, 1}

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3 or self.alpha.shape != self.rgb.shape[:2]:
            raise ValueError("RenderTarget needs rgb [H,W,3] and alpha [H,W]")
        if not np.all(np.isfinite(self.rgb)) or np.any(self.rgb < 0.0):
            raise ValueError("radiance must be finite and non-negative")
        if not np.all((self.alpha == 0.0) | (self.alpha == 1.0)):
            raise ValueError("alpha must be binary")

    @property
    def width(self):
        return self.rgb.shape[1]

    @property
    def height(self):
        return self.rgb.shape[0]

    def mask(self) -> np.ndarray:
        return self.alpha > 0.5

    def save(self, stem):
        """Write <stem>.pfm (radiance), <stem>_alpha.pfm (mask), <stem>.png (preview)."""
        save_pfm(f"{stem}.pfm", self.rgb)
        save_pfm(f"{stem}_alpha.pfm", self.alpha)
        save_png(f"{stem}.png", self.rgb)

    @classmethod
    def load(cls, stem):
        return cls(load_pfm(f"{stem}.pfm"), np.round(load_pfm(f"{stem}_alpha.pfm")))


def _read_token(f, what):
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise ImageFormatError(f"unexpected end of file at offset {f.tell()} reading {what}")
        if c in b" \t\r\n":
            if tok:
                return tok
            continue
        tok += c


def load_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _read_token(f, "header")
        if magic not in (b"PF", b"Pf"):
            raise ImageFormatError(f"{path}: bad PFM magic {magic!r} at offset 0")
        channels = 3 if magic == b"PF" else 1
        try:
            width = int(_read_token(f, "width"))
            height = int(_read_token(f, "height"))
            scale = float(_read_token(f, "scale"))
        except ValueError:
            raise ImageFormatError(f"{path}: malformed PFM header near offset {f.tell()}")
        endian = "<" if scale < 0.0 else ">"
        count = width * height * channels
        buf = f.read(count * 4)
        if len(buf) != count * 4:
            raise ImageFormatError(f"{path}: truncated pixel data at offset {f.tell()}")
        data = np.frombuffer(buf, dtype=endian + "f4").reshape(height, width, channels)
        data = data[::-1]  # rows are stored bottom-to-top
        return np.ascontiguousarray(data[..., 0] if channels == 1 else data).astype(np.float64)


def save_pfm(path, image):
    image = np.asarray(image)
    gray = image.ndim == 2
    header = b"Pf\n" if gray else b"PF\n"
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(image[::-1], dtype="<f4").tobytes())


def load_hdr(path) -> np.ndarray:
    """Radiance RGBE reader (flat and adaptive-RLE scanlines)."""
    with open(path, "rb") as f:
        line = f.readline()
        if not line.startswith(b"#?"):
            raise ImageFormatError(f"{path}: missing Radiance signature at offset 0")
        while True:
            line = f.readline()
            if not line:
                raise ImageFormatError(f"{path}: unexpected end of header at offset {f.tell()}")
            if line.strip() == b"":
                break
            if line.startswith(b"FORMAT=") and b"32-bit_rle_rgbe" not in line:
                raise ImageFormatError(f"{path}: unsupported FORMAT {line!r}")
        dims = f.readline().split()
        if len(dims) != 4 or dims[0] != b"-Y" or dims[2] != b"+X":
            raise ImageFormatError(f"{path}: unsupported resolution line at offset {f.tell()}")
        height, width = int(dims[1]), int(dims[3])
        rgbe = np.zeros((height, width, 4), dtype=np.uint8)
        for row in range(height):
            head = f.read(4)
            if len(head) != 4:
                raise ImageFormatError(f"{path}: truncated scanline at offset {f.tell()}")
            if head[0] == 2 and head[1] == 2 and (head[2] << 8 | head[3]) == width and width >= 8:
                for ch in range(4):
                    col = 0
                    while col < width:
                        n = f.read(1)
                        if not n:
                            raise ImageFormatError(f"{path}: truncated RLE at offset {f.tell()}")
                        n = n[0]
                        if n > 128:  # run
                            v = f.read(1)
                            rgbe[row, col:col + n - 128, ch] = v[0]
                            col += n - 128
                        else:        # literal
                            lit = f.read(n)
                            if len(lit) != n:
                                raise ImageFormatError(f"{path}: truncated literal at offset {f.tell()}")
                            rgbe[row, col:col + n, ch] = np.frombuffer(lit, dtype=np.uint8)
                            col += n
            else:
                flat = head + f.read((width - 1) * 4)
                if len(flat) != width * 4:
                    raise ImageFormatError(f"{path}: truncated flat scanline at offset {f.tell()}")
                rgbe[row] = np.frombuffer(flat, dtype=np.uint8).reshape(width, 4)
    return rgbe_to_rgb(rgbe)


def rgbe_to_rgb(rgbe: np.ndarray) -> np.ndarray:
    """Standard decode: value = mantissa * 2^(exponent - 136)."""
    e = rgbe[..., 3].astype(np.int32)
    scale = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return rgbe[..., :3].astype(np.float64) * scale[..., None]


def tonemap(rgb: np.ndarray) -> np.ndarray:
    """Linear radiance -> display [0,1]: gamma 1/2.2 then clamp."""
    return np.clip(np.maximum(rgb, 0.0) ** (1.0 / GAMMA), 0.0, 1.0)


def save_png(path, rgb):
    img8 = np.round(tonemap(np.asarray(rgb)) * 255.0).astype(np.uint8)
    if img8.ndim == 2:
        img8 = np.repeat(img8[..., None], 3, axis=2)
    Image.fromarray(img8, mode="RGB").save(path)
