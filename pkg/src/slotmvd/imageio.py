"""Bit-exact PPM (P6) image IO, with optional PNG via Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from slotmvd.errors import ContractViolation


def to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    """img: (H, W, 3) floats in [0, 1] or uint8."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ContractViolation("ppm writer expects (H, W, 3)")
    data = img if img.dtype == np.uint8 else to_u8(img)
    h, w, _ = data.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    """Returns floats in [0, 1]."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6"):
        raise ContractViolation(f"{path}: not a binary PPM file")
    # header: magic, width, height, maxval; comments allowed
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ContractViolation(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w * 3, offset=pos).reshape(h, w, 3)
    return data.astype(np.float64) / 255.0


def write_png(path: str | Path, img: np.ndarray) -> None:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise ContractViolation("PNG output needs Pillow (pip install slotmvd[png])") from exc
    Image.fromarray(to_u8(img)).save(path)


def write_image_grid(path: str | Path, rows: list[list[np.ndarray]], pad: int = 1) -> None:
    """Tile images (all same H, W) into one PPM with white separators."""
    h, w = rows[0][0].shape[:2]
    ncols = max(len(r) for r in rows)
    grid = np.ones((len(rows) * (h + pad) - pad, ncols * (w + pad) - pad, 3))
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            y, x = i * (h + pad), j * (w + pad)
            grid[y : y + h, x : x + w] = img
    write_ppm(path, grid)
