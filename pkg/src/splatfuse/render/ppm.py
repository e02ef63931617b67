"""Binary PPM (P6, 8-bit) image I/O.

Quantization is round-half-away-from-zero on clip(v, 0, 1) * 255, which
makes writes deterministic; readers recover v = byte / 255. Gray images
(Z=1) are replicated to three channels on write.
"""

import numpy as np


def write_ppm(image: np.ndarray, path) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError("image must be (H, W, Z)")
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    if img.shape[2] != 3:
        raise ValueError("PPM output needs 1 or 3 channels")
    h, w, _ = img.shape
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file back to float64 (H, W, 3) in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    # header: magic, width, height, maxval, then a single whitespace byte
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise ValueError(f"not a binary PPM: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("only 8-bit PPM is supported")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=pos)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0
