"""Binary file formats: images, sinograms, named-array checkpoints, PGM.

All multi-byte integers are little-endian u32; payloads are row-major
float32. Magics: ``GDI1`` image/grid, ``GDS1`` sinogram (grid plus float64
view angles), ``GDC1`` named-array bundle (model checkpoints and training
state).
"""

import struct

import numpy as np

GRID_MAGIC = b"GDI1"
SINO_MAGIC = b"GDS1"
CHECKPOINT_MAGIC = b"GDC1"


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"truncated file while reading {what}")
    return data


def _write_grid_body(fh, array):
    array = np.ascontiguousarray(array, dtype=np.float32)
    fh.write(struct.pack("<I", array.ndim))
    fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
    fh.write(array.tobytes())


def _read_grid_body(fh):
    (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
    if rank < 1 or rank > 8:
        raise ValueError(f"unreasonable rank {rank}")
    shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "extents"))
    count = int(np.prod(shape))
    payload = _read_exact(fh, 4 * count, "payload")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


def save_grid(path, array):
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        _write_grid_body(fh, array)


def load_grid(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != GRID_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {GRID_MAGIC!r}")
        return _read_grid_body(fh)


def save_sinogram(path, values, angles):
    values = np.asarray(values)
    angles = np.asarray(angles, dtype="<f8")
    if values.ndim != 2 or values.shape[0] != angles.shape[0]:
        raise ValueError("sinogram rows must match angle count")
    with open(path, "wb") as fh:
        fh.write(SINO_MAGIC)
        _write_grid_body(fh, values)
        fh.write(angles.tobytes())


def load_sinogram(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != SINO_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {SINO_MAGIC!r}")
        values = _read_grid_body(fh)
        if values.ndim != 2:
            raise ValueError("sinogram payload must be rank 2")
        raw = _read_exact(fh, 8 * values.shape[0], "angles")
        angles = np.frombuffer(raw, dtype="<f8").copy()
    return values, angles


def save_named_arrays(path, arrays):
    """Write an ordered {name: array} bundle (checkpoint format)."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name, array in arrays.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            _write_grid_body(fh, np.atleast_1d(np.asarray(array)))


def load_named_arrays(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "entry count"))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            arrays[name] = _read_grid_body(fh)
    return arrays


def save_pgm(path, image):
    """8-bit binary PGM with a linear [0,1] -> [0,255] mapping."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM export needs a 2-D image")
    scaled = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    height, width = scaled.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())
