"""Parallel-beam CT simulation.

Forward projection (Radon transform) samples each ray at half-pixel steps
with bilinear interpolation; the line integral is step * sum(samples), and
points outside the image contribute zero. Filtered back projection zero-pads
each projection to the next power of two >= 2*n_detectors, applies a |omega|
ramp (optionally Hann-windowed) in the frequency domain, and backprojects
with linear detector interpolation.

Angle convention: at angle 0 the rays run along +y (down the image rows) and
the detector axis spans +x (columns). Angles cover [0, angle_range), default
2*pi, so parallel-beam view counts double-cover the half circle; the
backprojection scale angle_range / (2 * n_views) accounts for that.
"""

from dataclasses import dataclass

import numpy as np

RAY_STEP = 0.5  # pixels between samples along a ray


@dataclass(frozen=True)
class ScanGeometry:
    """Acquisition description. ``source_distance`` is kept so a fan-beam
    projector can reuse the record; the parallel-beam code ignores it."""

    image_size: int = 64
    n_detectors: int = 96
    n_full_views: int = 180
    detector_spacing: float = 1.0
    source_distance: float = 595.0
    angle_range: float = 2.0 * np.pi

    def __post_init__(self):
        if self.image_size < 1:
            raise ValueError("image_size must be positive")
        if self.n_detectors < self.image_size:
            raise ValueError("need at least as many detectors as image pixels per side")
        if self.n_full_views < 2:
            raise ValueError("need at least 2 full views")
        if self.detector_spacing <= 0 or self.angle_range <= 0:
            raise ValueError("detector_spacing and angle_range must be positive")

    def full_angles(self):
        return np.arange(self.n_full_views) * (self.angle_range / self.n_full_views)


@dataclass
class Sinogram:
    values: np.ndarray  # (n_views, n_detectors)
    angles: np.ndarray  # (n_views,) radians

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.angles = np.asarray(self.angles, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("sinogram values must be 2-D (views x detectors)")
        if self.values.shape[0] != self.angles.shape[0]:
            raise ValueError("sinogram row count must equal angle count")

    @property
    def n_views(self):
        return self.values.shape[0]


def _bilinear_sample(image, rows, cols):
    """Bilinear interpolation with zero outside the image bounds."""
    n_rows, n_cols = image.shape
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    out = np.zeros(rows.shape, dtype=np.float64)
    for dr, dc, weight in (
        (0, 0, (1.0 - fr) * (1.0 - fc)),
        (0, 1, (1.0 - fr) * fc),
        (1, 0, fr * (1.0 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr
        cc = c0 + dc
        valid = (rr >= 0) & (rr < n_rows) & (cc >= 0) & (cc < n_cols)
        out[valid] += weight[valid] * image[rr[valid], cc[valid]]
    return out


def radon(image, geom, angles=None):
    """Forward-project a square image into a sinogram.

    Entry (v, d) approximates the line integral along the ray at angle
    angles[v] with signed detector offset (d - (n_detectors-1)/2) * spacing
    from the rotation center.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError(f"image must be square, got shape {image.shape}")
    if image.shape[0] != geom.image_size:
        raise ValueError("image side does not match geometry")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains NaN or Inf")
    if angles is None:
        angles = geom.full_angles()
    angles = np.atleast_1d(np.asarray(angles, dtype=np.float64))

    n = geom.image_size
    center = (n - 1) / 2.0
    offsets = (np.arange(geom.n_detectors) - (geom.n_detectors - 1) / 2.0)
    offsets = offsets * geom.detector_spacing
    half_span = n / np.sqrt(2.0) + 1.0
    n_half = int(np.floor(half_span / RAY_STEP))
    arc = np.arange(-n_half, n_half + 1) * RAY_STEP  # symmetric about 0

    tt = offsets[:, None]
    ss = arc[None, :]
    values = np.empty((angles.shape[0], geom.n_detectors), dtype=np.float64)
    for k, theta in enumerate(angles):
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        x = tt * cos_t - ss * sin_t
        y = tt * sin_t + ss * cos_t
        samples = _bilinear_sample(image, y + center, x + center)
        values[k] = samples.sum(axis=1) * RAY_STEP
    return Sinogram(values, angles.copy())


def subsample_views(sino, n_sparse):
    """Keep every (n_views / n_sparse)-th row; n_sparse must divide evenly."""
    if n_sparse < 1:
        raise ValueError("n_sparse must be positive")
    if sino.n_views % n_sparse != 0:
        raise ValueError(f"{n_sparse} views do not evenly divide {sino.n_views}")
    stride = sino.n_views // n_sparse
    return Sinogram(sino.values[::stride].copy(), sino.angles[::stride].copy())


def add_poisson_noise(sino, i0, rng):
    """Transmission-domain Poisson noise.

    Per entry s: counts ~ Poisson(i0 * exp(-s)); the noisy line integral is
    -ln(max(counts, 1) / i0). Deterministic for a seeded generator.
    """
    if i0 <= 0:
        raise ValueError("photon count i0 must be positive")
    if np.any(sino.values < 0):
        raise ValueError("sinogram entries must be non-negative for noise injection")
    expected = i0 * np.exp(-sino.values)
    counts = rng.poisson(expected).astype(np.float64)
    noisy = -np.log(np.maximum(counts, 1.0) / i0)
    return Sinogram(noisy, sino.angles.copy())


FILTER_KINDS = ("ram-lak", "hann")


def _ramp_filter(n_pad, filter_kind):
    freqs = np.fft.rfftfreq(n_pad)
    ramp = np.abs(freqs)
    if filter_kind == "hann":
        ramp = ramp * (0.5 + 0.5 * np.cos(2.0 * np.pi * freqs))
    elif filter_kind != "ram-lak":
        raise ValueError(f"unknown filter {filter_kind!r}; choose from {FILTER_KINDS}")
    return ramp


def fbp(sino, geom, filter_kind="ram-lak"):
    """Filtered back projection onto an image_size x image_size grid."""
    if sino.n_views < 2:
        raise ValueError("FBP needs at least 2 views")
    if sino.values.shape[1] != geom.n_detectors:
        raise ValueError("sinogram detector count does not match geometry")
    if not np.all(np.isfinite(sino.values)):
        raise ValueError("sinogram contains NaN or Inf")

    n_det = geom.n_detectors
    n_pad = 1 << (2 * n_det - 1).bit_length()
    padded = np.zeros((sino.n_views, n_pad), dtype=np.float64)
    padded[:, :n_det] = sino.values
    ramp = _ramp_filter(n_pad, filter_kind)
    filtered = np.fft.irfft(np.fft.rfft(padded, axis=1) * ramp, n=n_pad, axis=1)
    filtered = filtered[:, :n_det]

    n = geom.image_size
    center = (n - 1) / 2.0
    coords = np.arange(n) - center
    xx = coords[None, :]  # columns
    yy = coords[:, None]  # rows
    det_center = (n_det - 1) / 2.0

    recon = np.zeros((n, n), dtype=np.float64)
    for v in range(sino.n_views):  # fixed order keeps results bit-stable
        theta = sino.angles[v]
        pos = (xx * np.cos(theta) + yy * np.sin(theta)) / geom.detector_spacing
        pos = pos + det_center
        i0 = np.floor(pos).astype(np.int64)
        frac = pos - i0
        row = filtered[v]
        left = np.where((i0 >= 0) & (i0 < n_det), row[np.clip(i0, 0, n_det - 1)], 0.0)
        i1 = i0 + 1
        right = np.where((i1 >= 0) & (i1 < n_det), row[np.clip(i1, 0, n_det - 1)], 0.0)
        recon += left * (1.0 - frac) + right * frac
    scale = geom.angle_range / (2.0 * sino.n_views) / geom.detector_spacing
    return recon * scale
