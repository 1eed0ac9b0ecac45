"""Synthetic CT slices and training-triplet assembly.

Phantoms are sums of rotated ellipses rasterized on the square [-1, 1]^2
(pixel centers at (2k+1)/n - 1) with supersampled antialiasing and a small
Gaussian prefilter, i.e. a band-limited scene: sampling hard-edged
indicators at a 64-pixel grid would alias, and the resulting out-of-band
energy is unrecoverable by any projector/FBP pair. A dataset sample is
(full image, teacher input, student input): the phantom, plus FBP
reconstructions from two sparse subsets of one noisy full-view sinogram, so
teacher and student share the noise realization on common rays.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import io
from .tomo import add_poisson_noise, fbp, radon, subsample_views


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    theta: float  # radians
    value: float  # additive intensity


# Modified (Toft) Shepp-Logan head phantom, additive intensities.
SHEPP_LOGAN_ELLIPSES = (
    Ellipse(0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    Ellipse(0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    Ellipse(0.22, 0.0, 0.11, 0.31, np.deg2rad(-18.0), -0.2),
    Ellipse(-0.22, 0.0, 0.16, 0.41, np.deg2rad(18.0), -0.2),
    Ellipse(0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    Ellipse(0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    Ellipse(0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    Ellipse(-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    Ellipse(0.0, -0.605, 0.023, 0.023, 0.0, 0.1),
    Ellipse(0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
)


BLUR_SIGMA = 0.01875  # scene units; 0.6 pixels on the reference 64-grid


def _gaussian_prefilter(canvas, sigma):
    """Periodic Gaussian blur via the frequency domain; content sits well
    inside the canvas so wraparound is negligible."""
    freqs_y = np.fft.fftfreq(canvas.shape[0])[:, None]
    freqs_x = np.fft.rfftfreq(canvas.shape[1])[None, :]
    transfer = np.exp(-2.0 * np.pi**2 * sigma**2 * (freqs_y**2 + freqs_x**2))
    return np.fft.irfft2(np.fft.rfft2(canvas) * transfer, s=canvas.shape)


def render_ellipses(ellipses, n, supersample=4, blur_sigma=BLUR_SIGMA):
    """Rasterize additive ellipses at n x n, antialiased and band-limited.

    ``blur_sigma`` is in scene units (the square spans [-1, 1]), so one
    smooth scene renders consistently across resolutions. Supersampling
    happens first, then the prefilter, then block averaging to the grid.
    """
    if n < 1 or supersample < 1:
        raise ValueError("side and supersample factor must be positive")
    fine = n * supersample
    coords = (2.0 * np.arange(fine) + 1.0) / fine - 1.0
    xs = coords[None, :]
    ys = coords[:, None]
    canvas = np.zeros((fine, fine), dtype=np.float64)
    for e in ellipses:
        cos_t = np.cos(e.theta)
        sin_t = np.sin(e.theta)
        dx = xs - e.cx
        dy = ys - e.cy
        u = (dx * cos_t + dy * sin_t) / e.a
        v = (-dx * sin_t + dy * cos_t) / e.b
        canvas += e.value * (u * u + v * v <= 1.0)
    if blur_sigma > 0:
        canvas = _gaussian_prefilter(canvas, blur_sigma * fine / 2.0)
    return canvas.reshape(n, supersample, n, supersample).mean(axis=(1, 3))


def shepp_logan(n):
    """Standard 10-ellipse head phantom, affinely renormalized to [0, 1]."""
    if n < 16:
        raise ValueError("phantom side must be at least 16")
    img = render_ellipses(SHEPP_LOGAN_ELLIPSES, n, supersample=16)
    lo = img.min()
    hi = img.max()
    return (img - lo) / (hi - lo)


def random_phantom(n, rng):
    """Random body ellipse plus 3-11 internal ellipses, clipped to [0, 1]."""
    if n < 16:
        raise ValueError("phantom side must be at least 16")
    body = Ellipse(
        cx=rng.uniform(-0.05, 0.05),
        cy=rng.uniform(-0.05, 0.05),
        a=rng.uniform(0.55, 0.8),
        b=rng.uniform(0.55, 0.8),
        theta=rng.uniform(0.0, np.pi),
        value=rng.uniform(0.2, 0.45),
    )
    ellipses = [body]
    for _ in range(int(rng.integers(3, 12))):
        radius = rng.uniform(0.0, 0.5)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        sign = 1.0 if rng.random() < 0.6 else -1.0
        ellipses.append(
            Ellipse(
                cx=body.cx + radius * np.cos(angle),
                cy=body.cy + radius * np.sin(angle),
                a=rng.uniform(0.03, 0.25),
                b=rng.uniform(0.03, 0.25),
                theta=rng.uniform(0.0, np.pi),
                value=sign * rng.uniform(0.05, 0.3),
            )
        )
    return np.clip(render_ellipses(ellipses, n, supersample=4), 0.0, 1.0)


@dataclass
class SampleTriplet:
    full: np.ndarray
    teacher_input: np.ndarray
    student_input: np.ndarray
    id: int


def build_dataset(count, geom, n_sparse, teacher_multiplier=2, i0=1e8, seed=0):
    """Generate (full, teacher, student) triplets.

    Per sample: phantom -> full-view sinogram -> one Poisson noise draw ->
    FBP at n_sparse views (student) and n_sparse * teacher_multiplier views
    (teacher). Per-sample RNG streams derive from (seed, id), so generation
    order and worker count cannot change the data.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if n_sparse < 1 or teacher_multiplier < 1:
        raise ValueError("view counts must be positive")
    if geom.n_full_views % n_sparse != 0:
        raise ValueError(f"{n_sparse} does not divide {geom.n_full_views} full views")
    if geom.n_full_views % (n_sparse * teacher_multiplier) != 0:
        raise ValueError(
            f"teacher views {n_sparse * teacher_multiplier} do not divide "
            f"{geom.n_full_views} full views"
        )
    samples = []
    for idx in range(count):
        phantom_rng = np.random.default_rng([seed, idx, 0])
        noise_rng = np.random.default_rng([seed, idx, 1])
        full = random_phantom(geom.image_size, phantom_rng)
        sino = add_poisson_noise(radon(full, geom), i0, noise_rng)
        student = fbp(subsample_views(sino, n_sparse), geom)
        if teacher_multiplier == 1:
            teacher = student.copy()
        else:
            teacher = fbp(subsample_views(sino, n_sparse * teacher_multiplier), geom)
        samples.append(SampleTriplet(full, teacher, student, idx))
    return samples


_ROLES = ("full", "teacher", "student")


def save_dataset(samples, root, seed, n_sparse, teacher_multiplier):
    os.makedirs(root, exist_ok=True)
    for s in samples:
        for role, img in zip(_ROLES, (s.full, s.teacher_input, s.student_input)):
            io.save_grid(os.path.join(root, f"{s.id:05d}_{role}.gdi"), img)
    lines = [f"{s.id} {seed} {n_sparse} {teacher_multiplier}\n" for s in samples]
    with open(os.path.join(root, "manifest.txt"), "w") as fh:
        fh.writelines(lines)


def load_dataset(root):
    manifest = os.path.join(root, "manifest.txt")
    if not os.path.isfile(manifest):
        raise ValueError(f"no manifest.txt in {root!r}")
    samples = []
    with open(manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sample_id = int(line.split()[0])
            imgs = [
                io.load_grid(os.path.join(root, f"{sample_id:05d}_{role}.gdi"))
                for role in _ROLES
            ]
            samples.append(SampleTriplet(imgs[0], imgs[1], imgs[2], sample_id))
    return samples
