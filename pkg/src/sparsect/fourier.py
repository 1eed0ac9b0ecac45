"""2-D real-input FFT with an explicit half-spectrum layout.

Convention used everywhere in this package: unnormalized forward transform,
1/(H*W) applied on the inverse. The inverse accepts arbitrary half-spectra
(it hermitian-extends explicitly and drops the residual imaginary part), so
forward and adjoint helpers below are exact linear-algebra adjoints of each
other -- which is what the network gradients rely on.

All functions operate on the last two axes, so batched feature maps
(B, C, H, W) go through the same code path as plain 2-D grids.
"""

import numpy as np


def _require_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf")


def rfft2(grid):
    """Half-spectrum DFT of a real grid over its last two axes.

    Bin (u, v) holds sum_{x,y} g[x,y] * exp(-2j*pi*(u*x/H + v*y/W)) for
    v = 0 .. W//2 (unnormalized forward transform).
    """
    grid = np.asarray(grid)
    if grid.ndim < 2 or grid.shape[-2] < 1 or grid.shape[-1] < 1:
        raise ValueError(f"rfft2 needs a non-empty 2-D grid, got shape {grid.shape}")
    _require_finite(grid, "rfft2 input")
    return np.fft.rfft2(grid)


def _hermitian_full(spectrum, width):
    """Rebuild the full W-column spectrum from a half-spectrum layout."""
    *lead, height, half_w = spectrum.shape
    full = np.zeros((*lead, height, width), dtype=np.result_type(spectrum, np.complex64))
    full[..., :half_w] = spectrum
    n_mirror = (width + 1) // 2 - 1
    if n_mirror > 0:
        src = spectrum[..., :, 1 : 1 + n_mirror]
        rows = np.concatenate(([0], np.arange(height - 1, 0, -1)))  # u -> (H - u) % H
        full[..., :, width - n_mirror :] = np.conj(src[..., rows, :])[..., :, ::-1]
    return full


def irfft2(spectrum, out_shape):
    """Inverse of :func:`rfft2` with 1/(H*W) normalization.

    ``out_shape`` is the (H, W) of the real grid the spectrum was taken
    from; it disambiguates even/odd W, which share a half-spectrum width.
    """
    spectrum = np.asarray(spectrum)
    height, width = out_shape
    if height < 1 or width < 1:
        raise ValueError(f"invalid output shape {out_shape!r}")
    expected = (height, width // 2 + 1)
    if spectrum.ndim < 2 or spectrum.shape[-2:] != expected:
        raise ValueError(
            f"half-spectrum shape {spectrum.shape} inconsistent with output {out_shape}"
        )
    _require_finite(spectrum, "irfft2 input")
    full = _hermitian_full(spectrum, width)
    return np.fft.ifft2(full, axes=(-2, -1)).real


def rfft2_adjoint(grad_spectrum, out_shape):
    """Adjoint of rfft2 as a real-linear map: d(spectrum) -> d(grid)."""
    grad_spectrum = np.asarray(grad_spectrum)
    height, width = out_shape
    full = np.zeros(
        (*grad_spectrum.shape[:-2], height, width),
        dtype=np.result_type(grad_spectrum, np.complex64),
    )
    full[..., : width // 2 + 1] = grad_spectrum
    return np.fft.ifft2(full, axes=(-2, -1)).real * (height * width)


def irfft2_adjoint(grad_output):
    """Adjoint of irfft2: d(real grid) -> d(half-spectrum).

    Mirrored interior columns pick up a factor of 2 because each one
    contributed twice to the hermitian-extended inverse.
    """
    grad_output = np.asarray(grad_output)
    height, width = grad_output.shape[-2:]
    full = np.fft.fft2(grad_output, axes=(-2, -1)) / (height * width)
    half = full[..., : width // 2 + 1].copy()
    half[..., 1 : (width + 1) // 2] *= 2.0
    return half
