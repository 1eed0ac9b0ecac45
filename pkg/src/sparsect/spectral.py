"""Unnormalized 2-D DCT-II, band-pass masks, and the crop-flatten embedding.

The transform is f[w, h] = sum_{i,j} Z[i,j] * cos(pi*w*(i+1/2)/N_w)
* cos(pi*h*(j+1/2)/N_h), with no scale factors, evaluated separably with
one cosine matrix per axis. A band-pass mask keeps spectrum entry (i, j) iff both
indices fall inside [b_low * extent, b_up * extent] (inclusive comparisons
against the real-valued thresholds; no rounding). The embedding applies the
DCT per channel, gathers masked entries in sorted row-major order,
concatenates channels in ascending order, and optionally L2-normalizes.
"""

from dataclasses import dataclass

import numpy as np


def _cosine_matrix(n, dtype=np.float64):
    freq = np.arange(n, dtype=np.float64)[:, None]
    pos = np.arange(n, dtype=np.float64)[None, :] + 0.5
    return np.cos(np.pi * freq * pos / n).astype(dtype)


def dct2(channel):
    """Unnormalized DCT-II spectrum of a 2-D grid (batched over leading axes)."""
    channel = np.asarray(channel)
    if channel.ndim < 2 or channel.shape[-2] < 1 or channel.shape[-1] < 1:
        raise ValueError(f"dct2 needs a non-empty 2-D grid, got shape {channel.shape}")
    if not np.all(np.isfinite(channel)):
        raise ValueError("dct2 input contains NaN or Inf")
    rows = _cosine_matrix(channel.shape[-2], channel.dtype)
    cols = _cosine_matrix(channel.shape[-1], channel.dtype)
    return rows @ channel @ cols.T


def dct2_adjoint(grad_spectrum):
    """Adjoint of dct2: maps d(spectrum) back to d(input)."""
    grad_spectrum = np.asarray(grad_spectrum)
    rows = _cosine_matrix(grad_spectrum.shape[-2], grad_spectrum.dtype)
    cols = _cosine_matrix(grad_spectrum.shape[-1], grad_spectrum.dtype)
    return rows.T @ grad_spectrum @ cols


@dataclass(frozen=True)
class BandMask:
    n_w: int
    n_h: int
    b_low: float
    b_up: float
    mask: np.ndarray  # (n_w, n_h) of 0/1
    indices: np.ndarray  # (k, 2) selected (i, j), sorted row-major

    @property
    def n_selected(self):
        return self.indices.shape[0]


def make_band_mask(n_w, n_h, b_low, b_up):
    if n_w < 1 or n_h < 1:
        raise ValueError("mask extents must be positive")
    if not (0.0 <= b_low < b_up <= 1.0):
        raise ValueError(f"need 0 <= b_low < b_up <= 1, got [{b_low}, {b_up}]")
    i = np.arange(n_w)[:, None]
    j = np.arange(n_h)[None, :]
    keep_i = (i >= b_low * n_w) & (i <= b_up * n_w)
    keep_j = (j >= b_low * n_h) & (j <= b_up * n_h)
    mask = (keep_i & keep_j).astype(np.int8)
    indices = np.argwhere(mask)
    if indices.shape[0] == 0:
        raise ValueError(f"band [{b_low}, {b_up}] selects no spectrum entries")
    return BandMask(n_w, n_h, b_low, b_up, mask, indices)


def bandpass_embed(feature_map, mask, normalize=True):
    """Flatten masked per-channel DCT coefficients into one vector."""
    feature_map = np.asarray(feature_map)
    if feature_map.ndim != 3:
        raise ValueError(f"expected (channels, H, W), got shape {feature_map.shape}")
    if feature_map.shape[1] != mask.n_w or feature_map.shape[2] != mask.n_h:
        raise ValueError(
            f"mask {mask.n_w}x{mask.n_h} does not match feature map "
            f"{feature_map.shape[1]}x{feature_map.shape[2]}"
        )
    spectrum = dct2(feature_map)
    vec = spectrum[:, mask.indices[:, 0], mask.indices[:, 1]].reshape(-1)
    if normalize:
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise ValueError("zero-norm embedding cannot be normalized")
        vec = vec / norm
    return vec


def bandpass_embed_grad(feature_map, mask, grad_vec, normalize=True):
    """Gradient of bandpass_embed with respect to the feature map."""
    feature_map = np.asarray(feature_map)
    grad_vec = np.asarray(grad_vec)
    n_c = feature_map.shape[0]
    spectrum = dct2(feature_map)
    raw = spectrum[:, mask.indices[:, 0], mask.indices[:, 1]].reshape(-1)
    if normalize:
        norm = np.linalg.norm(raw)
        if norm == 0.0:
            raise ValueError("zero-norm embedding cannot be normalized")
        unit = raw / norm
        grad_raw = (grad_vec - unit * np.dot(unit, grad_vec)) / norm
    else:
        grad_raw = grad_vec
    grad_spectrum = np.zeros_like(spectrum)
    grad_spectrum[:, mask.indices[:, 0], mask.indices[:, 1]] = grad_raw.reshape(
        n_c, mask.n_selected
    )
    return dct2_adjoint(grad_spectrum)
