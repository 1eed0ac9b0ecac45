import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsect.metrics import SSIM_SIGMA, SSIM_WINDOW, evaluate_pair, psnr, rmse, ssim


def test_psnr_identical_is_infinite():
    img = np.random.default_rng(0).random((16, 16))
    assert psnr(img, img) == math.inf


def test_psnr_constant_offset_closed_form():
    img = np.random.default_rng(1).random((16, 16))
    assert psnr(img, img + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_psnr_symmetric():
    rng = np.random.default_rng(2)
    a, b = rng.random((8, 8)), rng.random((8, 8))
    assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)


def test_rmse_examples():
    img = np.random.default_rng(3).random((8, 8))
    assert rmse(img, img) == 0.0
    assert rmse(img, img + 0.1) == pytest.approx(0.1, abs=1e-12)
    assert rmse(img, img + 0.3) == pytest.approx(3 * rmse(img, img + 0.1), abs=1e-9)


def test_metric_shape_mismatch():
    with pytest.raises(ValueError):
        rmse(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_identical_is_one():
    img = np.random.default_rng(4).random((32, 32))
    assert ssim(img, img) == 1.0


def test_ssim_symmetric():
    rng = np.random.default_rng(5)
    a, b = rng.random((32, 32)), rng.random((32, 32))
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


def test_ssim_inverted_binary_is_low():
    rng = np.random.default_rng(6)
    img = (rng.random((32, 32)) > 0.5).astype(np.float64)
    assert ssim(img, 1.0 - img) < 0.2


def test_ssim_matches_windowed_oracle():
    # direct per-pixel double loop over explicit windows, symmetric padding
    rng = np.random.default_rng(7)
    a = rng.random((32, 32))
    b = np.clip(a + 0.1 * rng.normal(size=(32, 32)), 0.0, 1.0)

    half = (SSIM_WINDOW - 1) / 2.0
    coords = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(coords**2) / (2.0 * SSIM_SIGMA**2))
    window = np.outer(g, g)
    window /= window.sum()
    pad = SSIM_WINDOW // 2
    ap = np.pad(a, pad, mode="symmetric")
    bp = np.pad(b, pad, mode="symmetric")
    c1 = 0.01**2
    c2 = 0.03**2

    total = 0.0
    for i in range(32):
        for j in range(32):
            wa = ap[i : i + SSIM_WINDOW, j : j + SSIM_WINDOW]
            wb = bp[i : i + SSIM_WINDOW, j : j + SSIM_WINDOW]
            mu_a = float((window * wa).sum())
            mu_b = float((window * wb).sum())
            var_a = float((window * wa * wa).sum()) - mu_a * mu_a
            var_b = float((window * wb * wb).sum()) - mu_b * mu_b
            cov = float((window * wa * wb).sum()) - mu_a * mu_b
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            )
    assert abs(ssim(a, b) - total / (32 * 32)) < 1e-8


def test_ssim_range_validation():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)), data_range=0.0)


def test_evaluate_pair_report():
    rng = np.random.default_rng(8)
    a = rng.random((16, 16))
    b = np.clip(a + 0.05 * rng.normal(size=(16, 16)), 0, 1)
    report = evaluate_pair(a, b)
    assert report.rmse > 0
    assert -1.0 <= report.ssim <= 1.0
    assert report.data_range == 1.0
    assert math.isfinite(report.psnr)


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**31 - 1),
    st.floats(min_value=-0.5, max_value=0.5),
)
def test_psnr_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    a = rng.random((8, 8))
    b = rng.random((8, 8))
    assert psnr(a + shift, b + shift) == pytest.approx(psnr(a, b), rel=1e-9)
