"""PSNR/SSIM against exact values and an independent direct-formula oracle."""

import numpy as np
import pytest

from s2s.errors import ShapeError
from s2s.metrics import (
    MetricReport,
    evaluate_volume,
    format_metric_table,
    gaussian_window,
    psnr,
    ssim,
)


def reference_ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Direct-formula SSIM oracle: explicit loops, no shared code with s2s."""
    half = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    w = np.exp(-(((yy - half) ** 2) + ((xx - half) ** 2)) / (2 * sigma * sigma))
    w = w / w.sum()
    c1, c2 = k1 ** 2, k2 ** 2
    h, wd = a.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(wd - size + 1):
            pa = a[i:i + size, j:j + size].astype(np.float64)
            pb = b[i:i + size, j:j + size].astype(np.float64)
            mu_a = (w * pa).sum()
            mu_b = (w * pb).sum()
            va = (w * (pa - mu_a) ** 2).sum()
            vb = (w * (pb - mu_b) ** 2).sum()
            cab = (w * (pa - mu_a) * (pb - mu_b)).sum()
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cab + c2))
                        / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_images_hit_cap(self):
        a = np.random.default_rng(0).random((16, 16))
        assert psnr(a, a) == 99.0

    def test_uniform_tenth_offset_is_twenty_db(self):
        a = np.full((32, 32), 0.3)
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((20, 20)), rng.random((20, 20))
        assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)

    def test_monotone_in_noise_amplitude(self):
        a = np.random.default_rng(2).random((32, 32)) * 0.5 + 0.25
        values = [psnr(a, a + amp) for amp in (0.05, 0.1, 0.2)]
        assert values[0] > values[1] > values[2]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSsim:
    def test_identical_images(self):
        a = np.random.default_rng(3).random((24, 24))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_constant_images(self):
        a = np.full((16, 16), 0.5)
        assert ssim(a, a.copy()) == pytest.approx(1.0)

    def test_window_normalized(self):
        assert gaussian_window().sum() == pytest.approx(1.0, abs=1e-12)

    def test_matches_independent_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            a = rng.random((64, 64))
            b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
            assert ssim(a, b) == pytest.approx(reference_ssim(a, b), abs=1e-6)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a, b = rng.random((32, 32)), rng.random((32, 32))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_approaches_one_as_perturbation_shrinks(self):
        a = np.random.default_rng(6).random((32, 32)) * 0.6 + 0.2
        values = [ssim(a, a + eps) for eps in (0.2, 0.1, 0.05)]
        assert values[0] < values[1] < values[2] < 1.0

    def test_too_small_image_rejected(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestEvaluateVolume:
    def test_identical_volumes(self):
        v = np.random.default_rng(7).random((4, 16, 16))
        report = evaluate_volume(v, v.copy())
        assert report.capped_slices == 4
        assert report.ssim_mean == pytest.approx(1.0)
        assert report.psnr_mean == 99.0

    def test_half_capped_half_offset(self):
        rng = np.random.default_rng(8)
        truth = rng.random((4, 16, 16)) * 0.5 + 0.2
        pred = truth.copy()
        pred[2:] += 0.1
        report = evaluate_volume(pred, truth)
        assert report.capped_slices == 2
        assert report.psnr_mean == pytest.approx(20.0, abs=1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            evaluate_volume(np.zeros((5, 64, 64)), np.zeros((4, 64, 64)))

    def test_ssim_bounds(self):
        rng = np.random.default_rng(9)
        report = evaluate_volume(rng.random((3, 16, 16)), rng.random((3, 16, 16)))
        assert all(-1.0 <= v <= 1.0 for v in report.ssim_per_slice)

    def test_table_format(self):
        r = MetricReport(psnr_mean=27.77, ssim_mean=0.929, count=1)
        table = format_metric_table({"multi": r})
        assert "27.77" in table and "0.929" in table
        assert table.splitlines()[0].startswith("Metric")
