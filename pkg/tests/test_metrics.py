"""Image-quality metrics against closed-form and loop oracles."""

import math

import numpy as np
import pytest

from flimsr.flimb import FlimImage
from flimsr.metrics import (
    MetricConstants,
    MetricReport,
    evaluate,
    mse,
    psnr,
    radial_power_spectrum,
    spectrum_to_csv,
    ssim,
)

C = MetricConstants()


class TestMse:
    def test_identical(self):
        x = np.random.default_rng(0).random((4, 4))
        assert mse(x, x) == 0.0

    def test_constant_difference(self):
        assert mse(np.full((3, 3), 0.6), np.full((3, 3), 0.5)) == pytest.approx(0.01)

    def test_loop_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        oracle = sum(
            (a[i, j] - b[i, j]) ** 2 for i in range(16) for j in range(16)
        ) / 256.0
        assert mse(a, b) == pytest.approx(oracle, abs=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros((2, 2)), np.zeros((2, 3)))


class TestPsnr:
    def test_twenty_db(self):
        a = np.zeros((10, 10))
        b = np.full((10, 10), 0.1)  # MSE = 0.01
        assert psnr(a, b, L=1.0) == pytest.approx(20.0)

    def test_identical_is_infinite(self):
        x = np.random.default_rng(2).random((4, 4))
        assert psnr(x, x) == math.inf

    def test_zero_db(self):
        assert psnr(np.zeros((5, 5)), np.ones((5, 5)), L=1.0) == pytest.approx(0.0)

    def test_monotone_in_mse(self):
        base = np.zeros((8, 8))
        values = [psnr(base, np.full((8, 8), eps)) for eps in (0.01, 0.05, 0.1, 0.5)]
        assert values == sorted(values, reverse=True)


def _ssim_oracle(a, b, c1, c2):
    mu_a, mu_b = a.mean(), b.mean()
    va, vb = ((a - mu_a) ** 2).mean(), ((b - mu_b) ** 2).mean()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))


class TestSsim:
    def test_identical_is_one(self):
        x = np.random.default_rng(3).random((8, 8))
        assert ssim(x, x, C) == pytest.approx(1.0, abs=1e-9)

    def test_mirrored_image_negative(self):
        rng = np.random.default_rng(4)
        a = rng.random((4, 4))
        b = -a + 2 * a.mean()
        assert ssim(a, b, C) < 0.0

    def test_fixed_two_by_two_fixtures(self):
        a = np.array([[0.1, 0.4], [0.8, 0.2]])
        b = np.array([[0.2, 0.5], [0.6, 0.3]])
        assert ssim(a, b, C) == pytest.approx(_ssim_oracle(a, b, C.c1, C.c2), abs=1e-9)
        a2 = np.array([[0.9, 0.1], [0.3, 0.7]])
        b2 = np.array([[0.0, 1.0], [0.5, 0.5]])
        assert ssim(a2, b2, C) == pytest.approx(_ssim_oracle(a2, b2, C.c1, C.c2), abs=1e-9)

    def test_symmetry_both_modes(self):
        rng = np.random.default_rng(5)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert abs(ssim(a, b, C) - ssim(b, a, C)) < 1e-12
        assert abs(ssim(a, b, C, "windowed") - ssim(b, a, C, "windowed")) < 1e-12

    def test_windowed_identical_is_one(self):
        x = np.random.default_rng(6).random((16, 16))
        assert ssim(x, x, C, "windowed") == pytest.approx(1.0, abs=1e-9)

    def test_windowed_needs_min_size(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)), C, "windowed")

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((4, 4)), np.zeros((4, 4)), C, "fancy")

    def test_range(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            a, b = rng.random((6, 6)), rng.random((6, 6))
            assert -1.0 - 1e-9 <= ssim(a, b, C) <= 1.0 + 1e-9


class TestRadialSpectrum:
    def test_constant_image_all_power_in_dc(self):
        spec = radial_power_spectrum(np.full((32, 32), 2.5))
        assert spec.mean_power[0] > 0
        assert np.all(np.abs(spec.mean_power[1:]) < 1e-9)

    def test_cosine_peak_in_correct_bin(self):
        x = np.arange(64)
        img = np.tile(np.cos(2 * np.pi * 8 * x / 64), (64, 1))
        spec = radial_power_spectrum(img)
        non_dc = spec.mean_power.copy() * spec.counts
        non_dc[0] = 0.0
        assert np.argmax(non_dc) == 8
        assert non_dc[8] / non_dc.sum() > 0.99

    def test_white_noise_flat(self):
        rng = np.random.default_rng(8)
        ratios = []
        means = None
        for _ in range(20):
            spec = radial_power_spectrum(rng.standard_normal((128, 128)))
            if means is None:
                means = np.zeros_like(spec.mean_power)
            means += spec.mean_power
        means /= 20
        non_dc = means[1:]
        assert non_dc.max() / non_dc.min() < 2.0

    def test_parseval(self):
        rng = np.random.default_rng(9)
        img = rng.random((24, 40))
        spec = radial_power_spectrum(img)
        lhs = spec.total_power()
        rhs = img.size * np.sum(img**2)
        assert abs(lhs - rhs) / rhs < 1e-6

    def test_bins_cover_expected_range(self):
        spec = radial_power_spectrum(np.zeros((64, 64)))
        assert spec.bin_centers[0] == 0.0
        assert spec.bin_centers[-1] <= 0.5 * math.sqrt(2) + 1e-9

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            radial_power_spectrum(np.zeros((4, 4)))

    def test_csv_format(self, tmp_path):
        spec = radial_power_spectrum(np.random.default_rng(10).random((16, 16)))
        path = tmp_path / "spec.csv"
        spectrum_to_csv(spec, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "bin_center_cycles_per_pixel,mean_power"
        assert len(lines) == 1 + len(spec.bin_centers)


def _random_image(rng, h=16, w=16):
    return FlimImage(data=rng.random((6, h, w), dtype=np.float32))


class TestEvaluate:
    def test_identity_pairs(self):
        rng = np.random.default_rng(11)
        imgs = [_random_image(rng) for _ in range(3)]
        report = evaluate(imgs, imgs)
        for pair in report.pairs:
            for values in pair.channels.values():
                assert values["mse"] == 0.0
                assert values["psnr"] == math.inf
                assert values["ssim"] == pytest.approx(1.0, abs=1e-9)

    def test_modality_average_is_mean_of_channels(self):
        rng = np.random.default_rng(12)
        pred, target = _random_image(rng), _random_image(rng)
        report = evaluate([pred], [target])
        pair = report.pairs[0]
        means = pair.modality_means()
        lt_psnr = [pair.channels[n]["psnr"] for n in ("LT1", "LT2", "LT3")]
        assert means["lifetime"]["psnr"] == pytest.approx(np.mean(lt_psnr), abs=1e-9)
        int_ssim = [pair.channels[n]["ssim"] for n in ("INT1", "INT2", "INT3")]
        assert means["intensity"]["ssim"] == pytest.approx(np.mean(int_ssim), abs=1e-9)

    def test_report_matches_recomputed_loop_oracles(self):
        rng = np.random.default_rng(13)
        pred, target = _random_image(rng, 8, 8), _random_image(rng, 8, 8)
        report = evaluate([pred], [target])
        for c, name in enumerate(pred.channel_names):
            a, b = pred.data[c].astype(np.float64), target.data[c].astype(np.float64)
            loop_mse = sum(
                (a[i, j] - b[i, j]) ** 2 for i in range(8) for j in range(8)
            ) / 64.0
            got = report.pairs[0].channels[name]
            assert got["mse"] == pytest.approx(loop_mse, abs=1e-12)
            assert got["psnr"] == pytest.approx(10 * math.log10(1.0 / loop_mse), abs=1e-9)
            assert got["ssim"] == pytest.approx(_ssim_oracle(a, b, C.c1, C.c2), abs=1e-9)

    def test_perceptual_slot(self):
        rng = np.random.default_rng(14)
        pred, target = _random_image(rng), _random_image(rng)
        report = evaluate([pred], [target], perceptual=lambda a, b: float(np.abs(a - b).mean()))
        assert report.pairs[0].perceptual == pytest.approx(np.abs(pred.data - target.data).mean())

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(15)
        report = evaluate([_random_image(rng)], [_random_image(rng)], pair_ids=["p0/fov_0"])
        path = tmp_path / "report.json"
        report.save(path)
        back = MetricReport.load(path)
        assert back.ssim_mode == report.ssim_mode
        assert back.pairs[0].pair_id == "p0/fov_0"
        assert back.pairs[0].channels == report.pairs[0].channels

    def test_pairing_mismatch(self):
        rng = np.random.default_rng(16)
        with pytest.raises(ValueError):
            evaluate([_random_image(rng)], [])
