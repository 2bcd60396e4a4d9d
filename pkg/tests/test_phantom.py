"""Synthetic phantoms and the patient-wise split."""

import numpy as np
import pytest

from flimsr.metrics import radial_power_spectrum
from flimsr.phantom import PhantomSpec, generate_phantom, split_patients

SMALL = PhantomSpec(
    n_patients=2, fovs_per_patient=1, fov_size=64, structure_scales=(3.0, 8.0, 16.0)
)


class TestSplit:
    def test_counts_19_into_16_plus_3(self):
        ids = [f"p{i:02d}" for i in range(19)]
        split = split_patients(ids, 16, seed=1)
        assert len(split.train_ids) == 16
        assert len(split.test_ids) == 3
        assert split.train_ids | split.test_ids == set(ids)
        assert not split.train_ids & split.test_ids

    def test_deterministic(self):
        ids = [f"p{i:02d}" for i in range(19)]
        a = split_patients(ids, 16, seed=7)
        b = split_patients(ids, 16, seed=7)
        assert a == b

    def test_input_order_irrelevant(self):
        ids = [f"p{i:02d}" for i in range(10)]
        a = split_patients(ids, 6, seed=3)
        b = split_patients(list(reversed(ids)), 6, seed=3)
        assert a == b

    def test_seeds_differ(self):
        ids = [f"p{i:02d}" for i in range(19)]
        base = split_patients(ids, 16, seed=0)
        assert any(split_patients(ids, 16, seed=s) != base for s in range(1, 101))

    def test_train_count_out_of_range(self):
        ids = ["a", "b", "c"]
        for bad in (0, 3, 5, -1):
            with pytest.raises(ValueError):
                split_patients(ids, bad, seed=0)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            split_patients(["a", "a", "b"], 1, seed=0)


class TestPhantom:
    def test_shape_contract(self):
        spec = PhantomSpec(
            n_patients=3, fovs_per_patient=2, fov_size=64, structure_scales=(3.0, 8.0)
        )
        records = generate_phantom(spec, 11)
        assert len(records) == 3
        for rec in records:
            assert len(rec.images) == 2
            for img in rec.images:
                assert img.data.shape == (6, 64, 64)

    def test_deterministic_bit_identical(self):
        a = generate_phantom(SMALL, 4)
        b = generate_phantom(SMALL, 4)
        for ra, rb in zip(a, b):
            for ia, ib in zip(ra.images, rb.images):
                np.testing.assert_array_equal(ia.data, ib.data)

    def test_value_ranges(self):
        records = generate_phantom(SMALL, 9)
        ns_min, ns_max = SMALL.lifetime_range
        for rec in records:
            for img in rec.images:
                assert np.isfinite(img.data).all()
                for i in img.channel_indices("lifetime"):
                    assert img.data[i].min() >= ns_min - 1e-6
                    assert img.data[i].max() <= ns_max + 1e-6
                for i in img.channel_indices("intensity"):
                    assert img.data[i].min() >= 0.0

    def test_gradient_correlation_within_band(self):
        records = generate_phantom(SMALL, 13)
        img = records[0].images[0]

        def grad_mag(plane):
            gy, gx = np.gradient(plane.astype(np.float64))
            return np.hypot(gy, gx)

        corr = np.corrcoef(
            grad_mag(img.channel("LT1")).ravel(), grad_mag(img.channel("INT1")).ravel()
        )[0, 1]
        assert corr >= SMALL.cross_channel_correlation

    def test_band_limited_spectrum(self):
        records = generate_phantom(SMALL, 2)
        cutoff = 0.25 / min(SMALL.structure_scales)
        for c in range(6):
            spec = radial_power_spectrum(records[0].images[0].data[c])
            weighted = spec.mean_power * spec.counts
            tail = weighted[spec.bin_centers > cutoff].sum()
            assert tail / weighted.sum() < 0.01

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            PhantomSpec(fov_size=32).validate()
        with pytest.raises(ValueError):
            PhantomSpec(lifetime_range=(5.0, 5.0)).validate()
        with pytest.raises(ValueError):
            PhantomSpec(cross_channel_correlation=1.5).validate()
        with pytest.raises(ValueError):
            PhantomSpec(structure_scales=()).validate()
