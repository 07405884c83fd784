import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from twopathway.data import load_dataset
from twopathway.data.batching import batches, epoch_order
from twopathway.data.cifar import load_cifar10, load_cifar100, read_records
from twopathway.data.dataset import DatasetSplit
from twopathway.data.masks import area_resample, parse_pgm, read_pgm, write_pnm
from twopathway.data.preprocess import (InputView, Normalizer, binarize, gaussian_kernel1d, gaussian_lowpass,
                                        to_grayscale)
from twopathway.data.subsets import (SuperclassMapping, class_quotas, desk_subset, restrict_classes,
                                     sample_superclass_subset, take_per_class, take_total)
from twopathway.errors import ConfigError, DatasetFormatError, SubsetError


class TestCifar:
    def test_cifar10_layout(self, cifar10_dir):
        data = load_cifar10(cifar10_dir, verify_counts=False)
        assert data.train.pixels.shape == (100, 3, 32, 32)
        assert data.test.pixels.shape == (20, 3, 32, 32)
        assert data.train.pixels.dtype == np.float32
        assert 0.0 <= data.train.pixels.min() and data.train.pixels.max() <= 1.0
        assert_array_equal(data.test.fine_labels[:10], np.arange(10))
        assert data.train.class_names[0] == "airplane"

    def test_channel_statistics_come_from_training_split(self, cifar10_dir):
        data = load_cifar10(cifar10_dir, verify_counts=False)
        assert_allclose(data.test.channel_mean, data.train.pixels.astype(np.float64).mean(axis=(0, 2, 3)))

    def test_record_count_verified(self, cifar10_dir):
        with pytest.raises(DatasetFormatError, match="expected 10000"):
            load_cifar10(cifar10_dir, verify_counts=True)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "broken.bin"
        path.write_bytes(b"\x00" * 3074)
        with pytest.raises(DatasetFormatError, match="truncated"):
            read_records(path, 1)

    def test_cifar100_carries_both_label_sets(self, cifar100_dir):
        data = load_cifar100(cifar100_dir, verify_counts=False)
        assert len(data.train) == 400
        assert_array_equal(data.train.coarse_labels, data.train.fine_labels // 5)
        assert data.train.num_coarse_classes == 20
        assert data.train.coarse_names[3] == "super3"

    def test_pixels_outside_unit_range_rejected(self):
        with pytest.raises(DatasetFormatError, match="expected \[0, 1\]"):
            DatasetSplit(np.full((1, 1, 2, 2), 1.5, dtype=np.float32), [0], ["only"])
        with pytest.raises(DatasetFormatError):
            DatasetSplit(np.full((1, 1, 2, 2), -0.1, dtype=np.float32), [0], ["only"])

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(ConfigError):
            load_dataset("mnist", tmp_path)


class TestMasks:
    def test_pgm_header_with_comment(self):
        payload = b"P5\n# made by hand\n2 2\n255\n" + bytes([0, 255, 128, 64])
        assert_allclose(parse_pgm(payload), [[0.0, 1.0], [128 / 255, 64 / 255]], rtol=1e-6)

    def test_rejects_ascii_pgm(self):
        with pytest.raises(DatasetFormatError, match="P5"):
            parse_pgm(b"P2\n2 2\n255\n0 0 0 0")

    def test_rejects_non_square(self):
        with pytest.raises(DatasetFormatError, match="square"):
            parse_pgm(b"P5\n4 2\n255\n" + bytes(8))

    def test_area_resample_preserves_mean(self):
        image = np.random.default_rng(0).uniform(size=(64, 64))
        small = area_resample(image, 32)
        assert small.shape == (32, 32)
        assert small.mean() == pytest.approx(image.mean(), abs=1e-6)
        assert_allclose(small[0, 0], image[:2, :2].mean(), rtol=1e-5)

    def test_area_resample_averages_checkerboard_to_half(self):
        checkerboard = (np.indices((64, 64)).sum(axis=0) % 2).astype(np.float64)
        assert_allclose(area_resample(checkerboard, 32), 0.5, atol=1e-7)

    def test_mask_dataset(self, mask_dir):
        data = load_dataset("masks", mask_dir)
        assert data.train.pixels.shape == (8, 1, 32, 32)
        assert data.train.num_classes == 2
        assert not data.has_rgb
        assert_array_equal(data.test.fine_labels, [0, 0, 1, 1])

    def test_misnamed_file(self, mask_dir):
        (mask_dir / "train" / "square.pgm").write_bytes(b"P5\n2 2\n255\n" + bytes(4))
        with pytest.raises(DatasetFormatError, match="classid"):
            load_dataset("masks", mask_dir)

    def test_write_pnm_round_trips_through_reader(self, tmp_path):
        image = np.array([[0.0, 1.0], [0.5, 0.25]], dtype=np.float32)
        path = write_pnm(tmp_path / "preview.pgm", image[None])
        assert_allclose(read_pgm(path), np.floor(image * 255 + 0.5) / 255, rtol=1e-6)

    def test_write_pnm_colour(self, tmp_path):
        path = write_pnm(tmp_path / "preview.ppm", np.zeros((3, 2, 2)))
        assert path.read_bytes().startswith(b"P6\n2 2\n255\n")
        assert len(path.read_bytes()) == len(b"P6\n2 2\n255\n") + 12


class TestPreprocess:
    def test_grayscale_weights(self):
        rgb = np.zeros((3, 1, 1), dtype=np.float32)
        rgb[0] = 1.0
        assert to_grayscale(rgb)[0, 0, 0] == pytest.approx(0.299)

    def test_gaussian_kernel_support_and_sum(self):
        kernel = gaussian_kernel1d(2.0)
        assert len(kernel) == 13
        assert kernel.sum() == pytest.approx(1.0)
        assert_allclose(kernel, kernel[::-1])

    def test_lowpass_keeps_constant_images(self):
        assert_allclose(gaussian_lowpass(np.full((1, 8, 8), 0.3), 1.0), 0.3)

    @pytest.mark.parametrize("shape, sigma", [((1, 32, 32), 2.0), ((1, 8, 8), 4.0), ((1, 5, 7), 3.0)])
    def test_lowpass_preserves_mean_and_range(self, shape, sigma):
        image = np.random.default_rng(1).uniform(size=shape)
        blurred = gaussian_lowpass(image, sigma)
        assert blurred.mean() == pytest.approx(image.mean(), abs=1e-5)
        assert blurred.min() >= image.min() - 1e-12
        assert blurred.max() <= image.max() + 1e-12

    def test_impulse_gives_sampled_gaussian(self):
        impulse = np.zeros((1, 15, 15))
        impulse[0, 7, 7] = 1.0
        blurred = gaussian_lowpass(impulse, 1.0)
        offsets = np.arange(-3, 4, dtype=np.float64)
        kernel = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / 2.0)
        expected = np.zeros((15, 15))
        expected[4:11, 4:11] = kernel / kernel.sum()
        assert blurred.sum() == pytest.approx(1.0, abs=1e-6)
        assert_allclose(blurred[0], expected, atol=1e-6)

    def test_lowpass_reduces_variance(self):
        image = np.random.default_rng(2).uniform(size=(1, 32, 32))
        assert gaussian_lowpass(image, 2.0).var() < image.var() / 10

    def test_binarize_is_strict(self):
        assert_array_equal(binarize(np.array([0.49, 0.5, 0.51])), [0.0, 0.0, 1.0])

    def test_binarize_is_idempotent(self):
        gray = np.random.default_rng(5).uniform(size=(1, 8, 8))
        once = binarize(gray)
        assert_array_equal(binarize(once), once)

    def test_binarize_threshold_range(self):
        with pytest.raises(ValueError):
            binarize(np.zeros(2), 1.0)

    def test_views_produce_single_channel(self):
        images = np.random.default_rng(3).uniform(size=(2, 3, 32, 32)).astype(np.float32)
        for view in (InputView(kind="lowpass", sigma=1.0), InputView(kind="binarized")):
            out = view.apply(images)
            assert out.shape == (2, 1, 32, 32)
            assert view.channels(3) == 1
        assert InputView(kind="raw").apply(images) is images

    def test_view_labels_and_tensor(self):
        view = InputView(kind="binarized", threshold=0.25)
        assert view.label() == "BIN0.25"
        assert InputView.from_tensor(view.to_tensor()) == view

    def test_normalizer_standardizes(self):
        pixels = np.random.default_rng(4).normal(0.5, 0.2, size=(16, 3, 4, 4)).astype(np.float32)
        normalized = Normalizer.fit(pixels)(pixels)
        assert_allclose(normalized.mean(axis=(0, 2, 3)), 0.0, atol=1e-5)
        assert_allclose(normalized.std(axis=(0, 2, 3)), 1.0, atol=1e-4)

    def test_normalizer_constant_channel(self):
        normalizer = Normalizer.fit(np.ones((2, 1, 2, 2), dtype=np.float32))
        assert normalizer.std[0] == 1.0


class TestSubsets:
    def test_superclass_draw_is_seeded_and_reindexed(self, cifar100_dir):
        split = load_cifar100(cifar100_dir, verify_counts=False).train
        subset, mapping = sample_superclass_subset(split, 3, 2, seed=5)
        again, _ = sample_superclass_subset(split, 3, 2, seed=5)
        assert mapping.n_super == 3 and mapping.n_sub == 6
        assert_array_equal(np.unique(subset.fine_labels), np.arange(6))
        assert_array_equal(np.unique(subset.coarse_labels), np.arange(3))
        assert_array_equal(subset.coarse_labels, mapping.sub_to_super()[subset.fine_labels])
        assert_array_equal(subset.pixels, again.pixels)
        assert len(subset) == 6 * 4

    def test_mapping_file_round_trip(self, cifar100_dir, tmp_path):
        split = load_cifar100(cifar100_dir, verify_counts=False).train
        _, mapping = sample_superclass_subset(split, 2, 3, seed=1)
        assert SuperclassMapping.read(mapping.write(tmp_path / "mapping.txt")).entries == mapping.entries

    def test_too_many_subclasses(self, cifar100_dir):
        split = load_cifar100(cifar100_dir, verify_counts=False).train
        with pytest.raises(SubsetError):
            sample_superclass_subset(split, 2, 6, seed=0)

    def test_take_per_class_balances(self, cifar10_dir):
        split = load_cifar10(cifar10_dir, verify_counts=False).train
        taken = take_per_class(split, 3, seed=0)
        assert_array_equal(np.bincount(taken.fine_labels), [3] * 10)

    def test_restrict_classes_reindexes_in_given_order(self, cifar10_dir):
        split = load_cifar10(cifar10_dir, verify_counts=False).test
        restricted = restrict_classes(split, [7, 2])
        assert restricted.class_names == ["horse", "bird"]
        assert_array_equal(np.unique(restricted.fine_labels), [0, 1])
        with pytest.raises(SubsetError):
            restrict_classes(split, [2, 2])

    def test_desk_subset(self, cifar10_dir):
        data = desk_subset(load_cifar10(cifar10_dir, verify_counts=False), [0, 1, 2], 5, 1, seed=0)
        assert len(data.train) == 15 and len(data.test) == 3
        assert data.train.num_classes == 3

    def test_class_quotas_spread_the_remainder(self):
        assert class_quotas(2000, 3) == [667, 667, 666]
        assert class_quotas(1000, 3) == [334, 333, 333]
        assert class_quotas(9, 3) == [3, 3, 3]
        with pytest.raises(SubsetError):
            class_quotas(2, 3)

    def test_desk_subset_with_exact_totals(self, cifar10_dir):
        data = desk_subset(load_cifar10(cifar10_dir, verify_counts=False), [0, 1, 2], None, None, seed=0,
                           train_size=20, test_size=5)
        assert len(data.train) == 20 and len(data.test) == 5
        assert_array_equal(np.bincount(data.train.fine_labels), [7, 7, 6])
        assert_array_equal(np.bincount(data.test.fine_labels), [2, 2, 1])

    def test_take_total(self, cifar10_dir):
        split = load_cifar10(cifar10_dir, verify_counts=False).train
        assert len(take_total(split, 25, seed=0)) == 25
        assert take_total(split, None, seed=0) is split


class TestBatching:
    def test_epoch_order_is_seeded(self):
        assert_array_equal(epoch_order(10, 1, 2), epoch_order(10, 1, 2))
        assert not np.array_equal(epoch_order(50, 1, 2), epoch_order(50, 1, 3))

    def test_batches_cover_split_once(self, cifar10_dir):
        split = load_cifar10(cifar10_dir, verify_counts=False).test
        seen = [batch for batch in batches(split, 8, seed=0, epoch=0)]
        assert [len(b) for b in seen] == [8, 8, 4]
        assert_array_equal(np.sort(np.concatenate([b.indices for b in seen])), np.arange(20))
        first = seen[0]
        assert_array_equal(first.fine_labels, split.fine_labels[first.indices])
