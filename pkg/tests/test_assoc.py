from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from twopathway.assoc.context import (codebook_matrix, cosine_scores, make_context_vectors, min_pairwise_hamming,
                                      row_cosine, snap_to_codebook)
from twopathway.assoc.inference import (BiasedFineNet, biased_inference, completion_cosine,
                                        robustness_inference, robustness_pairs, train_biased_readout)
from twopathway.assoc.rbm import (FeatureScaler, Rbm, RbmTrainConfig, cd1_update, clamped_interplay,
                                  interplay_step, rbm_energy, reconstruction_error, train_rbm)
from twopathway.data.cifar import load_cifar10
from twopathway.data.preprocess import InputView
from twopathway.errors import CheckpointError, RetrievalError, ShapeError
from twopathway.nets.network import NetworkSpec
from twopathway.nets.pathway import Pathway
from twopathway.nets.training import TrainConfig

PATTERNS = np.array([
    [1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1],
    [1, 0, 1, 0, 1, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 0],
], dtype=np.float32)


def random_pairs(seed: int, count: int = 3, width: int = 16) -> np.ndarray:
    """Distinct random binary pairs with no all-zero half."""
    rng = np.random.default_rng(seed)
    while True:
        pairs = rng.integers(0, 2, size=(count, width)).astype(np.float32)
        halves = pairs.reshape(count, 2, width // 2).sum(axis=2)
        if (halves > 0).all() and len(np.unique(pairs, axis=0)) == count:
            return pairs


@pytest.fixture(scope="module")
def memorized():
    """RBM trained on three 16-unit patterns until it stores them."""
    cfg = RbmTrainConfig(epochs=3000, lr=0.1, lr_decay_epochs=[], batch_size=3, hidden=32, seed=0)
    pairs = np.repeat(PATTERNS, 4, axis=0)
    return train_rbm(pairs, cfg, split=8, progress=False)


class TestRbm:
    def test_energy_formula(self):
        rbm = Rbm(3, 2, seed=1)
        rbm.a[...] = [0.1, -0.2, 0.3]
        rbm.b[...] = [0.5, -0.5]
        v, h = np.array([1.0, 0.0, 1.0]), np.array([0.0, 1.0])
        expected = -(v @ rbm.W @ h) - rbm.a @ v - rbm.b @ h
        assert rbm_energy(v, h, rbm) == pytest.approx(float(expected))

    def test_energy_vanishes_at_zero(self):
        rbm = Rbm(3, 2, seed=1)
        rbm.a[...] = [0.1, -0.2, 0.3]
        rbm.b[...] = [0.5, -0.5]
        assert rbm_energy(np.zeros(3), np.zeros(2), rbm) == 0.0
        blank = Rbm(3, 2, seed=1)
        blank.W[...] = 0.0
        blank.a[...] = 0.0
        blank.b[...] = 0.0
        assert rbm_energy(np.array([1.0, 0.0, 1.0]), np.array([1.0, 1.0]), blank) == 0.0

    def test_split_must_be_inside(self):
        with pytest.raises(ShapeError):
            Rbm(4, 2, split=4)

    def test_cd_update_moves_toward_data(self):
        rbm = Rbm(6, 4, seed=2)
        data = np.array([[1, 1, 1, 0, 0, 0]] * 8, dtype=np.float32)
        before = reconstruction_error(rbm, data)
        rng = np.random.default_rng(0)
        for _ in range(200):
            cd1_update(rbm, data, 0.1, rng)
        assert reconstruction_error(rbm, data) < before

    def test_zero_learning_rate_leaves_parameters(self):
        rbm = Rbm(6, 4, seed=2)
        W, a, b = rbm.W.copy(), rbm.a.copy(), rbm.b.copy()
        cd1_update(rbm, np.array([[1, 0, 1, 0, 1, 0]] * 4, dtype=np.float32), 0.0, np.random.default_rng(0))
        assert_array_equal(rbm.W, W)
        assert_array_equal(rbm.a, a)
        assert_array_equal(rbm.b, b)

    def test_training_pairs_must_be_normalized(self):
        with pytest.raises(ValueError):
            train_rbm(np.full((2, 4), 2.0), RbmTrainConfig(epochs=1, lr_decay_epochs=[], hidden=2), progress=False)

    def test_decay_epochs_inside_run(self):
        with pytest.raises(ValueError):
            RbmTrainConfig(epochs=100, lr_decay_epochs=[100])

    def test_memorizes_patterns(self, memorized):
        rbm = memorized.rbm
        assert memorized.history[-1][2] < memorized.history[0][2]
        recon = rbm.visible_probs(rbm.hidden_probs(PATTERNS))
        assert_array_equal(recon > 0.5, PATTERNS > 0.5)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_memorizes_and_completes_random_pairs(self, seed):
        pairs = random_pairs(seed)
        cfg = RbmTrainConfig(epochs=2000, lr=0.1, lr_decay_epochs=[], batch_size=3, hidden=32, seed=seed)
        rbm = train_rbm(pairs, cfg, split=8, progress=False).rbm
        assert reconstruction_error(rbm, pairs) < 0.05
        completed = clamped_interplay(rbm, pairs[:, :8], np.zeros((3, 8), dtype=np.float32), "first", T=10)
        assert (row_cosine(completed, pairs[:, 8:]) >= 0.9).all()
        assert completion_cosine(rbm, pairs, 10) >= 0.9

    def test_fully_clamped_step_is_identity(self, memorized):
        v = np.random.default_rng(3).uniform(size=(4, 16))
        assert_array_equal(interplay_step(memorized.rbm, v, np.ones(16, dtype=bool)), v)

    def test_steps_compose(self, memorized):
        rbm = memorized.rbm
        start = np.zeros((3, 8), dtype=np.float32)
        three = clamped_interplay(rbm, PATTERNS[:, :8], start, "first", T=3)
        assert_array_equal(clamped_interplay(rbm, PATTERNS[:, :8], three, "first", T=4),
                           clamped_interplay(rbm, PATTERNS[:, :8], start, "first", T=7))
        back = clamped_interplay(rbm, PATTERNS[:, 8:], start, "second", T=2)
        assert_array_equal(clamped_interplay(rbm, PATTERNS[:, 8:], back, "second", T=5),
                           clamped_interplay(rbm, PATTERNS[:, 8:], start, "second", T=7))

    def test_clamped_side_is_untouched(self, memorized):
        rbm = memorized.rbm
        v = np.concatenate([PATTERNS[:1, :8], np.zeros((1, 8), dtype=np.float32)], axis=1)
        mask = np.zeros(16, dtype=bool)
        mask[:8] = True
        assert_array_equal(interplay_step(rbm, v, mask)[:, :8], PATTERNS[:1, :8])

    def test_stored_pairs_are_near_fixed_points(self, memorized):
        rbm = memorized.rbm
        mask = np.zeros(16, dtype=bool)
        mask[:8] = True
        rng = np.random.default_rng(5)
        for trial in range(20):
            stored = PATTERNS[trial % 3][None]
            noise = np.concatenate([stored[:, :8], rng.integers(0, 2, (1, 8)).astype(np.float32)], axis=1)
            stored_move = np.abs(interplay_step(rbm, stored, mask) - stored).sum()
            random_move = np.abs(interplay_step(rbm, noise, mask) - noise).sum()
            assert stored_move <= random_move

    def test_zero_steps_returns_free_init(self, memorized):
        free = np.full((3, 8), 0.25, dtype=np.float32)
        assert_array_equal(clamped_interplay(memorized.rbm, PATTERNS[:, 8:], free, "second", T=0), free)

    def test_width_mismatch(self, memorized):
        with pytest.raises(ShapeError):
            clamped_interplay(memorized.rbm, PATTERNS[:, :8], np.zeros((3, 7)), "first", T=1)

    def test_checkpoint_round_trip(self, memorized, tmp_path):
        rbm = Rbm.from_state(memorized.rbm.state())
        rbm.scaler = FeatureScaler(np.zeros(16), np.ones(16))
        restored = Rbm.load(rbm.save(tmp_path / "rbm.tpck"))
        assert (restored.visible, restored.hidden, restored.split) == (16, 32, 8)
        assert_array_equal(restored.W, rbm.W)
        assert_array_equal(restored.scaler.maximum, 1.0)
        assert restored.codebook is None

    def test_training_is_deterministic(self):
        cfg = RbmTrainConfig(epochs=5, lr_decay_epochs=[], hidden=4, batch_size=2, seed=3)
        a = train_rbm(PATTERNS, cfg, split=8, progress=False).rbm
        b = train_rbm(PATTERNS, cfg, split=8, progress=False).rbm
        assert_array_equal(a.W, b.W)


class TestFeatureScaler:
    def test_maps_training_range_to_unit_interval(self):
        features = np.array([[0.0, 2.0], [4.0, 6.0], [2.0, 4.0]])
        scaler = FeatureScaler.fit(features)
        assert_allclose(scaler.normalize(features)[:, 0], [0.0, 1.0, 0.5], atol=1e-8)
        assert_allclose(scaler.denormalize(scaler.normalize(features)), features, atol=1e-6)

    def test_clips_out_of_range(self):
        scaler = FeatureScaler(np.zeros(2), np.ones(2))
        assert_array_equal(scaler.normalize(np.array([[-1.0, 3.0]])), [[0.0, 1.0]])

    def test_offset_slice(self):
        scaler = FeatureScaler(np.array([0.0, 10.0]), np.array([1.0, 20.0]))
        assert_allclose(scaler.normalize(np.array([[15.0]]), start=1), [[0.5]], atol=1e-8)
        with pytest.raises(ShapeError):
            scaler.normalize(np.zeros((1, 2)), start=1)


class TestContext:
    def test_codebook_is_binary_and_separated(self):
        vectors = make_context_vectors(5, dim=100, seed=0)
        codebook = codebook_matrix(vectors)
        assert codebook.shape == (5, 100)
        assert set(np.unique(codebook)) <= {0.0, 1.0}
        assert min_pairwise_hamming(codebook) >= 40

    def test_seeded(self):
        assert_array_equal(codebook_matrix(make_context_vectors(3, 50, seed=4)),
                           codebook_matrix(make_context_vectors(3, 50, seed=4)))

    def test_impossible_separation(self):
        with pytest.raises(RetrievalError):
            make_context_vectors(20, dim=2, seed=0)

    def test_snap_picks_highest_cosine_and_lowest_id_on_ties(self):
        codebook = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        ids, vectors = snap_to_codebook(np.array([[0.9, 0.1], [0.1, 0.8]]), codebook)
        assert_array_equal(ids, [0, 1])
        assert_array_equal(vectors, codebook[[0, 1]])

    def test_snap_needs_codebook(self):
        with pytest.raises(RetrievalError):
            snap_to_codebook(np.zeros((1, 2)), np.zeros((0, 2)))

    def test_cosines(self):
        assert_allclose(cosine_scores(np.array([[1.0, 1.0]]), np.array([[1.0, 0.0]])), [[np.sqrt(0.5)]])
        assert_allclose(row_cosine(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([[2.0, 0.0], [1.0, 0.0]])),
                        [1.0, 0.0])


@pytest.fixture
def cifar(cifar10_dir):
    return load_cifar10(cifar10_dir, verify_counts=False)


@pytest.fixture
def pathways(cifar):
    fine = Pathway.create(NetworkSpec(kind="fine", stages=[(4, 3)], fc_width=6, num_classes=10),
                          InputView(), cifar.train.pixels, seed=0)
    coarse = Pathway.create(NetworkSpec(kind="coarse", stages=[(4, 5)], fc_width=5, num_classes=10,
                                        input_channels=1),
                            InputView(kind="lowpass"), cifar.train.pixels, seed=1)
    fine.net.eval()
    coarse.net.eval()
    return fine, coarse


class TestRobustnessProtocol:
    def test_pairs_are_normalized_and_ordered(self, pathways, cifar):
        fine, coarse = pathways
        pairs, scaler = robustness_pairs(fine, coarse, cifar.train.pixels)
        assert pairs.shape == (100, 11)
        assert pairs.min() >= 0.0 and pairs.max() <= 1.0
        assert scaler.width == 11

    def test_zero_steps_equals_finenet(self, pathways, cifar):
        fine, coarse = pathways
        pairs, scaler = robustness_pairs(fine, coarse, cifar.train.pixels)
        rbm = Rbm(11, 6, split=5, scaler=scaler)
        predicted = robustness_inference(fine, coarse, rbm, cifar.test.pixels, T=0)
        _, probs = fine.net.forward(fine.prepare(cifar.test.pixels))
        assert_array_equal(predicted, probs.argmax(axis=1))
        assert robustness_inference(fine, coarse, rbm, cifar.test.pixels, T=3).shape == (20,)

    def test_geometry_checked(self, pathways, cifar):
        fine, coarse = pathways
        rbm = Rbm(11, 6, split=6, scaler=FeatureScaler(np.zeros(11), np.ones(11)))
        with pytest.raises(CheckpointError):
            robustness_inference(fine, coarse, rbm, cifar.test.pixels, T=1)

    def test_missing_scaler(self, pathways, cifar):
        fine, coarse = pathways
        with pytest.raises(CheckpointError):
            robustness_inference(fine, coarse, Rbm(11, 6, split=5), cifar.test.pixels, T=1)


class TestBiasProtocol:
    def test_biased_readout_and_inference(self, cifar):
        train = replace(cifar.train, coarse_labels=cifar.train.fine_labels % 2, coarse_names=["even", "odd"])
        test = replace(cifar.test, coarse_labels=cifar.test.fine_labels % 2, coarse_names=["even", "odd"])
        fine = Pathway.create(NetworkSpec(kind="fine", stages=[(4, 3)], fc_width=6, num_classes=10),
                              InputView(), train.pixels, seed=0)
        fine.net.eval()
        codebook = codebook_matrix(make_context_vectors(2, dim=5, seed=0))
        cfg = TrainConfig(epochs=2, batch_size=16, lr=0.01, lr_decay_epochs=[], seed=0)
        result = train_biased_readout(fine, train, test, codebook, cfg, seed=0)
        assert len(result.history) == 2
        biased = result.model

        coarse = Pathway.create(NetworkSpec(kind="coarse", stages=[(4, 5)], fc_width=5, num_classes=2,
                                            input_channels=1),
                                InputView(kind="lowpass"), train.pixels, seed=1)
        coarse.net.eval()
        rbm = Rbm(10, 4, split=5, scaler=FeatureScaler(np.zeros(10), np.ones(10)), codebook=codebook)
        prediction = biased_inference(biased, coarse, rbm, test.pixels, T=2, true_super=test.coarse_labels)
        assert prediction.biased.shape == (20,)
        assert set(np.unique(prediction.retrieved_super)) <= {0, 1}
        assert prediction.oracle is not None
        _, probs = fine.net.forward(fine.prepare(test.pixels))
        assert_array_equal(prediction.unbiased, probs.argmax(axis=1))

    def test_biased_checkpoint_round_trip(self, cifar, tmp_path):
        fine = Pathway.create(NetworkSpec(kind="fine", stages=[(4, 3)], fc_width=6, num_classes=10),
                              InputView(), cifar.train.pixels, seed=0)
        model = BiasedFineNet(fine, context_dim=5, seed=2)
        restored = BiasedFineNet.load(model.save(tmp_path / "biased.tpck"))
        assert restored.context_dim == 5
        assert_array_equal(restored.readout.weight.value, model.readout.weight.value)

    def test_retrieval_needs_codebook(self, pathways, cifar):
        fine, coarse = pathways
        biased = BiasedFineNet(fine, context_dim=5)
        rbm = Rbm(10, 4, split=5, scaler=FeatureScaler(np.zeros(10), np.ones(10)))
        with pytest.raises(RetrievalError):
            biased_inference(biased, coarse, rbm, cifar.test.pixels, T=1)
