"""Scikit-learn style facade over the watermarking pipeline.

fit() trains the model on labeled portrait images, transform() watermarks
images with the instance's message, and predict() verdicts real/fake against
that message using a black-box calibrated threshold. Parameters follow the
get_params/set_params convention so the estimator composes with sklearn
tooling.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator

from . import evaluation
from .data import FaceDataset, split_identities
from .losses import LossWeights
from .messages import hex_to_message, message_to_hex, random_message
from .metrics import calibrate_black_box, fake_probability, verify_bits
from .training import TrainConfig, train
from .validation import as_image_batch, check_bits


class SemiFragileWatermarker(BaseEstimator):
    """Message-in-portrait watermarker that is robust to benign noise and
    fragile to face manipulation.

    Parameters mirror the training configuration; ``message`` is the hex
    message this instance embeds and verifies (drawn at random during fit
    when left as None).
    """

    def __init__(self, image_size=128, message_bits=32, alpha=0.1,
                 recon_weight=1.0, noise_weight=1.0, adversarial_weight=0.1,
                 fragile_weight=1.0, temperature=0.5, learning_rate=1e-3,
                 batch_size=8, steps=5000, seed=0, use_noiser=True,
                 use_adversary=True, message=None):
        self.image_size = image_size
        self.message_bits = message_bits
        self.alpha = alpha
        self.recon_weight = recon_weight
        self.noise_weight = noise_weight
        self.adversarial_weight = adversarial_weight
        self.fragile_weight = fragile_weight
        self.temperature = temperature
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.steps = steps
        self.seed = seed
        self.use_noiser = use_noiser
        self.use_adversary = use_adversary
        self.message = message

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            image_size=self.image_size, message_bits=self.message_bits,
            alpha=self.alpha,
            weights=LossWeights(self.recon_weight, self.noise_weight,
                                self.adversarial_weight, self.fragile_weight),
            temperature=self.temperature, learning_rate=self.learning_rate,
            batch_size=self.batch_size, steps=self.steps, seed=self.seed,
            use_noiser=self.use_noiser, use_adversary=self.use_adversary)

    def _dataset_from(self, X, y) -> FaceDataset:
        x = as_image_batch(X, size=self.image_size).numpy()
        if y is None:
            raise ValueError("fit requires identity labels y (contrastive "
                             "batches need distinct identities)")
        labels = [str(v) for v in np.asarray(y).reshape(-1)]
        if len(labels) != x.shape[0]:
            raise ValueError("X and y lengths differ")
        names = sorted(set(labels))
        index = {n: i for i, n in enumerate(names)}
        identity_of = np.array([index[v] for v in labels])
        return FaceDataset(x, names, identity_of, split_identities(names, self.seed))

    def fit(self, X, y=None):
        """Train on images X (N, 3, S, S) in [-1, 1] with identity labels y."""
        dataset = self._dataset_from(X, y)
        result = train(self._train_config(), dataset)
        self.model_ = result.model
        self.history_ = result.history
        rng = np.random.default_rng(self.seed)
        if self.message is None:
            self.message_bits_ = random_message(self.message_bits, rng)
        else:
            self.message_bits_ = hex_to_message(self.message, self.message_bits)
        self.message_hex_ = message_to_hex(self.message_bits_)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")

    def transform(self, X) -> np.ndarray:
        """Watermark images with this instance's message."""
        self._check_fitted()
        x = as_image_batch(X, size=self.image_size)
        bits = np.tile(self.message_bits_, (x.shape[0], 1))
        with torch.no_grad():
            return self.model_.embed(x, bits).numpy()

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X, y).transform(X)

    def extract(self, X) -> list[str]:
        """Decode hex messages from published images."""
        self._check_fitted()
        decoded = self.model_.extract_bits(as_image_batch(X, size=self.image_size))
        return [message_to_hex(row) for row in decoded]

    def calibrate(self, X, seed: int | None = None):
        """Black-box threshold calibration from real images only: embeds,
        applies worst-level perturbations, and sets tau from the BERs."""
        self._check_fitted()
        rng = np.random.default_rng(self.seed if seed is None else seed)
        x = as_image_batch(X, size=self.image_size)
        bers = evaluation.worst_level_bers(self.model_, x, rng)
        self.calibration_ = calibrate_black_box(bers)
        return self

    def decision_function(self, X) -> np.ndarray:
        """Fake probability per image against this instance's message."""
        self._check_fitted()
        if not hasattr(self, "calibration_"):
            raise RuntimeError("call calibrate() before scoring")
        decoded = self.model_.extract_bits(as_image_batch(X, size=self.image_size))
        expected = check_bits(self.message_bits_)
        return np.array([
            fake_probability(float(np.mean(expected != row)), self.calibration_.tau)
            for row in decoded])

    def predict(self, X) -> np.ndarray:
        """Verdict per image: 'real' or 'fake'."""
        scores = self.decision_function(X)
        return np.where(scores > 0.5, "fake", "real")

    def verify(self, X):
        """Full verification results (BER, fake probability, verdict)."""
        self._check_fitted()
        if not hasattr(self, "calibration_"):
            raise RuntimeError("call calibrate() before verify")
        decoded = self.model_.extract_bits(as_image_batch(X, size=self.image_size))
        return [verify_bits(self.message_bits_, row, self.calibration_) for row in decoded]
