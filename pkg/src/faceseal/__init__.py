"""faceseal: semi-fragile neural watermarking for portraits.

Embeds a secret bit-string into a portrait conditioned on its facial
attributes. Benign processing (compression, blur, noise, rescaling, dropout)
leaves the message readable; attribute-altering manipulation breaks the
conditioning key and destroys it, so tampering shows up as a high bit error
rate at verification time.
"""

from .conditioning import (AttributeEncoderBank, AttributeEncoderSpec, ConditionGenerator,
                           assemble_facial_token, pixel_shuffle_embedding)
from .codec import (MessageDecoder, MessageEncoder, decode_logits, duplicate_message,
                    logits_to_bits, transform_message)
from .data import DatasetManifest, FaceDataset, ingest, write_toy_dataset
from .distortions import NoiserConfig, PerturbationSpec, apply_level, sample_noiser
from .estimator import SemiFragileWatermarker
from .losses import LossWeights, adv_loss, fragile_loss, recon_loss, total_loss
from .messages import hex_to_message, message_to_hex, random_message
from .metrics import (DetectionMetrics, FidelityMetrics, ThresholdCalibration,
                      VerificationResult, bit_error_rate, calibrate_black_box,
                      calibrate_white_box, detection_metrics, fake_probability,
                      fidelity, verify_bits)
from .model import ModelConfig, WatermarkModel, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainingDiverged, train

__version__ = "0.1.0"

__all__ = [
    "AttributeEncoderBank", "AttributeEncoderSpec", "ConditionGenerator",
    "assemble_facial_token", "pixel_shuffle_embedding",
    "MessageDecoder", "MessageEncoder", "decode_logits", "duplicate_message",
    "logits_to_bits", "transform_message",
    "DatasetManifest", "FaceDataset", "ingest", "write_toy_dataset",
    "NoiserConfig", "PerturbationSpec", "apply_level", "sample_noiser",
    "SemiFragileWatermarker",
    "LossWeights", "adv_loss", "fragile_loss", "recon_loss", "total_loss",
    "hex_to_message", "message_to_hex", "random_message",
    "DetectionMetrics", "FidelityMetrics", "ThresholdCalibration",
    "VerificationResult", "bit_error_rate", "calibrate_black_box",
    "calibrate_white_box", "detection_metrics", "fake_probability", "fidelity",
    "verify_bits",
    "ModelConfig", "WatermarkModel", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "TrainingDiverged", "train",
]
