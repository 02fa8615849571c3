"""Single-image protect/verify operations backing the CLI: embed a hex
message into an image file, extract from a published file, and verify
against an expected message with a calibrated threshold.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .data import load_image, save_image_png
from .messages import hex_to_message, message_to_hex
from .metrics import ThresholdCalibration, VerificationResult, verify_bits
from .model import WatermarkModel


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def embed_file(model: WatermarkModel, image_path, message_hex: str, out_path) -> dict:
    """Watermark one image file; writes a PNG plus a JSON sidecar recording
    the message and checkpoint digests."""
    bits = hex_to_message(message_hex, model.config.message_bits)
    image = load_image(image_path, model.config.image_size)
    marked = model.embed(torch.from_numpy(image[None]), bits[None])[0]
    save_image_png(out_path, marked.numpy())
    sidecar = {
        "source": str(image_path),
        "message_sha256": hashlib.sha256(message_hex.encode()).hexdigest()[:16],
        "config_digest": model.config.digest(),
        "output_sha256": _file_digest(out_path),
    }
    Path(str(out_path) + ".json").write_text(json.dumps(sidecar, indent=2))
    return sidecar


def extract_file(model: WatermarkModel, image_path) -> tuple[str, np.ndarray]:
    """Decode the message from a published image, keying on the image's own
    facial attributes. Returns (hex string, per-bit logits)."""
    image = load_image(image_path, model.config.image_size)
    logits = model.extract(torch.from_numpy(image[None]))[0]
    bits = (logits.numpy() > 0).astype(np.int64)
    return message_to_hex(bits), logits.numpy()


def verify_file(model: WatermarkModel, image_path, expected_hex: str,
                calibration: ThresholdCalibration) -> VerificationResult:
    """Compare the decoded message against the expected one and map the BER
    to a real/fake verdict through the calibrated threshold."""
    expected = hex_to_message(expected_hex, model.config.message_bits)
    decoded_hex, _ = extract_file(model, image_path)
    decoded = hex_to_message(decoded_hex, model.config.message_bits)
    return verify_bits(expected, decoded, calibration)
