"""Verification and quality metrics: bit error rate, the fake-probability
mapping, threshold calibration for the white-box and black-box protocols,
detection ACC/AUC, and image fidelity (PSNR/SSIM).

The fake-probability map is piecewise linear in the BER r:

    P(fake | r; tau) = 0.5 * r / tau                      if r <= tau
                       0.5 + 0.5 * (r - tau) / (0.5 - tau) if tau < r <= 0.5
                       1                                   if r > 0.5

The first branch is implemented as a linear ramp (0 at r=0, 0.5 at r=tau),
which keeps the map continuous and monotone; a literal constant 0.5/tau would
exceed 1 and break monotonicity. A sample is declared fake exactly when
P > 0.5, i.e. when r > tau.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .validation import check_bits

CALIBRATION_GRID = np.round(np.arange(1, 100) * 0.005, 6)  # 0.005 .. 0.495

CALIBRATION_FORMAT_VERSION = 1


def bit_error_rate(sent, received) -> float:
    """Fraction of mismatched bits between two equal-length messages."""
    a = check_bits(sent, name="sent message")
    b = check_bits(received, name="received message")
    if a.shape != b.shape:
        raise ValueError(f"messages must have equal length, got {a.shape} vs {b.shape}")
    return float(np.mean(a != b))


def fake_probability(ber: float, tau: float) -> float:
    """Map a BER to the probability that the sample is fake (see module docs)."""
    if not 0 < tau < 0.5:
        raise ValueError(f"tau must lie in (0, 0.5), got {tau}")
    if ber < 0 or ber > 1:
        raise ValueError(f"BER must lie in [0, 1], got {ber}")
    if ber <= tau:
        return 0.5 * ber / tau
    if ber <= 0.5:
        return 0.5 + 0.5 * (ber - tau) / (0.5 - tau)
    return 1.0


@dataclass(frozen=True)
class ThresholdCalibration:
    """A calibrated decision threshold and how it was obtained."""

    tau: float
    protocol: str  # "white_box" or "black_box"
    provenance: str = ""

    def __post_init__(self):
        if not 0 < self.tau < 0.5:
            raise ValueError(f"tau must lie in (0, 0.5), got {self.tau}")
        if self.protocol not in ("white_box", "black_box"):
            raise ValueError(f"unknown protocol {self.protocol!r}")

    def save(self, path) -> None:
        lines = [
            f"format_version={CALIBRATION_FORMAT_VERSION}",
            f"protocol={self.protocol}",
            f"tau={self.tau!r}",
            f"provenance={self.provenance}",
        ]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ThresholdCalibration":
        fields = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key] = value
        if int(fields.get("format_version", -1)) != CALIBRATION_FORMAT_VERSION:
            raise ValueError(f"unsupported calibration format in {path}")
        return cls(tau=float(fields["tau"]), protocol=fields["protocol"],
                   provenance=fields.get("provenance", ""))


def _provenance_digest(values) -> str:
    h = hashlib.sha256()
    for v in values:
        h.update(repr(round(float(v), 9)).encode())
    return h.hexdigest()[:16]


def calibrate_white_box(real_bers, fake_bers) -> ThresholdCalibration:
    """Grid-search the threshold separating validation fakes from reals.

    Maximizes mean P(fake | fake samples) - mean P(fake | real samples) over
    the fixed tau grid; ties break toward the smallest tau.
    """
    real = np.asarray(real_bers, dtype=np.float64)
    fake = np.asarray(fake_bers, dtype=np.float64)
    if real.size == 0 or fake.size == 0:
        raise ValueError("both real and fake BER lists must be nonempty")
    objective = np.empty(CALIBRATION_GRID.size)
    for i, tau in enumerate(CALIBRATION_GRID):
        p_fake = np.mean([fake_probability(r, tau) for r in fake])
        p_real = np.mean([fake_probability(r, tau) for r in real])
        objective[i] = p_fake - p_real
    best = int(np.argmax(objective))  # first max = smallest tau on ties
    if np.allclose(objective, objective[0]):
        warnings.warn("calibration objective is constant; real and fake BERs "
                      "are indistinguishable on the grid", stacklevel=2)
    tau = float(CALIBRATION_GRID[best])
    return ThresholdCalibration(
        tau=tau, protocol="white_box",
        provenance=f"grid search over {CALIBRATION_GRID.size} points; "
                   f"n_real={real.size} n_fake={fake.size} "
                   f"digest={_provenance_digest(np.concatenate([real, fake]))}")


def calibrate_black_box(robust_bers, safety_addend: float = 0.0) -> ThresholdCalibration:
    """Set the threshold from the robustness evaluation of real samples only:
    the mean BER under worst-level perturbations plus an optional safety
    addend, clipped to one grid step inside (0, 0.5)."""
    bers = np.asarray(robust_bers, dtype=np.float64)
    if bers.size == 0:
        raise ValueError("robust BER list must be nonempty")
    tau = float(np.clip(bers.mean() + safety_addend, CALIBRATION_GRID[0], CALIBRATION_GRID[-1]))
    return ThresholdCalibration(
        tau=tau, protocol="black_box",
        provenance=f"mean of {bers.size} robust BERs + addend {safety_addend}; "
                   f"digest={_provenance_digest(bers)}")


@dataclass(frozen=True)
class VerificationResult:
    """Outcome of verifying one image against its expected message."""

    ber: float
    p_fake: float
    verdict: str  # "real" or "fake"
    tau: float


def verify_bits(expected, decoded, calibration: ThresholdCalibration) -> VerificationResult:
    ber = bit_error_rate(expected, decoded)
    p = fake_probability(ber, calibration.tau)
    return VerificationResult(ber=ber, p_fake=p,
                              verdict="fake" if p > 0.5 else "real",
                              tau=calibration.tau)


# ---------------------------------------------------------------------------
# detection metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionMetrics:
    acc: float
    auc: float


def detection_metrics(scored) -> DetectionMetrics:
    """ACC at the p_fake > 0.5 rule and rank-statistic AUC (ties count half)
    over (p_fake, label) pairs with labels in {"real", "fake"}."""
    scores, labels = [], []
    for p, label in scored:
        if label not in ("real", "fake"):
            raise ValueError(f"label must be 'real' or 'fake', got {label!r}")
        scores.append(float(p))
        labels.append(label == "fake")
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    n_fake = int(labels.sum())
    n_real = labels.size - n_fake
    if n_fake == 0 or n_real == 0:
        raise ValueError("AUC undefined: both real and fake samples are required")
    predicted_fake = scores > 0.5
    acc = float(np.mean(predicted_fake == labels))
    # Mann-Whitney U via midranks.
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum_fake = ranks[labels].sum()
    auc = (rank_sum_fake - n_fake * (n_fake + 1) / 2.0) / (n_fake * n_real)
    return DetectionMetrics(acc=acc, auc=float(auc))


# ---------------------------------------------------------------------------
# fidelity metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FidelityMetrics:
    """psnr is math.inf for identical images (flagged, not an error)."""

    psnr: float
    ssim: float


def psnr(x, y, peak: float = 2.0) -> float:
    """Peak signal-to-noise ratio in dB over all channels; peak defaults to
    the canonical [-1, 1] dynamic range. Scale-invariant, so the value equals
    the usual 0-255 convention."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("images must have equal shapes")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5


def _ssim_filter(img: np.ndarray) -> np.ndarray:
    half = _SSIM_WINDOW // 2
    pos = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (pos / _SSIM_SIGMA) ** 2)
    k /= k.sum()
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def ssim(x, y, data_range: float = 2.0) -> float:
    """Structural similarity with the standard 11x11 gaussian window
    (sigma 1.5) and default constants, averaged over channels. Border pixels
    within half a window of the edge are excluded."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("images must have equal shapes")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    half = _SSIM_WINDOW // 2
    values = []
    for ch in range(a.shape[0]):
        u, v = a[ch], b[ch]
        mu_u = _ssim_filter(u)
        mu_v = _ssim_filter(v)
        uu = _ssim_filter(u * u) - mu_u * mu_u
        vv = _ssim_filter(v * v) - mu_v * mu_v
        uv = _ssim_filter(u * v) - mu_u * mu_v
        num = (2 * mu_u * mu_v + c1) * (2 * uv + c2)
        den = (mu_u**2 + mu_v**2 + c1) * (uu + vv + c2)
        smap = num / den
        values.append(smap[half:-half, half:-half].mean())
    return float(np.mean(values))


def fidelity(x, y) -> FidelityMetrics:
    """PSNR/SSIM between a cover image and its watermarked version."""
    return FidelityMetrics(psnr=psnr(x, y), ssim=ssim(x, y))
