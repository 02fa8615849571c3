"""Evaluation sweeps: robustness over the perturbation grid, fidelity,
threshold calibration inputs, and the detection protocol over the surrogate
manipulations.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import torch

from . import manipulations, metrics
from .data import FaceDataset
from .distortions import PERTURBATION_KINDS, PERTURBATION_LEVELS, PerturbationSpec, apply_level
from .metrics import ThresholdCalibration, fake_probability
from .model import WatermarkModel

DETECTION_KINDS = manipulations.MANIPULATION_KINDS
BENIGN_MAX_LEVEL = 3  # typical post-processing strength for the held-out real set


@torch.no_grad()
def embed_random(model: WatermarkModel, images: torch.Tensor,
                 rng: np.random.Generator) -> tuple[torch.Tensor, np.ndarray]:
    bits = rng.integers(0, 2, size=(images.shape[0], model.config.message_bits))
    return model.embed(images, bits), bits


@torch.no_grad()
def extraction_bers(model: WatermarkModel, images: torch.Tensor, bits: np.ndarray) -> list[float]:
    decoded = model.extract_bits(images.clamp(-1.0, 1.0))
    return [metrics.bit_error_rate(bits[i], decoded[i]) for i in range(images.shape[0])]


@torch.no_grad()
def robustness_sweep(model: WatermarkModel, images: torch.Tensor,
                     rng: np.random.Generator) -> list[dict]:
    """Mean BER / decoding accuracy for every (kind, level) grid cell."""
    marked, bits = embed_random(model, images, rng)
    rows = []
    for kind in PERTURBATION_KINDS:
        for level in PERTURBATION_LEVELS:
            perturbed = apply_level(marked, kind, level, rng)
            bers = extraction_bers(model, perturbed, bits)
            rows.append({
                "kind": kind, "level": level,
                "parameter": PerturbationSpec(kind, level).parameter,
                "mean_ber": float(np.mean(bers)),
                "decoding_accuracy": float(1.0 - np.mean(bers)),
                "n": len(bers),
            })
    return rows


@torch.no_grad()
def worst_level_bers(model: WatermarkModel, images: torch.Tensor,
                     rng: np.random.Generator) -> list[float]:
    """Per-sample BER under one randomly chosen highest-level perturbation:
    the input to black-box calibration."""
    marked, bits = embed_random(model, images, rng)
    bers = []
    for i in range(marked.shape[0]):
        kind = PERTURBATION_KINDS[int(rng.integers(0, len(PERTURBATION_KINDS)))]
        perturbed = apply_level(marked[i:i + 1], kind, 5, rng)
        bers.extend(extraction_bers(model, perturbed, bits[i:i + 1]))
    return bers


@torch.no_grad()
def benign_bers(model: WatermarkModel, images: torch.Tensor, rng: np.random.Generator,
                max_level: int = BENIGN_MAX_LEVEL) -> list[float]:
    """Per-sample BER under a random benign perturbation at levels 0..max_level
    (the held-out real set for false-positive measurement)."""
    marked, bits = embed_random(model, images, rng)
    bers = []
    for i in range(marked.shape[0]):
        kind = PERTURBATION_KINDS[int(rng.integers(0, len(PERTURBATION_KINDS)))]
        level = int(rng.integers(0, max_level + 1))
        perturbed = apply_level(marked[i:i + 1], kind, level, rng)
        bers.extend(extraction_bers(model, perturbed, bits[i:i + 1]))
    return bers


@torch.no_grad()
def fidelity_eval(model: WatermarkModel, images: torch.Tensor,
                  rng: np.random.Generator) -> dict:
    marked, _ = embed_random(model, images, rng)
    psnrs, ssims = [], []
    for i in range(images.shape[0]):
        fm = metrics.fidelity(images[i].numpy(), marked[i].numpy())
        psnrs.append(fm.psnr)
        ssims.append(fm.ssim)
    finite = [p for p in psnrs if np.isfinite(p)]
    return {"mean_psnr": float(np.mean(finite)) if finite else float("inf"),
            "mean_ssim": float(np.mean(ssims)),
            "n": len(psnrs),
            "n_identical": int(len(psnrs) - len(finite))}


@torch.no_grad()
def manipulation_bers(model: WatermarkModel, images: torch.Tensor, donors: torch.Tensor,
                      bits_per_image: np.ndarray, kind: str, rng: np.random.Generator,
                      strength: float = 1.0, marked: torch.Tensor | None = None) -> list[float]:
    """BER of each watermarked image after one manipulation; the condition
    map is recomputed from the manipulated image, as verification would."""
    if marked is None:
        marked = model.embed(images, bits_per_image)
    bers = []
    for i in range(marked.shape[0]):
        donor = donors[int(rng.integers(0, donors.shape[0]))]
        if kind == "condition_swap":
            ber = manipulations.condition_swap_ber(model, marked[i:i + 1],
                                                   donor.unsqueeze(0), bits_per_image[i])
            bers.append(ber)
            continue
        spec = manipulations.ManipulationSpec(kind, strength)
        faked = manipulations.apply_manipulation(spec, marked[i].numpy(), donor.numpy())
        faked_t = torch.from_numpy(faked).clamp(-1.0, 1.0)
        bers.extend(extraction_bers(model, faked_t.unsqueeze(0), bits_per_image[i:i + 1]))
    return bers


@torch.no_grad()
def detection_eval(model: WatermarkModel, images: torch.Tensor, donors: torch.Tensor,
                   calibration: ThresholdCalibration, rng: np.random.Generator,
                   strength: float = 1.0, kinds=DETECTION_KINDS) -> list[dict]:
    """ACC/AUC per manipulation kind: manipulated watermarked images against
    clean-or-mildly-perturbed real ones, scored by fake probability."""
    marked, bits = embed_random(model, images, rng)
    real_bers = extraction_bers(model, marked, bits)
    real_bers += benign_bers(model, images, rng)
    real_scored = [(fake_probability(b, calibration.tau), "real") for b in real_bers]
    rows = []
    for kind in kinds:
        fake_bers = manipulation_bers(model, images, donors, bits, kind, rng,
                                      strength, marked=marked)
        scored = real_scored + [(fake_probability(b, calibration.tau), "fake")
                                for b in fake_bers]
        det = metrics.detection_metrics(scored)
        rows.append({"kind": kind, "acc": det.acc, "auc": det.auc,
                     "mean_fake_ber": float(np.mean(fake_bers)),
                     "mean_real_ber": float(np.mean(real_bers)),
                     "tau": calibration.tau, "protocol": calibration.protocol,
                     "n_real": len(real_bers), "n_fake": len(fake_bers)})
    return rows


def test_images(dataset: FaceDataset, limit: int | None = None,
                split: str = "test") -> torch.Tensor:
    rows = dataset.sample_indices(split)
    if limit is not None:
        rows = rows[:limit]
    return torch.from_numpy(dataset.images[rows])


@torch.no_grad()
def evaluate_suite(model: WatermarkModel, dataset: FaceDataset,
                   calibration: ThresholdCalibration, seed: int = 0,
                   limit: int | None = None, out_dir=None) -> dict:
    """Run the full evaluation: robustness grid, fidelity, false-positive
    rate at the threshold, and detection over all manipulation kinds."""
    rng = np.random.default_rng(seed)
    images = test_images(dataset, limit)
    donor_rows = dataset.sample_indices("val")
    donors = torch.from_numpy(dataset.images[donor_rows])

    robustness = robustness_sweep(model, images, rng)
    fid = fidelity_eval(model, images, rng)
    held_out = benign_bers(model, images, rng)
    fpr = float(np.mean([b > calibration.tau for b in held_out]))
    detection = detection_eval(model, images, donors, calibration, rng)

    report = {"robustness": robustness, "fidelity": fid,
              "false_positive_rate": fpr, "tau": calibration.tau,
              "protocol": calibration.protocol, "detection": detection,
              "n_test_images": int(images.shape[0])}
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2))
    with open(out / "robustness.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(report["robustness"][0]))
        writer.writeheader()
        writer.writerows(report["robustness"])
    with open(out / "detection.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(report["detection"][0]))
        writer.writeheader()
        writer.writerows(report["detection"])


def render_report(report_dir, out_dir=None) -> list[Path]:
    """Render simple plots (robustness curves, detection bars) from a report
    directory produced by evaluate_suite."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report_dir = Path(report_dir)
    out = Path(out_dir) if out_dir is not None else report_dir
    out.mkdir(parents=True, exist_ok=True)
    report = json.loads((report_dir / "report.json").read_text())
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_kind: dict[str, list] = {}
    for row in report["robustness"]:
        by_kind.setdefault(row["kind"], []).append((row["level"], row["decoding_accuracy"]))
    for kind, pts in by_kind.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=kind)
    ax.axhline(0.5, linestyle="--", color="gray", label="chance")
    ax.set_xlabel("perturbation level")
    ax.set_ylabel("decoding accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out / "robustness.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    kinds = [r["kind"] for r in report["detection"]]
    pos = np.arange(len(kinds))
    ax.bar(pos - 0.2, [r["acc"] for r in report["detection"]], width=0.4, label="ACC")
    ax.bar(pos + 0.2, [r["auc"] for r in report["detection"]], width=0.4, label="AUC")
    ax.set_xticks(pos, kinds, rotation=20, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    path = out / "detection.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
