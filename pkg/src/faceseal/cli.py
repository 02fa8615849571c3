"""Command-line interface.

Commands: make-dataset, train, embed, extract, verify, calibrate, evaluate,
report, grid. Training options come from flags or a key=value config file
(see ``faceseal train --help``). The cache directory for generated artifacts
defaults to ./.faceseal_cache and can be overridden with FACESEAL_CACHE.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import evaluation, pipeline
from .data import FaceDataset, write_toy_dataset
from .distortions import PerturbationSpec, apply_level, grid_table
from .metrics import ThresholdCalibration, calibrate_black_box, calibrate_white_box
from .model import load_checkpoint, save_checkpoint
from .training import TrainConfig, parse_config_file, train


def cache_dir() -> Path:
    return Path(os.environ.get("FACESEAL_CACHE", ".faceseal_cache"))


def _parse_perturb(text: str) -> PerturbationSpec:
    kind, _, level = text.partition(":")
    return PerturbationSpec(kind, int(level or 0))


def _load_dataset(args, size: int) -> FaceDataset:
    return FaceDataset.from_directory(args.data, size=size, seed=args.seed)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (see README)")
    p.add_argument("--steps", type=int)
    p.add_argument("--image-size", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--no-noiser", action="store_true")
    p.add_argument("--no-adversary", action="store_true")
    p.add_argument("--fragile-weight", type=float)


def _train_config(args) -> TrainConfig:
    config = parse_config_file(args.config) if args.config else TrainConfig()
    updates = {}
    if args.steps is not None:
        updates["steps"] = args.steps
    if args.image_size is not None:
        updates["image_size"] = args.image_size
    if args.batch_size is not None:
        updates["batch_size"] = args.batch_size
    if args.alpha is not None:
        updates["alpha"] = args.alpha
    if args.learning_rate is not None:
        updates["learning_rate"] = args.learning_rate
    if args.no_noiser:
        updates["use_noiser"] = False
    if args.no_adversary:
        updates["use_adversary"] = False
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.fragile_weight is not None:
        updates["weights"] = dataclasses.replace(config.weights, fragile=args.fragile_weight)
    return dataclasses.replace(config, **updates)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="faceseal",
                                     description="Semi-fragile facial watermarking toolkit")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-dataset", help="write the procedural toy dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=30)
    p.add_argument("--per-identity", type=int, default=4)
    p.add_argument("--image-size", type=int, default=128)

    p = sub.add_parser("train", help="train a model on an identity-folder dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training-log CSV path")
    _add_train_flags(p)

    p = sub.add_parser("embed", help="watermark one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--message", required=True, help="hex message (8 chars for 32 bits)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="decode the message from an image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--json", action="store_true", help="emit JSON with per-bit logits")

    p = sub.add_parser("verify", help="verify an image against an expected message")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--expected", required=True, help="expected hex message")
    p.add_argument("--calibration", required=True)

    p = sub.add_parser("calibrate", help="calibrate the decision threshold")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--protocol", choices=["black_box", "white_box"], default="black_box")
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=None)

    p = sub.add_parser("evaluate", help="robustness / fidelity / detection sweep")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--perturb", type=_parse_perturb, default=None, metavar="KIND:LEVEL",
                   help="report a single grid cell instead of the full sweep")

    p = sub.add_parser("report", help="render plots from an evaluation directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", default=None)

    sub.add_parser("grid", help="print the perturbation grid")

    args = parser.parse_args(argv)

    if args.command == "make-dataset":
        write_toy_dataset(args.out, args.identities, args.per_identity,
                          args.image_size, args.seed)
        print(f"wrote toy dataset with {args.identities} identities to {args.out}")
        return 0

    if args.command == "train":
        config = _train_config(args)
        dataset = _load_dataset(args, config.image_size)
        result = train(config, dataset, log_path=args.log,
                       halt_checkpoint_path=str(args.out) + ".diverged", progress=True)
        save_checkpoint(args.out, result.model, step=config.steps,
                        extra={"train_config": dataclasses.asdict(config)})
        print(f"saved checkpoint to {args.out}")
        return 0

    if args.command == "grid":
        for row in grid_table():
            print(json.dumps(row))
        return 0

    model, _, _ = load_checkpoint(getattr(args, "checkpoint"))

    if args.command == "embed":
        sidecar = pipeline.embed_file(model, args.image, args.message, args.out)
        print(json.dumps(sidecar, indent=2))
        return 0

    if args.command == "extract":
        hex_message, logits = pipeline.extract_file(model, args.image)
        if args.json:
            print(json.dumps({"message": hex_message, "logits": logits.tolist()}))
        else:
            print(hex_message)
        return 0

    if args.command == "verify":
        calibration = ThresholdCalibration.load(args.calibration)
        result = pipeline.verify_file(model, args.image, args.expected, calibration)
        print(json.dumps(dataclasses.asdict(result), indent=2))
        return 0

    if args.command == "calibrate":
        dataset = _load_dataset(args, model.config.image_size)
        rng = np.random.default_rng(args.seed)
        images = evaluation.test_images(dataset, args.limit, split="val")
        if args.protocol == "black_box":
            calibration = calibrate_black_box(
                evaluation.worst_level_bers(model, images, rng))
        else:
            marked, bits = evaluation.embed_random(model, images, rng)
            real = evaluation.extraction_bers(model, marked, bits)
            donors = torch.roll(images, 1, dims=0)
            fake = evaluation.manipulation_bers(model, images, donors, bits,
                                                "condition_swap", rng, marked=marked)
            calibration = calibrate_white_box(real, fake)
        calibration.save(args.out)
        print(f"tau={calibration.tau:.4f} ({calibration.protocol}) -> {args.out}")
        return 0

    if args.command == "evaluate":
        dataset = _load_dataset(args, model.config.image_size)
        calibration = ThresholdCalibration.load(args.calibration)
        if args.perturb is not None:
            rng = np.random.default_rng(args.seed)
            images = evaluation.test_images(dataset, args.limit)
            marked, bits = evaluation.embed_random(model, images, rng)
            perturbed = apply_level(marked, args.perturb.kind, args.perturb.level, rng)
            bers = evaluation.extraction_bers(model, perturbed, bits)
            print(json.dumps({"kind": args.perturb.kind, "level": args.perturb.level,
                              "mean_ber": float(np.mean(bers)), "n": len(bers)}))
            return 0
        report = evaluation.evaluate_suite(model, dataset, calibration,
                                           seed=args.seed, limit=args.limit,
                                           out_dir=args.out)
        print(json.dumps({k: report[k] for k in
                          ("fidelity", "false_positive_rate", "tau")}, indent=2))
        print(f"full report in {args.out}")
        return 0

    if args.command == "report":
        written = evaluation.render_report(args.in_dir, args.out)
        for path in written:
            print(f"wrote {path}")
        return 0

    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
