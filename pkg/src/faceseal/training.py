"""Training loop: the main step updates the condition generator, message
encoder, and decoder on the full objective; the alternating adversarial step
updates critic and eraser on the minimax value with everything else frozen.

Every sample gets a fresh random message each step. All randomness (batch
order, messages, noiser draws) comes from one seeded generator, so a fixed
(config, dataset, seed) triple reproduces the loss trace exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import codec, losses, metrics
from .adversary import clip_critic_weights
from .data import FaceDataset
from .distortions import NoiserConfig, sample_noiser
from .model import ModelConfig, WatermarkModel, save_checkpoint


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    image_size: int = 128
    message_bits: int = 32
    alpha: float = 0.1
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)
    temperature: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 8
    steps: int = 5000
    seed: int = 0
    use_noiser: bool = True
    use_adversary: bool = True
    noiser_pool: tuple[str, ...] = ("jpeg_approx", "gaussian_blur")
    val_every: int = 0
    val_batches: int = 2
    cond_width: int = 24
    enc_width: int = 24
    dec_width: int = 32

    def model_config(self) -> ModelConfig:
        return ModelConfig(image_size=self.image_size, message_bits=self.message_bits,
                           alpha=self.alpha, cond_width=self.cond_width,
                           enc_width=self.enc_width, dec_width=self.dec_width)


@dataclass
class TrainResult:
    model: WatermarkModel
    history: list[dict]
    val_history: list[dict]
    config: TrainConfig


class _TokenCache:
    """Facial tokens are pure functions of the frozen encoders and the image,
    so they are computed once per dataset row."""

    def __init__(self, model: WatermarkModel, dataset: FaceDataset):
        self.model = model
        self.dataset = dataset
        self.cache: dict[int, torch.Tensor] = {}

    def tokens(self, rows: np.ndarray) -> torch.Tensor:
        missing = [int(r) for r in rows if int(r) not in self.cache]
        if missing:
            imgs = torch.from_numpy(self.dataset.images[missing])
            toks = self.model.facial_token(imgs)
            for r, t in zip(missing, toks):
                self.cache[r] = t
        return torch.stack([self.cache[int(r)] for r in rows])


def train(config: TrainConfig, dataset: FaceDataset, *,
          log_path=None, halt_checkpoint_path=None, progress: bool = False) -> TrainResult:
    """Run the alternating optimization and return the trained model.

    ``log_path`` receives one CSV row of loss scalars per step. A non-finite
    loss saves an emergency checkpoint to ``halt_checkpoint_path`` (when
    given) and raises TrainingDiverged.
    """
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    model = WatermarkModel(config.model_config())
    model.train()
    noiser = NoiserConfig(pool=config.noiser_pool) if config.use_noiser else None

    opt_main = torch.optim.Adam(model.embedding_parameters(), lr=config.learning_rate)
    opt_adv = torch.optim.Adam(model.adversarial_parameters(), lr=config.learning_rate)

    token_cache = _TokenCache(model, dataset)
    history: list[dict] = []
    val_history: list[dict] = []

    log_file = None
    writer = None
    if log_path is not None:
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(["step", "recon", "noise", "adversarial", "fragile", "total"])

    try:
        for step in range(config.steps):
            x, _, rows = dataset.sample_batch(rng, config.batch_size)
            bits = rng.integers(0, 2, size=(config.batch_size, config.message_bits))

            cond = model.condition_gen(token_cache.tokens(rows))
            repeated = codec.duplicate_message(bits, x.shape[2], x.shape[3])
            xs = model.msg_encoder(x, codec.transform_message(repeated, cond))

            clean_map = model.msg_decoder(xs)
            cross = codec.cross_decode_logits(clean_map, cond)
            anchor_logits = cross.diagonal(dim1=0, dim2=1).T  # (N, C_m)

            loss_r = losses.recon_loss(bits, anchor_logits)

            noised = sample_noiser(xs, noiser, rng) if noiser is not None else xs
            pos_logits = codec.decode_logits(model.msg_decoder(noised), cond)
            loss_n = losses.recon_loss(bits, pos_logits)

            if config.weights.fragile > 0:
                n = config.batch_size
                off_diag = cross[~torch.eye(n, dtype=torch.bool)].reshape(n, n - 1, -1)
                loss_f = losses.fragile_loss(anchor_logits, pos_logits, off_diag,
                                             config.temperature)
            else:
                loss_f = xs.new_zeros(())

            if config.use_adversary:
                erased_logits = model.decode_with_condition(model.eraser(xs), cond)
                loss_a = losses.adv_loss(model.critic(x), model.critic(xs), bits, erased_logits)
            else:
                loss_a = xs.new_zeros(())

            total = losses.total_loss(loss_r, loss_n, loss_a, loss_f, config.weights)
            if not torch.isfinite(total):
                record = {"step": step, "recon": float(loss_r), "noise": float(loss_n),
                          "adversarial": float(loss_a), "fragile": float(loss_f)}
                if halt_checkpoint_path is not None:
                    save_checkpoint(halt_checkpoint_path, model, step,
                                    extra={"diverged": True, "losses": record})
                raise TrainingDiverged(f"non-finite loss at step {step}: {record}")

            opt_main.zero_grad()
            total.backward()
            opt_main.step()

            if config.use_adversary:
                xs_d = xs.detach()
                cond_d = cond.detach()
                erased_logits = model.decode_with_condition(model.eraser(xs_d), cond_d)
                adv_value = losses.adv_loss(model.critic(x), model.critic(xs_d),
                                            bits, erased_logits)
                opt_adv.zero_grad()
                adv_value.backward()
                opt_adv.step()
                clip_critic_weights(model.critic)

            row = {"step": step, "recon": float(loss_r), "noise": float(loss_n),
                   "adversarial": float(loss_a), "fragile": float(loss_f),
                   "total": float(total)}
            history.append(row)
            if writer is not None:
                writer.writerow([row[k] for k in ("step", "recon", "noise",
                                                  "adversarial", "fragile", "total")])
            if progress and (step % 100 == 0 or step == config.steps - 1):
                print(f"step {step}: total={row['total']:.4f} recon={row['recon']:.4f} "
                      f"noise={row['noise']:.4f} fragile={row['fragile']:.4f}")
            if config.val_every and (step + 1) % config.val_every == 0:
                val_history.append(_validate(model, dataset, config, rng, step))
    finally:
        if log_file is not None:
            log_file.close()

    model.eval()
    return TrainResult(model=model, history=history, val_history=val_history, config=config)


@torch.no_grad()
def _validate(model: WatermarkModel, dataset: FaceDataset, config: TrainConfig,
              rng: np.random.Generator, step: int) -> dict:
    """Clean BER, mismatched-condition BER, and fidelity on the val split."""
    model.eval()
    clean_bers, swap_bers, psnrs, ssims = [], [], [], []
    n_val = min(config.batch_size, dataset.identity_indices("val").size)
    for _ in range(config.val_batches):
        x, _, _ = dataset.sample_batch(rng, n_val, split="val")
        bits = rng.integers(0, 2, size=(n_val, config.message_bits))
        cond = model.condition_map(x)
        xs = model.embed(x, bits, condition=cond)
        decoded = codec.logits_to_bits(model.decode_with_condition(xs, cond))
        swapped = codec.logits_to_bits(model.decode_with_condition(xs, cond.roll(1, dims=0)))
        for i in range(n_val):
            clean_bers.append(metrics.bit_error_rate(bits[i], decoded[i]))
            swap_bers.append(metrics.bit_error_rate(bits[i], swapped[i]))
        psnrs.append(metrics.psnr(x.numpy(), xs.numpy()))
        ssims.append(metrics.ssim(x[0].numpy(), xs[0].numpy()))
    model.train()
    return {"step": step,
            "clean_ber": float(np.mean(clean_bers)),
            "swap_ber": float(np.mean(swap_bers)),
            "psnr": float(np.mean([p for p in psnrs if math.isfinite(p)] or [math.inf])),
            "ssim": float(np.mean(ssims))}


# ---------------------------------------------------------------------------
# key=value config files
# ---------------------------------------------------------------------------

_BOOL_FIELDS = {"use_noiser", "use_adversary"}
_WEIGHT_KEYS = {"recon_weight": "recon", "noise_weight": "noise",
                "adversarial_weight": "adversarial", "fragile_weight": "fragile"}


def parse_config_file(path, base: TrainConfig | None = None) -> TrainConfig:
    """Read a key=value text file into a TrainConfig.

    Recognized keys are the TrainConfig field names (weights are set through
    recon_weight / noise_weight / adversarial_weight / fragile_weight, the
    noiser pool through noiser_pool=kind1,kind2). Lines starting with '#' are
    comments.
    """
    values = asdict(base or TrainConfig())
    weight_values = values.pop("weights")
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ValueError(f"malformed config line {raw!r}")
        if key in _WEIGHT_KEYS:
            weight_values[_WEIGHT_KEYS[key]] = float(value)
        elif key == "noiser_pool":
            values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key in _BOOL_FIELDS:
            values[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in values:
            values[key] = type(TrainConfig.__dataclass_fields__[key].default)(value)
        else:
            raise KeyError(f"unknown config key {key!r}")
    values["weights"] = losses.LossWeights(**weight_values)
    values["noiser_pool"] = tuple(values["noiser_pool"])
    return TrainConfig(**values)
