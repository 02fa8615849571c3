"""Datasets: procedurally generated toy portraits and directory ingestion.

The toy generator renders face-like images whose geometry and colors are
deterministic functions of an identity seed (skin tone, face shape, eye
spacing, hair, lip color, ...), with per-sample variation in pose, lighting,
gaze, mouth openness, and background. That gives the frozen attribute
encoders a real signal to separate identities at desk scale while keeping
the repository self-contained.

Splits are identity-disjoint with 72/14/14 proportions, assigned by ordering
identities by a seeded hash.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.72, 0.14, 0.14)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}


# ---------------------------------------------------------------------------
# identity splitting
# ---------------------------------------------------------------------------

def split_identities(names, seed: int) -> dict[str, str]:
    """Deterministic identity-disjoint split: 72% train, 14% val, rest test."""
    names = sorted(set(names))
    if not names:
        raise ValueError("no identities to split")
    keyed = sorted(names, key=lambda n: hashlib.sha256(f"{seed}:{n}".encode()).hexdigest())
    n = len(keyed)
    n_train = math.floor(SPLIT_FRACTIONS[0] * n)
    n_val = math.floor(SPLIT_FRACTIONS[1] * n)
    assignment = {}
    for i, name in enumerate(keyed):
        if i < n_train:
            assignment[name] = "train"
        elif i < n_train + n_val:
            assignment[name] = "val"
        else:
            assignment[name] = "test"
    return assignment


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    identity: str
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def identities(self, split: str | None = None) -> list[str]:
        names = []
        for e in self.entries:
            if split is None or e.split == split:
                if e.identity not in names:
                    names.append(e.identity)
        return names


def ingest(path, seed: int = 0) -> DatasetManifest:
    """Scan a directory of identity subfolders into a split manifest.

    Layout: <path>/<identity>/<image files>. Unreadable entries are skipped
    with a logged warning; an empty result is rejected.
    """
    root = Path(path)
    if not root.is_dir():
        raise ValueError(f"dataset root {root} is not a directory")
    found: list[tuple[str, str]] = []
    for ident_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for img in sorted(ident_dir.iterdir()):
            if img.suffix.lower() in IMAGE_SUFFIXES:
                found.append((str(img), ident_dir.name))
    if not found:
        raise ValueError(f"no images found under {root}")
    assignment = split_identities([ident for _, ident in found], seed)
    entries = tuple(ManifestEntry(path=p, identity=ident, split=assignment[ident])
                    for p, ident in found)
    return DatasetManifest(entries=entries)


def load_image(path, size: int) -> np.ndarray:
    """Load, center-crop square, resize, and map to [-1, 1] float32 (3, S, S)."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        w, h = im.size
        side = min(w, h)
        left, top = (w - side) // 2, (h - side) // 2
        im = im.crop((left, top, left + side, top + side))
        im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32)
    return (arr / 127.5 - 1.0).transpose(2, 0, 1)


def save_image_png(path, image) -> None:
    """Write a canonical [-1, 1] image as 8-bit PNG (round-half-even)."""
    arr = np.asarray(image, dtype=np.float64)
    u8 = np.clip(np.rint((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0)).save(path, format="PNG")


# ---------------------------------------------------------------------------
# toy portrait generator
# ---------------------------------------------------------------------------

def _soft_ellipse(yy, xx, cy, cx, ry, rx, sharp=60.0):
    from scipy.special import expit

    d = ((yy - cy) / max(ry, 1e-6)) ** 2 + ((xx - cx) / max(rx, 1e-6)) ** 2
    return expit(sharp * (1.0 - d))


def _paint(img, mask, color):
    for c in range(3):
        img[c] = img[c] * (1.0 - mask) + color[c] * mask


def identity_params(identity: int, seed: int) -> dict:
    """Deterministic appearance parameters for one toy identity."""
    rng = np.random.default_rng(hash_seed("identity", seed, identity))
    return {
        "skin": rng.uniform(-0.25, 0.85, size=3),
        "hair": rng.uniform(-0.9, 0.6, size=3),
        "bg_top": rng.uniform(-0.8, 0.8, size=3),
        "bg_bottom": rng.uniform(-0.8, 0.8, size=3),
        "face_cx": rng.uniform(0.47, 0.53),
        "face_cy": rng.uniform(0.50, 0.56),
        "face_rx": rng.uniform(0.25, 0.36),
        "face_ry": rng.uniform(0.33, 0.44),
        "hairline": rng.uniform(0.26, 0.36),
        "eye_dx": rng.uniform(0.09, 0.16),
        "eye_y": rng.uniform(0.41, 0.48),
        "eye_r": rng.uniform(0.030, 0.055),
        "iris": rng.uniform(-0.9, 0.3, size=3),
        "brow": rng.uniform(-0.95, -0.4, size=3),
        "brow_dy": rng.uniform(0.05, 0.09),
        "nose_len": rng.uniform(0.08, 0.14),
        "nose_w": rng.uniform(0.015, 0.035),
        "mouth_y": rng.uniform(0.67, 0.75),
        "mouth_w": rng.uniform(0.07, 0.15),
        "mouth_h": rng.uniform(0.018, 0.045),
        "lip": rng.uniform(-0.6, 0.6, size=3) * np.array([0.4, 0.4, 0.4]) + np.array([0.3, -0.35, -0.3]),
        "cheek": rng.uniform(-0.2, 0.6, size=3),
        "cheek_r": rng.uniform(0.0, 0.07),
    }


def hash_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def render_face(params: dict, size: int, variation_rng: np.random.Generator) -> np.ndarray:
    """Render one (3, size, size) portrait in [-1, 1] with per-sample jitter."""
    p = params
    r = variation_rng
    dx = r.uniform(-0.015, 0.015)
    dy = r.uniform(-0.015, 0.015)
    gain = r.uniform(0.92, 1.08)
    tilt = r.uniform(-0.12, 0.12)
    openness = r.uniform(0.0, 1.0)
    gaze = r.uniform(-0.012, 0.012)
    bg_jit = r.uniform(-0.08, 0.08, size=3)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / (size - 1)
    img = np.empty((3, size, size), dtype=np.float64)
    for c in range(3):
        img[c] = (p["bg_top"][c] + bg_jit[c]) * (1 - yy) + (p["bg_bottom"][c] + bg_jit[c]) * yy

    cx, cy = p["face_cx"] + dx, p["face_cy"] + dy

    # hair: larger ellipse behind/above the face
    hair_mask = _soft_ellipse(yy, xx, cy - 0.06, cx, p["face_ry"] * 1.12, p["face_rx"] * 1.18)
    _paint(img, hair_mask, p["hair"])

    from scipy.special import expit

    face_mask = _soft_ellipse(yy, xx, cy, cx, p["face_ry"], p["face_rx"])
    # forehead stays hair-colored above the hairline
    face_mask = face_mask * expit(80.0 * (yy - (p["hairline"] + dy)))
    _paint(img, face_mask, p["skin"])

    if p["cheek_r"] > 0.02:
        for sx in (-1, 1):
            cheek = _soft_ellipse(yy, xx, cy + 0.10, cx + sx * p["eye_dx"] * 1.1,
                                  p["cheek_r"], p["cheek_r"] * 1.3) * face_mask
            _paint(img, cheek * 0.6, p["cheek"])

    eye_y = p["eye_y"] + dy
    for sx in (-1, 1):
        ex = cx + sx * p["eye_dx"]
        sclera = _soft_ellipse(yy, xx, eye_y, ex, p["eye_r"] * 0.75, p["eye_r"])
        _paint(img, sclera, (0.85, 0.85, 0.85))
        iris = _soft_ellipse(yy, xx, eye_y, ex + gaze, p["eye_r"] * 0.45, p["eye_r"] * 0.45)
        _paint(img, iris, p["iris"])
        pupil = _soft_ellipse(yy, xx, eye_y, ex + gaze, p["eye_r"] * 0.2, p["eye_r"] * 0.2)
        _paint(img, pupil, (-0.95, -0.95, -0.95))
        brow = _soft_ellipse(yy, xx, eye_y - p["brow_dy"], ex, p["eye_r"] * 0.35, p["eye_r"] * 1.25)
        _paint(img, brow, p["brow"])

    nose = _soft_ellipse(yy, xx, eye_y + p["nose_len"] * 0.7, cx, p["nose_len"] * 0.55, p["nose_w"])
    _paint(img, nose * 0.5, p["skin"] * 0.55)

    mouth_y = p["mouth_y"] + dy
    lips = _soft_ellipse(yy, xx, mouth_y, cx, p["mouth_h"], p["mouth_w"])
    _paint(img, lips, np.clip(p["lip"], -0.95, 0.95))
    inner = _soft_ellipse(yy, xx, mouth_y, cx, p["mouth_h"] * 0.55 * openness, p["mouth_w"] * 0.7)
    _paint(img, inner, (-0.8, -0.85, -0.85))

    shade = gain * (1.0 + tilt * (xx - 0.5) * 2.0)
    img = img * shade
    img += r.normal(0.0, 0.012, size=img.shape)
    return np.clip(img, -1.0, 1.0).astype(np.float32)


def toy_identity_name(index: int) -> str:
    return f"id{index:04d}"


def write_toy_dataset(root, n_identities: int, per_identity: int,
                      size: int, seed: int = 0) -> Path:
    """Materialize the toy dataset as identity subfolders of PNG files."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for ident in range(n_identities):
        params = identity_params(ident, seed)
        ident_dir = root / toy_identity_name(ident)
        ident_dir.mkdir(exist_ok=True)
        for j in range(per_identity):
            rng = np.random.default_rng(hash_seed("sample", seed, ident, j))
            save_image_png(ident_dir / f"{j:03d}.png", render_face(params, size, rng))
    return root


# ---------------------------------------------------------------------------
# in-memory dataset used by training and evaluation
# ---------------------------------------------------------------------------

class FaceDataset:
    """Images plus identity labels, with identity-disjoint splits."""

    def __init__(self, images: np.ndarray, identity_names: list[str],
                 identity_of: np.ndarray, split_of: dict[str, str]):
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError("images must be (M, 3, H, W)")
        self.images = images.astype(np.float32)
        self.identity_names = identity_names
        self.identity_of = np.asarray(identity_of)
        self.split_of = split_of

    @classmethod
    def toy(cls, n_identities: int, per_identity: int, size: int, seed: int = 0) -> "FaceDataset":
        names = [toy_identity_name(i) for i in range(n_identities)]
        images = np.empty((n_identities * per_identity, 3, size, size), dtype=np.float32)
        identity_of = np.empty(n_identities * per_identity, dtype=np.int64)
        k = 0
        for ident in range(n_identities):
            params = identity_params(ident, seed)
            for j in range(per_identity):
                rng = np.random.default_rng(hash_seed("sample", seed, ident, j))
                images[k] = render_face(params, size, rng)
                identity_of[k] = ident
                k += 1
        return cls(images, names, identity_of, split_identities(names, seed))

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, size: int) -> "FaceDataset":
        names = manifest.identities()
        index = {n: i for i, n in enumerate(names)}
        images, idents = [], []
        for entry in manifest.entries:
            try:
                images.append(load_image(entry.path, size))
            except OSError as exc:
                logger.warning("skipping unreadable image %s: %s", entry.path, exc)
                continue
            idents.append(index[entry.identity])
        if not images:
            raise ValueError("manifest yielded no readable images")
        split_of = {e.identity: e.split for e in manifest.entries}
        return cls(np.stack(images), names, np.asarray(idents), split_of)

    @classmethod
    def from_directory(cls, path, size: int, seed: int = 0) -> "FaceDataset":
        return cls.from_manifest(ingest(path, seed), size)

    # -- access -------------------------------------------------------------

    def identity_indices(self, split: str) -> np.ndarray:
        return np.array([i for i, name in enumerate(self.identity_names)
                         if self.split_of[name] == split], dtype=np.int64)

    def sample_indices(self, split: str) -> np.ndarray:
        wanted = set(self.identity_indices(split).tolist())
        return np.array([i for i, ident in enumerate(self.identity_of) if ident in wanted],
                        dtype=np.int64)

    def sample_batch(self, rng: np.random.Generator, batch_size: int,
                     split: str = "train") -> tuple[torch.Tensor, np.ndarray, np.ndarray]:
        """Draw one image each from ``batch_size`` distinct identities.

        Returns (images, identity indices, dataset row indices).
        """
        idents = self.identity_indices(split)
        if idents.size < batch_size:
            raise ValueError(f"split {split!r} has only {idents.size} identities, "
                             f"need {batch_size} distinct ones per batch")
        chosen = rng.choice(idents, size=batch_size, replace=False)
        rows = []
        for ident in chosen:
            pool = np.flatnonzero(self.identity_of == ident)
            rows.append(int(pool[rng.integers(0, pool.size)]))
        rows = np.asarray(rows)
        return torch.from_numpy(self.images[rows]), chosen, rows
