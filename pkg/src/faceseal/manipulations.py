"""Surrogate face manipulations used to probe fragility without real
generators: landmark-polygon blend swap, mouth replacement, a smooth
face-region attribute shift, and decoding under a foreign condition map.

Blend swap and mouth replacement are bit-exact identities outside their
masks: the alpha falloff is feathered inward from the region boundary, never
outward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

from . import codec
from .metrics import bit_error_rate
from .model import WatermarkModel
from .validation import as_image_batch

MANIPULATION_KINDS = ("condition_swap", "blend_swap", "mouth_replace", "attribute_shift")


@dataclass(frozen=True)
class ManipulationSpec:
    """kind plus strength in (0, 1]; swap kinds need a source image."""

    kind: str
    strength: float = 1.0
    needs_source: bool = True

    def __post_init__(self):
        if self.kind not in MANIPULATION_KINDS:
            raise ValueError(f"unknown manipulation kind {self.kind!r}")
        if not 0 < self.strength <= 1:
            raise ValueError(f"strength must lie in (0, 1], got {self.strength}")
        object.__setattr__(self, "needs_source", self.kind in ("condition_swap", "blend_swap",
                                                               "mouth_replace"))


def canonical_landmarks(height: int, width: int) -> np.ndarray:
    """Fixed 5-point layout (x, y): eyes, nose tip, mouth corners, scaled to
    the crop. Deterministic stand-in for a landmark detector at desk scale."""
    pts = np.array([
        [0.36, 0.44],  # left eye
        [0.64, 0.44],  # right eye
        [0.50, 0.58],  # nose tip
        [0.38, 0.72],  # left mouth corner
        [0.62, 0.72],  # right mouth corner
    ])
    return pts * np.array([width - 1, height - 1])


def _as_array(image) -> np.ndarray:
    if isinstance(image, torch.Tensor):
        image = image.detach().cpu().numpy()
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected a (3, H, W) image, got {arr.shape}")
    return arr


def _polygon_mask(points: np.ndarray, height: int, width: int) -> np.ndarray:
    """Filled convex-hull mask of the given points."""
    from matplotlib.path import Path as MplPath

    hull = _convex_hull(points)
    if hull.shape[0] < 3 or _polygon_area(hull) < 4.0:  # under ~4 px^2
        raise ValueError("degenerate landmark polygon")
    yy, xx = np.mgrid[0:height, 0:width]
    coords = np.stack([xx.ravel(), yy.ravel()], axis=1)
    inside = MplPath(hull).contains_points(coords, radius=0.5)
    return inside.reshape(height, width)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    pts = sorted(map(tuple, points))

    def half(iterable):
        out = []
        for p in iterable:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.array(lower[:-1] + upper[:-1])


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, 1)) - np.dot(y, np.roll(x, 1)))


def _inward_feather(mask: np.ndarray, feather: float) -> np.ndarray:
    """Alpha that is 0 outside/at the boundary and ramps to 1 inside."""
    if not mask.any():
        return mask.astype(np.float64)
    dist = ndimage.distance_transform_edt(mask)
    return np.clip(dist / max(feather, 1e-6), 0.0, 1.0)


def _expand_about_centroid(points: np.ndarray, factor: float) -> np.ndarray:
    centroid = points.mean(axis=0)
    return centroid + (points - centroid) * factor


def blend_swap(image, donor, landmarks: np.ndarray | None = None,
               donor_landmarks: np.ndarray | None = None,
               strength: float = 1.0, feather: float = 4.0) -> np.ndarray:
    """Warp the donor's face polygon onto the image and alpha-blend it in.

    The polygon is the expanded convex hull of the landmarks; the blend alpha
    is strength times an inward feather, so pixels outside the polygon are
    untouched. The donor is warped by the affine map taking its landmarks to
    the target's.
    """
    x = _as_array(image)
    d = _as_array(donor)
    _, h, w = x.shape
    if landmarks is None:
        landmarks = canonical_landmarks(h, w)
    if donor_landmarks is None:
        donor_landmarks = canonical_landmarks(d.shape[1], d.shape[2])
    warped = _affine_warp(d, donor_landmarks, landmarks, (h, w))
    polygon = _expand_about_centroid(np.asarray(landmarks, dtype=np.float64), 1.6)
    mask = _polygon_mask(polygon, h, w)
    alpha = strength * _inward_feather(mask, feather)
    return (x + alpha[None] * (warped - x)).astype(np.float32)


def _affine_warp(image: np.ndarray, src_pts: np.ndarray, dst_pts: np.ndarray,
                 out_shape: tuple[int, int]) -> np.ndarray:
    """Least-squares affine map sending src landmarks to dst landmarks."""
    src = np.asarray(src_pts, dtype=np.float64)
    dst = np.asarray(dst_pts, dtype=np.float64)
    ones = np.ones((dst.shape[0], 1))
    a, *_ = np.linalg.lstsq(np.hstack([dst, ones]), src, rcond=None)
    # ndimage works in (row, col) = (y, x): build the matrix accordingly.
    m = np.array([[a[1, 1], a[0, 1]], [a[1, 0], a[0, 0]]])
    offset = np.array([a[2, 1], a[2, 0]])
    out = np.empty((3, *out_shape), dtype=np.float64)
    for c in range(3):
        out[c] = ndimage.affine_transform(image[c].astype(np.float64), m, offset=offset,
                                          output_shape=out_shape, order=1, mode="nearest")
    return out


def mouth_replace(image, donor, strength: float = 1.0, feather: float = 3.0) -> np.ndarray:
    """Paste the donor's mouth region with feathered blending (identity
    outside the mouth ellipse)."""
    x = _as_array(image)
    d = _as_array(donor)
    if d.shape != x.shape:
        raise ValueError("donor must match the image shape")
    _, h, w = x.shape
    pts = canonical_landmarks(h, w)
    mouth_center = pts[3:5].mean(axis=0)  # (x, y)
    half_w = max(3.0, (pts[4, 0] - pts[3, 0]) * 0.85)
    half_h = max(2.0, h * 0.09)
    yy, xx = np.mgrid[0:h, 0:w]
    inside = (((xx - mouth_center[0]) / half_w) ** 2 + ((yy - mouth_center[1]) / half_h) ** 2) <= 1.0
    alpha = strength * _inward_feather(inside, feather)
    return (x + alpha[None] * (d - x)).astype(np.float32)


def attribute_shift(image, strength: float = 1.0) -> np.ndarray:
    """Smooth color/tone warp restricted to the face region: a channel remix
    plus a brightness lift, faded in by an elliptical mask. Converges to the
    identity as strength -> 0."""
    x = _as_array(image).astype(np.float64)
    _, h, w = x.shape
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = 0.54 * (h - 1), 0.5 * (w - 1)
    d2 = ((yy - cy) / (0.42 * h)) ** 2 + ((xx - cx) / (0.34 * w)) ** 2
    mask = 1.0 / (1.0 + np.exp(8.0 * (d2 - 1.0)))
    mix = np.array([[0.55, 0.35, 0.10],
                    [0.10, 0.55, 0.35],
                    [0.35, 0.10, 0.55]])
    warped = np.einsum("ck,khw->chw", mix, x) + 0.12
    out = x + strength * mask[None] * (np.clip(warped, -1.0, 1.0) - x)
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def apply_manipulation(spec: ManipulationSpec, image, source=None) -> np.ndarray:
    """Dispatch one pixel-space manipulation (condition_swap is evaluated
    through the model; see condition_swap_ber)."""
    if spec.kind == "blend_swap":
        if source is None:
            raise ValueError("blend_swap requires a source image")
        return blend_swap(image, source, strength=spec.strength)
    if spec.kind == "mouth_replace":
        if source is None:
            raise ValueError("mouth_replace requires a source image")
        return mouth_replace(image, source, strength=spec.strength)
    if spec.kind == "attribute_shift":
        return attribute_shift(image, strength=spec.strength)
    raise ValueError(f"{spec.kind} is not a pixel-space manipulation")


# ---------------------------------------------------------------------------
# condition swap (model-level manipulation)
# ---------------------------------------------------------------------------

@torch.no_grad()
def condition_swap_ber(model: WatermarkModel, watermarked, other_image, bits,
                       warn_same_identity: bool = False) -> float:
    """Decode a watermarked image under the condition map of another image.

    On a trained model the mismatched key drives the BER toward chance: the
    purest probe of manipulation fragility.
    """
    xs = as_image_batch(watermarked, size=model.config.image_size)
    other = as_image_batch(other_image, size=model.config.image_size)
    cond = model.condition_map(other)
    decoded = codec.logits_to_bits(model.decode_with_condition(xs, cond))
    return bit_error_rate(np.asarray(bits).reshape(-1), decoded.reshape(-1))
