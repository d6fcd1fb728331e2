"""Ground-truthed copy-move forgery synthesis with the four attack types."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .errors import ValidationError
from .images import as_gray, jpeg_roundtrip, load_mask_png, save_mask_png

NOISE_SIGMAS = (0.02, 0.04, 0.06, 0.08, 0.10)
JPEG_QUALITIES = tuple(range(100, 10, -10))  # 100, 90, ..., 20
SCALE_FACTORS = (40, 60, 80, 120, 140, 160, 180, 200)


@dataclass(frozen=True)
class Plain:
    name = "plain"

    def level(self):
        return None


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float
    name = "noise"

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError(f"noise sigma must be >= 0, got {self.sigma}")

    def level(self):
        return self.sigma


@dataclass(frozen=True)
class JpegCompress:
    quality: int
    name = "jpeg"

    def __post_init__(self):
        if not 20 <= int(self.quality) <= 100:
            raise ValidationError(f"JPEG quality must be in 20..100, got {self.quality}")

    def level(self):
        return self.quality


@dataclass(frozen=True)
class Scale:
    factor: float  # percent
    name = "scale"

    def __post_init__(self):
        if not 40 <= self.factor <= 200:
            raise ValidationError(f"scale factor must be in [40, 200] percent, got {self.factor}")

    def level(self):
        return self.factor


Attack = Union[Plain, GaussianNoise, JpegCompress, Scale]


def attack_from_dict(d: dict) -> Attack:
    kind = d.get("type")
    if kind == "plain":
        return Plain()
    if kind == "noise":
        return GaussianNoise(float(d["sigma"]))
    if kind == "jpeg":
        return JpegCompress(int(d["quality"]))
    if kind == "scale":
        return Scale(float(d["factor"]))
    raise ValidationError(f"unknown attack type {kind!r}")


def attack_to_dict(a: Attack) -> dict:
    if isinstance(a, GaussianNoise):
        return {"type": "noise", "sigma": a.sigma}
    if isinstance(a, JpegCompress):
        return {"type": "jpeg", "quality": int(a.quality)}
    if isinstance(a, Scale):
        return {"type": "scale", "factor": a.factor}
    return {"type": "plain"}


@dataclass(frozen=True)
class ForgerySpec:
    """Copy ``source_rect`` = (x, y, w, h) to ``target_origin`` = (x, y)."""

    source_rect: tuple[int, int, int, int]
    target_origin: tuple[int, int]
    attack: Attack = field(default_factory=Plain)

    def pasted_size(self) -> tuple[int, int]:
        """(w, h) of the patch after the attack's geometric change."""
        _, _, w, h = self.source_rect
        if isinstance(self.attack, Scale) and self.attack.factor != 100:
            f = self.attack.factor / 100.0
            return max(1, int(round(w * f))), max(1, int(round(h * f)))
        return w, h

    def shift(self) -> tuple[int, int]:
        return (self.target_origin[0] - self.source_rect[0], self.target_origin[1] - self.source_rect[1])

    def validate(self, shape: tuple[int, int]) -> None:
        rows, cols = shape
        x, y, w, h = self.source_rect
        if w <= 0 or h <= 0:
            raise ValidationError(f"source region has zero area: {self.source_rect}")
        if x < 0 or y < 0 or x + w > cols or y + h > rows:
            raise ValidationError(f"source region {self.source_rect} outside image {cols}x{rows}")
        tx, ty = self.target_origin
        pw, ph = self.pasted_size()
        if tx < 0 or ty < 0 or tx + pw > cols or ty + ph > rows:
            raise ValidationError(
                f"pasted region ({tx}, {ty}, {pw}, {ph}) outside image {cols}x{rows}"
            )

    def to_dict(self) -> dict:
        return {
            "source_rect": [int(v) for v in self.source_rect],
            "target_origin": [int(v) for v in self.target_origin],
            "attack": attack_to_dict(self.attack),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForgerySpec":
        return cls(
            source_rect=tuple(int(v) for v in d["source_rect"]),
            target_origin=tuple(int(v) for v in d["target_origin"]),
            attack=attack_from_dict(d.get("attack", {"type": "plain"})),
        )


@dataclass
class GroundTruth:
    mask: np.ndarray  # bool, image-sized; source and pasted regions
    shift: tuple[int, int]  # (dx, dy) pixels

    def save(self, mask_path, sidecar_path, spec: ForgerySpec, seed: int) -> None:
        save_mask_png(mask_path, self.mask)
        payload = {"shift": list(self.shift), "spec": spec.to_dict(), "seed": int(seed)}
        Path(sidecar_path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, mask_path, sidecar_path) -> tuple["GroundTruth", ForgerySpec, int]:
        meta = json.loads(Path(sidecar_path).read_text())
        gt = cls(mask=load_mask_png(mask_path), shift=tuple(meta["shift"]))
        return gt, ForgerySpec.from_dict(meta["spec"]), int(meta["seed"])


def resize_bilinear(patch: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize to ``size`` = (w, h) with bilinear interpolation."""
    w, h = size
    if (h, w) == patch.shape:
        return patch.copy()
    im = Image.fromarray(patch.astype(np.float32), mode="F")
    out = np.asarray(im.resize((w, h), resample=Image.BILINEAR), dtype=np.float64)
    return np.clip(out, 0.0, 1.0)


def synthesize_forgery(img, spec: ForgerySpec, seed: int = 0) -> tuple[np.ndarray, GroundTruth]:
    """Apply ``spec`` to ``img`` and return the forged image with its ground truth.

    Noise is zero-mean Gaussian on the pasted region only, clamped to [0, 1].
    The JPEG attack re-encodes the whole forged image. Scaling resizes the
    patch before pasting.
    """
    src = as_gray(img)
    spec.validate(src.shape)
    rng = np.random.default_rng(seed)
    x, y, w, h = spec.source_rect
    patch = src[y : y + h, x : x + w].copy()

    attack = spec.attack
    if isinstance(attack, Scale):
        patch = resize_bilinear(patch, spec.pasted_size())
    if isinstance(attack, GaussianNoise) and attack.sigma > 0:
        patch = np.clip(patch + rng.normal(0.0, attack.sigma, size=patch.shape), 0.0, 1.0)

    forged = src.copy()
    tx, ty = spec.target_origin
    ph, pw = patch.shape
    forged[ty : ty + ph, tx : tx + pw] = patch
    if isinstance(attack, JpegCompress):
        forged = jpeg_roundtrip(forged, attack.quality)

    mask = np.zeros(src.shape, dtype=bool)
    mask[y : y + h, x : x + w] = True
    mask[ty : ty + ph, tx : tx + pw] = True
    return forged, GroundTruth(mask=mask, shift=spec.shift())


def random_forgery_spec(
    rng: np.random.Generator,
    shape: tuple[int, int],
    attack: Attack | None = None,
    min_size: int = 48,
    max_size: int = 64,
    align: int = 2,
    max_tries: int = 10_000,
) -> ForgerySpec:
    """Draw a non-overlapping copy-move spec whose shift is a multiple of ``align``.

    ``align`` should be 2**levels of the wavelet decomposition so that the
    duplicated region stays aligned with the coarse-band sampling grid.
    """
    attack = attack or Plain()
    if min_size < 1 or max_size < min_size:
        raise ValidationError(f"region size range {min_size}..{max_size} is empty or has zero area")
    rows, cols = shape
    for _ in range(max_tries):
        w = int(rng.integers(min_size, max_size + 1))
        h = int(rng.integers(min_size, max_size + 1))
        sx = int(rng.integers(0, cols - w + 1))
        sy = int(rng.integers(0, rows - h + 1))
        probe = ForgerySpec((sx, sy, w, h), (0, 0), attack)
        pw, ph = probe.pasted_size()
        if pw > cols or ph > rows:
            continue
        tx = int(rng.integers(0, cols - pw + 1))
        ty = int(rng.integers(0, rows - ph + 1))
        tx -= (tx - sx) % align
        ty -= (ty - sy) % align
        if tx < 0 or ty < 0:
            continue
        overlaps = tx < sx + w and sx < tx + pw and ty < sy + h and sy < ty + ph
        if overlaps:
            continue
        return ForgerySpec((sx, sy, w, h), (tx, ty), attack)
    raise ValidationError(f"could not place a {min_size}..{max_size} region in image {shape}")
