"""Attention-guided patch masking.

The frozen original model scores every patch by the attention its class
token pays to it (mean over heads, final block), the top fraction of
patches is selected, and the corresponding image pixels are replaced by
zeros or Gaussian noise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import DTYPE, stop_recording
from .vit import AttentionMap, ViTParams, forward


class MaskType(enum.Enum):
    ZERO = "zero"
    GAUSSIAN = "gaussian"


def patch_count(ratio: float, num_patches: int) -> int:
    """k = floor(ratio * N); the tiny epsilon absorbs float
    representation error in decimal ratios."""
    return int(np.floor(ratio * num_patches + 1e-9))


@dataclass(frozen=True)
class MaskSpec:
    """Masking policy: which fraction of patches, replaced with what."""

    ratio: float
    mask_type: MaskType = MaskType.ZERO
    gaussian_std: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError(f"mask ratio must be in [0, 1], got {self.ratio}")
        if self.gaussian_std <= 0.0:
            raise ConfigError(f"gaussian_std must be positive, got {self.gaussian_std}")

    def patch_count(self, num_patches: int) -> int:
        return patch_count(self.ratio, num_patches)


@dataclass
class MaskedBatch:
    """Masked images plus, per sample, the ascending patch indices masked."""

    images: np.ndarray
    masked_indices: np.ndarray  # [batch, k] int, each row sorted ascending

    def __post_init__(self):
        idx = self.masked_indices
        if idx.ndim != 2:
            raise DimensionError(f"masked_indices must be [batch, k], got {idx.shape}")
        if idx.shape[1] > 1 and not (np.diff(idx, axis=1) > 0).all():
            raise DimensionError("masked indices must be strictly ascending per sample")


def class_token_attention(attn: AttentionMap) -> np.ndarray:
    """Head-averaged attention from the class token to each patch: [B, N]."""
    n = attn.weights.shape[-1] - 1
    if n < 1:
        raise ConfigError("attention map has no patch tokens")
    return attn.weights[:, :, 0, 1:].mean(axis=1)


def select_top_k(scores: np.ndarray, ratio: float) -> np.ndarray:
    """Indices of the k = floor(ratio*N) largest scores per row.

    Ties prefer the lower patch index; each output row is sorted
    ascending. Invariant under any positive rescaling of the scores.
    """
    scores = np.asarray(scores, dtype=DTYPE)
    if scores.ndim != 2:
        raise DimensionError(f"scores must be [batch, patches], got {scores.shape}")
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"ratio must be in [0, 1], got {ratio}")
    n = scores.shape[1]
    k = patch_count(ratio, n)
    order = np.argsort(-scores, axis=1, kind="stable")  # stable: lower index wins ties
    return np.sort(order[:, :k], axis=1)


def apply_mask(
    images: np.ndarray,
    indices: np.ndarray,
    spec: MaskSpec,
    patch_size: int,
    seed: int = 0,
) -> MaskedBatch:
    """Replace the pixels of the selected patches; all others unchanged.

    Gaussian replacement draws per sample from a generator seeded
    `seed + sample_index`, so samples can be processed independently.
    """
    images = np.asarray(images, dtype=DTYPE)
    if images.ndim != 4:
        raise DimensionError(f"images must be [B, C, S, S], got {images.shape}")
    indices = np.asarray(indices, dtype=np.int64)
    b, c, s, _ = images.shape
    grid = s // patch_size
    n = grid * grid
    if indices.size and (indices.min() < 0 or indices.max() >= n):
        raise IndexError(f"patch index outside [0, {n}) in mask indices")

    out = images.copy()
    p = patch_size
    for i in range(b):
        rng = None
        if spec.mask_type is MaskType.GAUSSIAN:
            rng = np.random.Generator(np.random.PCG64(seed + i))
        for patch in indices[i]:
            row, col = divmod(int(patch), grid)
            r0, c0 = row * p, col * p
            if spec.mask_type is MaskType.ZERO:
                out[i, :, r0:r0 + p, c0:c0 + p] = 0.0
            else:
                out[i, :, r0:r0 + p, c0:c0 + p] = rng.normal(0.0, spec.gaussian_std, (c, p, p))
    return MaskedBatch(images=out, masked_indices=indices)


def build_masked_view(
    model: ViTParams,
    images: np.ndarray,
    spec: MaskSpec,
    seed: int = 0,
) -> MaskedBatch:
    """Mask `images` guided by `model`'s own final-block attention.

    `model` is the frozen reference model; its forward pass runs with
    gradient recording suppressed.
    """
    with stop_recording():
        out = forward(model, images, capture_attention=True)
    scores = class_token_attention(out.last_attention)
    indices = select_top_k(scores, spec.ratio)
    return apply_mask(images, indices, spec, model.config.patch_size, seed=seed)
