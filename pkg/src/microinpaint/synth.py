"""Synthetic blob textures for demos and desk-scale validation."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .images import COLOUR, GRAYSCALE, NPHASE, Micrograph, encode_onehot, micrograph_from_array


def _smooth_field(height: int, width: int, blob_size: float, rng: np.random.Generator) -> np.ndarray:
    field = rng.standard_normal((height, width))
    field = ndimage.gaussian_filter(field, sigma=blob_size, mode="wrap")
    field -= field.mean()
    std = field.std()
    return field / std if std > 0 else field


def synth_texture(
    kind: str = NPHASE,
    size: int = 256,
    volume_fractions: tuple[float, ...] = (0.3, 0.3, 0.4),
    blob_size: float = 8.0,
    seed: int = 0,
) -> Micrograph:
    """Generate an isotropic blob texture.

    N-phase textures threshold one smoothed Gaussian field at the quantiles
    implied by ``volume_fractions``, so the per-phase pixel counts land on the
    targets up to rounding.  Grayscale maps the field through a sigmoid;
    colour stacks three independent fields.
    """
    rng = np.random.default_rng(seed)
    if kind == NPHASE:
        vfs = np.asarray(volume_fractions, dtype=np.float64)
        if len(vfs) < 2:
            raise ValueError("need at least two phases")
        if np.any(vfs <= 0) or abs(vfs.sum() - 1.0) > 1e-9:
            raise ValueError("volume fractions must be positive and sum to 1")
        field = _smooth_field(size, size, blob_size, rng)
        cuts = np.quantile(field, np.cumsum(vfs)[:-1])
        labels = np.searchsorted(cuts, field, side="right")
        return encode_onehot(labels, len(vfs))
    if kind == GRAYSCALE:
        field = _smooth_field(size, size, blob_size, rng)
        return micrograph_from_array(1.0 / (1.0 + np.exp(-1.5 * field)), kind_hint=GRAYSCALE)
    if kind == COLOUR:
        chans = [
            1.0 / (1.0 + np.exp(-1.5 * _smooth_field(size, size, blob_size, rng)))
            for _ in range(3)
        ]
        return micrograph_from_array(np.stack(chans, axis=-1), kind_hint=COLOUR)
    raise ValueError(f"unknown kind: {kind!r}")
