"""Generator/critic architectures and latent-seed arithmetic.

The generator grows a (depth, s, s) seed to an (8s - 16, 8s - 16) image:
two non-overlapping transpose convolutions take the seed to 4s, a 3x3
convolution mixes locally, bilinear upsampling reaches the final extent and a
3x3 convolution produces the output channels.  Keeping the early upsampling
non-overlapping bounds each seed's influence tightly, which is what makes the
central block of a fixed seed safely resampleable without disturbing the
16-pixel boundary band.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

LATENT_DEPTH = 100
MIN_SEED = 10
ANNULUS = 16

SOFTMAX = "softmax"
SIGMOID = "sigmoid"


def output_size_for(s: int) -> int:
    """Generator output extent for a seed of spatial extent ``s``."""
    if s < MIN_SEED:
        raise ValueError(f"seed extent {s} below minimum {MIN_SEED}")
    return 8 * s - 16


def seed_size_for(d_x: int, d_y: int) -> tuple[int, int]:
    """Seed extents whose output covers a d_x x d_y region plus the annulus.

    Extents must be multiples of 8; the resulting window is d + 32 per axis.
    """
    for d in (d_x, d_y):
        if d <= 0 or d % 8:
            raise ValueError(f"region extent {d} is not a positive multiple of 8")
    return d_x // 8 + 6, d_y // 8 + 6


def changeable_center_size(s: int) -> int:
    """Side of the central seed block that may be resampled safely."""
    if s < MIN_SEED:
        raise ValueError(f"seed extent {s} below minimum {MIN_SEED}")
    return 2 * (s - MIN_SEED)


@dataclass(frozen=True)
class SeedTensor:
    """Latent input of shape (depth, s_y, s_x)."""

    values: torch.Tensor

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ValueError("seed must be (depth, s_y, s_x)")
        if self.s_x < MIN_SEED or self.s_y < MIN_SEED:
            raise ValueError(f"seed extents {self.s_y}x{self.s_x} below minimum {MIN_SEED}")

    @property
    def depth(self) -> int:
        return self.values.shape[0]

    @property
    def s_y(self) -> int:
        return self.values.shape[1]

    @property
    def s_x(self) -> int:
        return self.values.shape[2]

    @classmethod
    def sample(
        cls,
        s_x: int,
        s_y: int | None = None,
        depth: int = LATENT_DEPTH,
        rng: torch.Generator | None = None,
        dtype: torch.dtype = torch.float32,
    ) -> "SeedTensor":
        s_y = s_x if s_y is None else s_y
        values = torch.randn((depth, s_y, s_x), generator=rng, dtype=dtype)
        return cls(values)

    def digest(self) -> str:
        data = self.values.detach().to(torch.float32).contiguous().numpy().tobytes()
        return hashlib.sha256(data).hexdigest()

    def clone(self) -> "SeedTensor":
        return SeedTensor(self.values.detach().clone())


class CenterResample(NamedTuple):
    seed: SeedTensor
    resampled: bool


def randomize_center(z: SeedTensor, rng: torch.Generator | None = None) -> CenterResample:
    """Resample the central changeable block; border entries stay bit-identical.

    When the seed is at minimum size there is nothing safe to change and the
    input comes back unchanged with ``resampled=False``.
    """
    n_x = changeable_center_size(z.s_x)
    n_y = changeable_center_size(z.s_y)
    n_x, n_y = min(n_x, z.s_x), min(n_y, z.s_y)
    if n_x == 0 or n_y == 0:
        return CenterResample(z, False)
    values = z.values.detach().clone()
    oy, ox = (z.s_y - n_y) // 2, (z.s_x - n_x) // 2
    block = torch.randn((z.depth, n_y, n_x), generator=rng, dtype=values.dtype)
    values[:, oy : oy + n_y, ox : ox + n_x] = block
    return CenterResample(SeedTensor(values), True)


def _init_conv(module: nn.Module, rng: torch.Generator | None) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=rng) * 0.02)
                if m.bias is not None:
                    m.bias.zero_()


class GeneratorNet(nn.Module):
    def __init__(
        self,
        out_channels: int,
        activation: str = SOFTMAX,
        widths: tuple[int, int, int] = (512, 256, 128),
        latent_depth: int = LATENT_DEPTH,
        init_rng: torch.Generator | None = None,
    ):
        super().__init__()
        if activation not in (SOFTMAX, SIGMOID):
            raise ValueError(f"unknown final activation: {activation!r}")
        self.out_channels = out_channels
        self.activation = activation
        self.widths = tuple(widths)
        self.latent_depth = latent_depth
        w0, w1, w2 = self.widths
        self.up1 = nn.ConvTranspose2d(latent_depth, w0, kernel_size=2, stride=2)
        self.up2 = nn.ConvTranspose2d(w0, w1, kernel_size=2, stride=2)
        self.mix = nn.Conv2d(w1, w2, kernel_size=3, stride=1, padding=1)
        self.head = nn.Conv2d(w2, out_channels, kernel_size=3, stride=1, padding=1)
        _init_conv(self, init_rng)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        squeeze = z.ndim == 3
        if squeeze:
            z = z.unsqueeze(0)
        if z.shape[1] != self.latent_depth:
            raise ValueError(f"seed depth {z.shape[1]} != {self.latent_depth}")
        s_y, s_x = z.shape[2], z.shape[3]
        if s_y < MIN_SEED or s_x < MIN_SEED:
            raise ValueError(f"seed extents {s_y}x{s_x} below minimum {MIN_SEED}")
        x = F.relu(self.up1(z))
        x = F.relu(self.up2(x))
        x = F.relu(self.mix(x))
        x = F.interpolate(
            x,
            size=(output_size_for(s_y), output_size_for(s_x)),
            mode="bilinear",
            align_corners=False,
        )
        x = self.head(x)
        out = torch.softmax(x, dim=1) if self.activation == SOFTMAX else torch.sigmoid(x)
        return out.squeeze(0) if squeeze else out


class CriticNet(nn.Module):
    PATCH = 64

    def __init__(
        self,
        in_channels: int,
        widths: tuple[int, int, int, int] = (64, 128, 256, 512),
        init_rng: torch.Generator | None = None,
    ):
        super().__init__()
        self.in_channels = in_channels
        self.widths = tuple(widths)
        chans = (in_channels, *self.widths, 1)
        self.convs = nn.ModuleList(
            nn.Conv2d(a, b, kernel_size=4, stride=2, padding=1)
            for a, b in zip(chans[:-1], chans[1:])
        )
        _init_conv(self, init_rng)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4:
            raise ValueError("critic input must be (batch, channels, 64, 64)")
        if x.shape[1] != self.in_channels:
            raise ValueError(f"critic expects {self.in_channels} channels, got {x.shape[1]}")
        if x.shape[2] != self.PATCH or x.shape[3] != self.PATCH:
            raise ValueError(f"critic expects {self.PATCH}x{self.PATCH} input, got {tuple(x.shape[2:])}")
        for conv in self.convs[:-1]:
            x = F.leaky_relu(conv(x), 0.2)
        x = self.convs[-1](x)
        return x.mean(dim=(1, 2, 3))


def forward_g(g: GeneratorNet, z: SeedTensor | torch.Tensor) -> torch.Tensor:
    values = z.values if isinstance(z, SeedTensor) else z
    return g(values)


def forward_d(d: CriticNet, x: torch.Tensor) -> torch.Tensor:
    return d(x)


def activation_for_kind(kind: str) -> str:
    from .images import NPHASE

    return SOFTMAX if kind == NPHASE else SIGMOID
