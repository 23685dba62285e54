"""Latent-seed optimisation: match any occluded region's boundary after
plain adversarial training, holding the generator's weights constant.

Unconstrained seed updates drift away from the random-normal inputs the
generator was trained on, so two countermeasures are available: projecting
the seed back to zero mean and unit deviation after every step, or anchoring
its fitted-Gaussian moments to the standard normal through a KL penalty.
The projection keeps the moments but not normality (seeds tend to go
bimodal); the KL anchor is the default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import torch

from .bundles import ModelBundle
from .config import ZOPT_KL_ANCHOR, ZOPT_RENORMALIZE, ZOptConfig
from .images import Micrograph, Rect, Region, validate_region
from .networks import MIN_SEED, SeedTensor
from .results import InpaintResult, generator_window, paste_window, postprocess_output
from .training import _is_cancelled, content_loss


class ZOptCheckpoint(NamedTuple):
    iteration: int
    mse: float
    kl: float
    seed_mean: float
    seed_std: float
    best_mse: float


@dataclass
class ZOptTrace:
    mode: str
    records: list[ZOptCheckpoint] = field(default_factory=list)
    diverged: bool = False
    cancelled: bool = False

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec._asdict()) + "\n")


def _moments(t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    mu = t.mean()
    var = ((t - mu) ** 2).mean()
    return mu, var


def _kl_term(t: torch.Tensor) -> torch.Tensor:
    mu, var = _moments(t)
    if float(var.detach()) == 0.0:
        raise ValueError("degenerate seed: zero standard deviation")
    return 0.5 * (var + mu**2 - 1.0) - 0.5 * torch.log(var)


def kl_to_standard_normal(z: SeedTensor | torch.Tensor) -> float:
    """Closed-form KL divergence of the seed's fitted Gaussian from N(0,1)."""
    t = z.values if isinstance(z, SeedTensor) else z
    if t.numel() < 2:
        raise ValueError("need at least two entries")
    return float(_kl_term(t.detach()))


def renormalize_seed(z: SeedTensor | torch.Tensor) -> SeedTensor | torch.Tensor:
    """Project the seed to zero sample mean and unit sample deviation."""
    t = z.values if isinstance(z, SeedTensor) else z
    v = t.detach().to(torch.float64)
    mu = v.mean()
    sigma = v.std(unbiased=False)
    if float(sigma) == 0.0:
        raise ValueError("degenerate seed: zero standard deviation")
    out = ((v - mu) / sigma).to(t.dtype)
    return SeedTensor(out) if isinstance(z, SeedTensor) else out


def seed_extents_for_window(win: Rect) -> tuple[int, int]:
    s_x = (win.w - 32) // 8 + 6
    s_y = (win.h - 32) // 8 + 6
    return s_x, s_y


def _target(img: Micrograph, region: Region, win: Rect) -> tuple[torch.Tensor, torch.Tensor]:
    """Ground-truth window tensor and the mask of known pixels to match."""
    sub = img.data[win.y : win.y1, win.x : win.x1]
    gt = torch.from_numpy(np.ascontiguousarray(sub.transpose(2, 0, 1)))
    occl = region.occlusion_mask(img.height, img.width)
    known = ~occl[win.y : win.y1, win.x : win.x1]
    if not known.any():
        raise ValueError("no known pixels in the generator window")
    return gt, torch.from_numpy(known)


def optimize_seed(
    bundle: ModelBundle,
    img: Micrograph,
    region: Region,
    cfg: ZOptConfig,
    rng: int | torch.Generator = 0,
    observer: Callable[[ZOptCheckpoint], None] | None = None,
    cancel=None,
    snapshot: Callable[[int, Micrograph], None] | None = None,
) -> tuple[SeedTensor, ZOptTrace]:
    """Optimise a latent seed so the generated window matches the known
    pixels around ``region``.

    The seed starts as standard normal noise sized for the region's generator
    window and is updated by Adam on the masked MSE, with the mode's
    distribution constraint applied.  The generator is frozen throughout.
    Returns the seed with the lowest recorded MSE plus the full trace; on a
    non-finite loss the best seed so far comes back with ``diverged`` set.
    """
    bundle.check_image(img)
    validate_region(region, img)
    win = generator_window(region, img.width, img.height)
    s_x, s_y = seed_extents_for_window(win)
    gen = bundle.generator
    gt, known = _target(img, region, win)

    master = rng if isinstance(rng, torch.Generator) else torch.Generator().manual_seed(int(rng))
    z0 = SeedTensor.sample(s_x, s_y, depth=gen.latent_depth, rng=master)

    grad_flags = [p.requires_grad for p in gen.parameters()]
    for p in gen.parameters():
        p.requires_grad_(False)
    try:
        z = z0.values.clone()
        if cfg.mode == ZOPT_RENORMALIZE:
            z = renormalize_seed(z)
        z.requires_grad_(True)
        opt = torch.optim.Adam([z], lr=cfg.seed_lr)
        trace = ZOptTrace(mode=cfg.mode)
        best_mse = math.inf
        best = z.detach().clone()
        use_kl = cfg.mode == ZOPT_KL_ANCHOR and cfg.kl_weight > 0

        def record(i: int, mse_val: float, kl_val: float, t: torch.Tensor) -> None:
            mu, var = _moments(t.detach())
            cp = ZOptCheckpoint(
                i, mse_val, kl_val, float(mu), float(var.sqrt()), best_mse
            )
            trace.records.append(cp)
            if observer is not None:
                observer(cp)
            if snapshot is not None:
                snapshot(i, evaluate_zopt(bundle, SeedTensor(t.detach().clone()), img, region).image)

        for i in range(cfg.iterations):
            if _is_cancelled(cancel):
                trace.cancelled = True
                break
            out = gen(z)
            mse = content_loss(out, gt, known)
            kl = _kl_term(z)
            loss = mse + cfg.kl_weight * kl if use_kl else mse
            if not torch.isfinite(loss):
                trace.diverged = True
                break
            mse_val, kl_val = float(mse.detach()), float(kl.detach())
            if mse_val < best_mse:
                best_mse = mse_val
                best = z.detach().clone()
            if i % cfg.record_every == 0:
                record(i, mse_val, kl_val, z)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            if cfg.mode == ZOPT_RENORMALIZE:
                with torch.no_grad():
                    z.copy_(renormalize_seed(z))

        if not trace.diverged:
            with torch.no_grad():
                mse = content_loss(gen(z), gt, known)
                kl = _kl_term(z)
            mse_val = float(mse)
            if mse_val < best_mse:
                best_mse = mse_val
                best = z.detach().clone()
            record(cfg.iterations, mse_val, float(kl), z)
    finally:
        for p, flag in zip(gen.parameters(), grad_flags):
            p.requires_grad_(flag)
    return SeedTensor(best), trace


def evaluate_zopt(
    bundle: ModelBundle, z: SeedTensor, img: Micrograph, region: Region
) -> InpaintResult:
    """Generate from ``z`` and paste only the occluded pixels into the image."""
    bundle.check_image(img)
    validate_region(region, img)
    win = generator_window(region, img.width, img.height)
    s_x, s_y = seed_extents_for_window(win)
    if (z.s_x, z.s_y) != (s_x, s_y):
        raise ValueError(
            f"seed is {z.s_y}x{z.s_x} but the region window needs {s_y}x{s_x}"
        )
    with torch.no_grad():
        out = bundle.generator(z.values)
    data = postprocess_output(out, img.kind)
    return paste_window(img, region, win, data, "zopt", seed_digest=z.digest())
