"""Adversarial training: Wasserstein critic with gradient penalty, plus the
generator-optimisation method that pins a fixed seed to one occluded region
through a boundary content loss.

The critic only ever scores patches generated from random seeds; output from
the fixed seed feeds the content loss alone, since its constant boundary
would otherwise let the critic single out fakes.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import torch

from .bundles import METHOD_GOPT, METHOD_WGAN, ModelBundle
from .config import GP_CLIP, GP_PENALTY, TrainingConfig
from .images import (
    NPHASE,
    Micrograph,
    PatchSet,
    Rect,
    RectRegion,
    Region,
    annulus_mask,
    decode_argmax,
    encode_onehot,
    micrograph_from_array,
    validate_region,
)
from .networks import (
    CriticNet,
    GeneratorNet,
    SeedTensor,
    activation_for_kind,
    randomize_center,
    seed_size_for,
)
from .results import InpaintResult, paste_window, postprocess_output

RAND_SEED_EXTENT = 10  # random seeds generate 64x64 fakes, matching the patches


class TrainStep(NamedTuple):
    iteration: int
    l_d: float
    l_g: float
    l_cl: float
    wall_time: float


Observer = Callable[[TrainStep], None]
Snapshot = Callable[[int, Micrograph], None]
Cancel = "threading.Event | Callable[[], bool] | None"


class JsonlWriter:
    """Observer that appends one JSON object per training step."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def __call__(self, step: TrainStep) -> None:
        self._fh.write(json.dumps(step._asdict()) + "\n")

    def close(self) -> None:
        self._fh.flush()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class GradientPenaltyUnsupported(RuntimeError):
    """Raised when differentiating through the critic's input gradient fails;
    callers may fall back to weight clipping via ``gp_mode``."""


def content_loss(gen_window: torch.Tensor, gt_window: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean squared error over masked pixels, averaged across channels."""
    if gen_window.shape != gt_window.shape:
        raise ValueError(f"shape mismatch: {tuple(gen_window.shape)} vs {tuple(gt_window.shape)}")
    if mask.shape != gen_window.shape[-2:]:
        raise ValueError("mask must match the window's spatial extent")
    if not bool(mask.any()):
        raise ValueError("content-loss mask is empty")
    diff = gen_window - gt_window
    return (diff[..., mask] ** 2).mean()


def gradient_penalty(
    d: CriticNet,
    real_batch: torch.Tensor,
    fake_batch: torch.Tensor,
    rng: torch.Generator | None = None,
    weight: float = 10.0,
) -> torch.Tensor:
    """Two-sided penalty on the critic's input-gradient norm at interpolates.

    Interpolation coefficients are drawn uniformly per sample (one scalar
    shared across channels and pixels).
    """
    if real_batch.shape != fake_batch.shape:
        raise ValueError("real and fake batches must have matching shapes")
    n = real_batch.shape[0]
    eps = torch.rand((n, 1, 1, 1), generator=rng, dtype=real_batch.dtype)
    mixed = (eps * real_batch + (1.0 - eps) * fake_batch).detach().requires_grad_(True)
    scores = d(mixed)
    try:
        grads = torch.autograd.grad(scores.sum(), mixed, create_graph=True)[0]
    except RuntimeError as exc:
        raise GradientPenaltyUnsupported(str(exc)) from exc
    norms = grads.flatten(1).norm(2, dim=1)
    return weight * ((norms - 1.0) ** 2).mean()


def _is_cancelled(cancel) -> bool:
    if cancel is None:
        return False
    if isinstance(cancel, threading.Event):
        return cancel.is_set()
    return bool(cancel())


def _substreams(rng: int | torch.Generator, n: int) -> list[torch.Generator]:
    if isinstance(rng, torch.Generator):
        master = rng
    else:
        master = torch.Generator().manual_seed(int(rng))
    seeds = torch.randint(0, 2**62, (n,), generator=master)
    return [torch.Generator().manual_seed(int(s)) for s in seeds]


def _window_tensor(img: Micrograph, win: Rect) -> torch.Tensor:
    sub = img.data[win.y : win.y1, win.x : win.x1]
    return torch.from_numpy(np.ascontiguousarray(sub.transpose(2, 0, 1)))


def _run_training(
    img: Micrograph,
    region: Region | None,
    cfg: TrainingConfig,
    rng: int | torch.Generator,
    observer: Observer | None,
    cancel,
    snapshot: Snapshot | None,
    with_fixed_seed: bool,
    method: str,
) -> ModelBundle:
    init_g, init_d, patch_rng, latent_rng, gp_rng, fixed_rng = _substreams(rng, 6)
    g = GeneratorNet(
        img.channels,
        activation=activation_for_kind(img.kind),
        widths=cfg.g_widths,
        latent_depth=cfg.latent_depth,
        init_rng=init_g,
    )
    d = CriticNet(img.channels, widths=cfg.d_widths, init_rng=init_d)
    opt_g = torch.optim.Adam(g.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas)
    opt_d = torch.optim.Adam(d.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas)

    z_fixed = None
    gt_win = mask = None
    if with_fixed_seed:
        assert isinstance(region, RectRegion)
        s_x, s_y = seed_size_for(region.rect.w, region.rect.h)
        z_fixed = SeedTensor.sample(s_x, s_y, cfg.latent_depth, rng=fixed_rng)
        win = region.window
        gt_win = _window_tensor(img, win)
        mask = torch.from_numpy(annulus_mask(region))

    patches = PatchSet(
        img, exclusion=region, patch_size=cfg.patch_size, augmentation=cfg.augmentation
    )
    c = cfg.content_coeff
    t0 = time.monotonic()
    l_g_val = l_cl_val = 0.0
    cancelled = False

    for i in range(cfg.i_max):
        if _is_cancelled(cancel):
            cancelled = True
            break

        z_rand = torch.randn(
            (cfg.batch_size, cfg.latent_depth, RAND_SEED_EXTENT, RAND_SEED_EXTENT),
            generator=latent_rng,
        )
        with torch.no_grad():
            fake = g(z_rand)
        real = patches.sample(cfg.batch_size, patch_rng)
        if cfg.gp_mode == GP_PENALTY:
            gp = gradient_penalty(d, real, fake, gp_rng, cfg.gp_weight)
        else:
            gp = torch.zeros(())
        l_d = d(fake).mean() - d(real).mean() + gp
        opt_d.zero_grad(set_to_none=True)
        l_d.backward()
        opt_d.step()
        if cfg.gp_mode == GP_CLIP:
            with torch.no_grad():
                for p in d.parameters():
                    p.clamp_(-cfg.clip_value, cfg.clip_value)

        if i % cfg.critic_per_g == 0:
            z_rand = torch.randn(
                (cfg.batch_size, cfg.latent_depth, RAND_SEED_EXTENT, RAND_SEED_EXTENT),
                generator=latent_rng,
            )
            fake = g(z_rand)
            l_g = -d(fake).mean()
            if z_fixed is not None:
                if c > 0:
                    fixed_out = g(z_fixed.values)
                    l_cl = content_loss(fixed_out, gt_win, mask)
                    l_g = l_g + c * l_cl
                else:
                    with torch.no_grad():
                        l_cl = content_loss(g(z_fixed.values), gt_win, mask)
            else:
                l_cl = torch.zeros(())
            opt_g.zero_grad(set_to_none=True)
            l_g.backward()
            opt_g.step()
            l_g_val, l_cl_val = float(l_g.detach()), float(l_cl.detach())

        if observer is not None:
            observer(TrainStep(i, float(l_d.detach()), l_g_val, l_cl_val, time.monotonic() - t0))
        if snapshot is not None and ((i + 1) % cfg.snapshot_every == 0 or i + 1 == cfg.i_max):
            snapshot(i, _preview(g, img, region, z_fixed))

    bundle = ModelBundle(
        generator=g,
        critic=d,
        kind=img.kind,
        config=cfg,
        method=method,
        n_phases=img.n_phases,
        phase_values=img.phase_values,
        region=region,
        fixed_seed=z_fixed,
        source_hash=img.source_hash,
        partial=cancelled,
    )
    return bundle


def _preview(
    g: GeneratorNet, img: Micrograph, region: Region | None, z_fixed: SeedTensor | None
) -> Micrograph:
    with torch.no_grad():
        if z_fixed is not None and isinstance(region, RectRegion):
            out = g(z_fixed.values)
            data = postprocess_output(out, img.kind)
            return paste_window(img, region, region.window, data, METHOD_GOPT).image
        z = torch.randn((g.latent_depth, RAND_SEED_EXTENT, RAND_SEED_EXTENT))
        arr = postprocess_output(g(z), img.kind)
    if img.kind == NPHASE:
        return encode_onehot(decode_argmax(arr), img.n_phases, img.phase_values)
    return micrograph_from_array(arr, kind_hint=img.kind)


def train_gopt(
    img: Micrograph,
    region: RectRegion,
    cfg: TrainingConfig,
    rng: int | torch.Generator = 0,
    observer: Observer | None = None,
    cancel=None,
    snapshot: Snapshot | None = None,
) -> ModelBundle:
    """Train a generator specialised to one rectangular occluded region.

    Every iteration updates the critic on random-seed fakes versus patches
    sampled outside the region window; every ``critic_per_g``-th iteration
    updates the generator on the adversarial score plus ``content_coeff``
    times the fixed seed's annulus mismatch.  The fixed seed is sampled once
    and saved in the returned bundle.
    """
    if not isinstance(region, RectRegion):
        raise ValueError("generator optimisation takes rectangular regions")
    if region.annulus_width != 16:
        raise ValueError("training requires the 16-pixel annulus")
    validate_region(region, img)
    return _run_training(
        img, region, cfg, rng, observer, cancel, snapshot, with_fixed_seed=True, method=METHOD_GOPT
    )


def train_wgan(
    img: Micrograph,
    cfg: TrainingConfig,
    rng: int | torch.Generator = 0,
    observer: Observer | None = None,
    region: Region | None = None,
    cancel=None,
    snapshot: Snapshot | None = None,
) -> ModelBundle:
    """Train an unconstrained generator on the micrograph's patch distribution.

    Identical to :func:`train_gopt` with a zero content coefficient and no
    fixed seed; a known occluded region may still be excluded from sampling.
    """
    if region is not None:
        validate_region(region, img)
    return _run_training(
        img, region, cfg, rng, observer, cancel, snapshot, with_fixed_seed=False, method=METHOD_WGAN
    )


def evaluate_gopt(
    bundle: ModelBundle,
    img: Micrograph,
    resample: bool = False,
    rng: torch.Generator | None = None,
) -> InpaintResult:
    """Inpaint the bundle's region: generate from the fixed seed (optionally
    with its centre resampled) and paste only the occluded pixels."""
    if bundle.fixed_seed is None:
        raise ValueError("bundle has no fixed seed; was it trained with train_gopt?")
    if not isinstance(bundle.region, RectRegion):
        raise ValueError("bundle region is not rectangular")
    bundle.check_image(img)
    validate_region(bundle.region, img)
    warning = False
    z_eval = bundle.fixed_seed
    if resample:
        z_eval, resampled = randomize_center(bundle.fixed_seed, rng)
        warning = not resampled
    with torch.no_grad():
        out = bundle.generator(z_eval.values)
    data = postprocess_output(out, img.kind)
    return paste_window(
        img,
        bundle.region,
        bundle.region.window,
        data,
        METHOD_GOPT,
        seed_digest=z_eval.digest(),
        resample_warning=warning,
    )
