"""Inpaint quality analysis: two-sample KS testing, border contiguity,
volume-fraction distributions, pixel histograms, baseline fills and the
seed-propagation probe."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .bundles import ModelBundle
from .images import COLOUR, GRAYSCALE, NPHASE, Micrograph, Region, rgb_to_gray
from .networks import SeedTensor, output_size_for
from .results import InpaintResult, generator_window, paste_window, postprocess_output
from .seedopt import seed_extents_for_window

FILL_ZEROS = "zeros"
FILL_UNIFORM = "uniform_noise"
FILL_RANDOM_SEED = "random_seed"


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def _kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution.

    The alternating series converges quickly for large arguments; for small
    ones the theta-transformed series is used instead.
    """
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        q = math.exp(-math.pi**2 / (8.0 * lam**2))
        return 1.0 - math.sqrt(2.0 * math.pi) / lam * (q + q**9 + q**25)
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k**2 * lam**2)
        total += term
        if abs(term) < 1e-16 * max(abs(total), 1.0):
            break
    return min(max(total, 0.0), 1.0)


def _ks_lambda(statistic: float, n_effective: float) -> float:
    en = math.sqrt(n_effective)
    return (en + 0.12 + 0.11 / en) * statistic


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic two-sided p-value.

    The statistic is the maximum absolute gap between the empirical CDFs; the
    p-value evaluates the Kolmogorov distribution at the size-corrected
    argument with effective size |a||b| / (|a|+|b|).
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs non-empty samples")
    both = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, both, side="right") / a.size
    cdf_b = np.searchsorted(b, both, side="right") / b.size
    statistic = float(np.max(np.abs(cdf_a - cdf_b)))
    n_e = a.size * b.size / (a.size + b.size)
    p = _kolmogorov_sf(_ks_lambda(statistic, n_e))
    return statistic, min(max(p, 0.0), 1.0)


def ks_log10_p(statistic: float, n_effective: float) -> float:
    """log10 of the asymptotic p-value, stable far below float underflow."""
    lam = _ks_lambda(statistic, n_effective)
    p = _kolmogorov_sf(lam)
    if p > 1e-280:
        return math.log10(p) if p > 0 else -math.inf
    # leading series term dominates: p ~ 2 exp(-2 lam^2)
    return math.log10(2.0) - 2.0 * lam**2 / math.log(10.0)


# ---------------------------------------------------------------------------
# Border contiguity


@dataclass
class ContiguityReport:
    border_sq_diffs: np.ndarray
    reference_sq_diffs: np.ndarray
    ks_statistic: float
    p_value: float
    log10_p: float
    reference_subsample_seed: int | None = None

    def to_json(self, path: str | Path | None = None) -> dict:
        obj = {
            "v": 1,
            "ks_statistic": self.ks_statistic,
            "p_value": self.p_value,
            "log10_p": self.log10_p,
            "n_border": int(self.border_sq_diffs.size),
            "n_reference": int(self.reference_sq_diffs.size),
            "border_sq_diffs": self.border_sq_diffs.tolist(),
            "reference_sq_diffs": self.reference_sq_diffs.tolist(),
        }
        if path is not None:
            Path(path).write_text(json.dumps(obj))
        return obj


def _pair_sq_diff(values_a: np.ndarray, values_b: np.ndarray) -> np.ndarray:
    """Squared difference of paired pixel values, averaged over channels."""
    d = (values_a.astype(np.float64) - values_b.astype(np.float64)) ** 2
    return d.mean(axis=-1) if d.ndim > 1 else d


def _comparison_values(m: Micrograph) -> np.ndarray:
    """Pixel values used for neighbour comparisons: phases map to equally
    spaced gray levels, gray/colour keep their channels."""
    if m.kind == NPHASE:
        return m.gray()[:, :, None]
    return m.data


def neighbour_sq_diffs(m: Micrograph) -> np.ndarray:
    """Squared differences over all 4-connected neighbour pairs."""
    v = _comparison_values(m)
    horiz = _pair_sq_diff(v[:, :-1].reshape(-1, v.shape[2]), v[:, 1:].reshape(-1, v.shape[2]))
    vert = _pair_sq_diff(v[:-1].reshape(-1, v.shape[2]), v[1:].reshape(-1, v.shape[2]))
    return np.concatenate([horiz, vert])


def border_pair_sq_diffs(result: InpaintResult, original: Micrograph) -> np.ndarray:
    """Squared differences across the region boundary: the outside pixel of
    each 4-connected straddling pair comes from the original image, the
    inside pixel from the inpainted result."""
    occl = result.region.occlusion_mask(original.height, original.width)
    v_orig = _comparison_values(original)
    v_gen = _comparison_values(result.image)
    diffs = []
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        out_sl = (slice(max(0, -dy), occl.shape[0] - max(0, dy)),
                  slice(max(0, -dx), occl.shape[1] - max(0, dx)))
        in_sl = (slice(max(0, dy), occl.shape[0] - max(0, -dy)),
                 slice(max(0, dx), occl.shape[1] - max(0, -dx)))
        straddle = ~occl[out_sl] & occl[in_sl]
        if straddle.any():
            diffs.append(_pair_sq_diff(v_orig[out_sl][straddle], v_gen[in_sl][straddle]))
    if not diffs:
        raise ValueError("region boundary has no straddling pixel pairs")
    return np.concatenate(diffs)


def border_contiguity(
    result: InpaintResult,
    original: Micrograph,
    max_reference_pairs: int = 1_000_000,
    subsample_seed: int = 0,
) -> ContiguityReport:
    """Compare border-pair squared differences against the whole image's
    neighbour-pair distribution with a two-sample KS test."""
    if result.image.data.shape != original.data.shape:
        raise ValueError("result and original must have the same dimensions")
    border = border_pair_sq_diffs(result, original)
    reference = neighbour_sq_diffs(original)
    seed_used = None
    if reference.size > max_reference_pairs:
        seed_used = subsample_seed
        idx = np.random.default_rng(subsample_seed).choice(
            reference.size, size=max_reference_pairs, replace=False
        )
        reference = reference[idx]
    stat, p = ks_two_sample(border, reference)
    n_e = border.size * reference.size / (border.size + reference.size)
    return ContiguityReport(
        border_sq_diffs=border,
        reference_sq_diffs=reference,
        ks_statistic=stat,
        p_value=p,
        log10_p=ks_log10_p(stat, n_e),
        reference_subsample_seed=seed_used,
    )


def gt_self_test(original: Micrograph, region: Region) -> InpaintResult:
    """The ground-truth baseline: an 'inpaint' that keeps the original pixels."""
    res = InpaintResult(image=original, region=region, method="gt")
    res.verify_against(original)
    return res


# ---------------------------------------------------------------------------
# Baseline fills


def baseline_fill(
    original: Micrograph,
    region: Region,
    kind: str,
    rng: torch.Generator | None = None,
    bundle: ModelBundle | None = None,
) -> InpaintResult:
    """Reference fills for contiguity comparisons: zeros, uniform noise, or a
    trained generator driven by an unoptimised random seed."""
    win = region.window
    h, w, c = win.h, win.w, original.channels
    if kind == FILL_ZEROS:
        if original.kind == NPHASE:
            data = np.zeros((h, w, c), dtype=np.float32)
            data[:, :, 0] = 1.0
        else:
            data = np.zeros((h, w, c), dtype=np.float32)
        return paste_window(original, region, win, data, f"fill:{kind}")
    if kind == FILL_UNIFORM:
        if original.kind == NPHASE:
            labels = torch.randint(original.n_phases, (h, w), generator=rng).numpy()
            data = np.eye(c, dtype=np.float32)[labels]
        else:
            data = torch.rand((h, w, c), generator=rng).numpy().astype(np.float32)
        return paste_window(original, region, win, data, f"fill:{kind}")
    if kind == FILL_RANDOM_SEED:
        if bundle is None:
            raise ValueError("random_seed fill needs a trained bundle")
        bundle.check_image(original)
        gwin = generator_window(region, original.width, original.height)
        s_x, s_y = seed_extents_for_window(gwin)
        z = SeedTensor.sample(s_x, s_y, depth=bundle.generator.latent_depth, rng=rng)
        with torch.no_grad():
            out = bundle.generator(z.values)
        data = postprocess_output(out, original.kind)
        return paste_window(original, region, gwin, data, f"fill:{kind}", seed_digest=z.digest())
    raise ValueError(f"unknown fill kind: {kind!r}")


# ---------------------------------------------------------------------------
# Volume fractions and pixel histograms


def volume_fractions(window: np.ndarray | Micrograph) -> np.ndarray:
    """Per-phase pixel fractions of an n-phase tensor (argmax over channels)."""
    if isinstance(window, Micrograph):
        if window.kind != NPHASE:
            raise ValueError("volume fractions need an n-phase image")
        arr = window.data
    else:
        arr = np.asarray(window)
        if arr.ndim != 3 or arr.shape[2] < 2:
            raise ValueError("expected (height, width, phases) with >= 2 phases")
    labels = np.argmax(arr, axis=2)
    counts = np.bincount(labels.ravel(), minlength=arr.shape[2]).astype(np.float64)
    return counts / counts.sum()


@dataclass
class VfReport:
    n_phases: int
    gt: np.ndarray  # (samples, phases)
    random_seed: np.ndarray
    fixed_seed: np.ndarray | None
    p_random: list[float]
    p_fixed: list[float] | None

    def to_json(self, path: str | Path | None = None) -> dict:
        obj = {
            "v": 1,
            "n_phases": self.n_phases,
            "p_random": self.p_random,
            "p_fixed": self.p_fixed,
            "gt": self.gt.tolist(),
            "random_seed": self.random_seed.tolist(),
            "fixed_seed": self.fixed_seed.tolist() if self.fixed_seed is not None else None,
        }
        if path is not None:
            Path(path).write_text(json.dumps(obj))
        return obj

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source", "sample", "phase", "volume_fraction"])
            groups = [("gt", self.gt), ("random_seed", self.random_seed)]
            if self.fixed_seed is not None:
                groups.append(("fixed_seed", self.fixed_seed))
            for name, arr in groups:
                for i, row in enumerate(arr):
                    for k, vf in enumerate(row):
                        writer.writerow([name, i, k, f"{vf:.8f}"])


def _sample_gt_windows(
    img: Micrograph, region: Region | None, size: tuple[int, int], count: int, rng: np.random.Generator
) -> np.ndarray:
    h, w = size
    ny, nx = img.height - h + 1, img.width - w + 1
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny))
    xs, ys = xs.ravel(), ys.ravel()
    if region is not None:
        win = region.window
        overlap = (xs < win.x1) & (xs + w > win.x) & (ys < win.y1) & (ys + h > win.y)
        xs, ys = xs[~overlap], ys[~overlap]
    if xs.size == 0:
        raise ValueError("no valid ground-truth window positions")
    idx = rng.integers(0, xs.size, size=count)
    return np.stack([img.data[ys[i] : ys[i] + h, xs[i] : xs[i] + w] for i in idx])


def vf_distributions(
    img: Micrograph,
    region: Region,
    bundle: ModelBundle,
    n_samples: int = 128,
    rng_seed: int = 0,
    include_fixed: bool = True,
) -> VfReport:
    """Volume-fraction distributions at the region's size: ground-truth
    patches versus random-seed generations (and, for bundles with a fixed
    seed, resampled fixed-seed generations), with per-phase KS p-values
    against the ground truth."""
    if img.kind != NPHASE:
        raise ValueError("volume-fraction analysis needs an n-phase image")
    bundle.check_image(img)
    from .networks import randomize_center  # local to avoid cycle at import time

    bb = region.bbox
    np_rng = np.random.default_rng(rng_seed)
    t_rng = torch.Generator().manual_seed(rng_seed)

    gt_windows = _sample_gt_windows(img, region, (bb.h, bb.w), n_samples, np_rng)
    gt = np.stack([volume_fractions(wdw) for wdw in gt_windows])

    gwin = generator_window(region, img.width, img.height)
    s_x, s_y = seed_extents_for_window(gwin)
    rand_vfs = []
    for _ in range(n_samples):
        z = SeedTensor.sample(s_x, s_y, depth=bundle.generator.latent_depth, rng=t_rng)
        with torch.no_grad():
            out = bundle.generator(z.values)
        data = postprocess_output(out, img.kind)
        crop = data[16 : 16 + bb.h, 16 : 16 + bb.w]
        rand_vfs.append(volume_fractions(crop))
    random_seed = np.stack(rand_vfs)

    fixed = None
    p_fixed = None
    if include_fixed and bundle.fixed_seed is not None:
        fixed_vfs = []
        for _ in range(n_samples):
            z, _ = randomize_center(bundle.fixed_seed, t_rng)
            with torch.no_grad():
                out = bundle.generator(z.values)
            data = postprocess_output(out, img.kind)
            crop = data[16 : 16 + bb.h, 16 : 16 + bb.w]
            fixed_vfs.append(volume_fractions(crop))
        fixed = np.stack(fixed_vfs)
        p_fixed = [ks_two_sample(gt[:, k], fixed[:, k])[1] for k in range(gt.shape[1])]

    p_random = [ks_two_sample(gt[:, k], random_seed[:, k])[1] for k in range(gt.shape[1])]
    return VfReport(
        n_phases=img.n_phases,
        gt=gt,
        random_seed=random_seed,
        fixed_seed=fixed,
        p_random=p_random,
        p_fixed=p_fixed,
    )


def pixel_histogram(samples, bins: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Normalised frequency of pixel values in [0,1]; colour samples pass
    through the luma transform first.  N-phase input is rejected."""
    values = []
    for s in samples:
        if isinstance(s, Micrograph):
            if s.kind == NPHASE:
                raise ValueError("pixel histograms are for grayscale or colour data")
            arr = s.data[:, :, 0] if s.kind == GRAYSCALE else rgb_to_gray(s.data)
        else:
            arr = np.asarray(s)
            if arr.ndim == 3 and arr.shape[2] == 3:
                arr = rgb_to_gray(arr)
        values.append(arr.ravel())
    flat = np.concatenate(values)
    hist, edges = np.histogram(flat, bins=bins, range=(0.0, 1.0))
    return hist / flat.size, edges


# ---------------------------------------------------------------------------
# Seed-propagation probe


@dataclass
class ProbeProfile:
    block: int
    profile: np.ndarray  # absolute output change summed over channels and rows

    def affected_width(self, threshold: float = 1e-6) -> int:
        idx = np.nonzero(self.profile > threshold)[0]
        return 0 if idx.size == 0 else int(idx[-1] - idx[0] + 1)


def seed_propagation_probe(
    bundle: ModelBundle,
    base_seed_size: int,
    max_block: int,
    rng: torch.Generator | None = None,
    block_sizes=None,
) -> list[ProbeProfile]:
    """Measure how far central-seed changes propagate into the output.

    A baseline image is generated from one random seed; for each block size
    the central block is resampled and |output - baseline| is summed over
    channels and one spatial axis, giving a per-column profile.
    """
    if block_sizes is None:
        block_sizes = range(1, max_block + 1)
    sizes = list(block_sizes)
    if any(b > max_block for b in sizes):
        raise ValueError("block size exceeds max_block")
    if base_seed_size < max_block + 2:
        raise ValueError("block sizes must leave at least one fixed seed ring")
    g = bundle.generator
    z = SeedTensor.sample(base_seed_size, depth=g.latent_depth, rng=rng)
    with torch.no_grad():
        baseline = g(z.values)
    profiles = []
    for b in sizes:
        if b == 0:
            profiles.append(ProbeProfile(0, np.zeros(baseline.shape[-1])))
            continue
        v = z.values.clone()
        o = (base_seed_size - b) // 2
        v[:, o : o + b, o : o + b] = torch.randn((z.depth, b, b), generator=rng)
        with torch.no_grad():
            out = g(v)
        diff = (out - baseline).abs().sum(dim=0).sum(dim=0)  # channels, then rows
        profiles.append(ProbeProfile(b, diff.numpy()))
    return profiles


def probe_to_csv(profiles: list[ProbeProfile], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "column", "offset_from_centre", "summed_abs_diff"])
        for prof in profiles:
            n = prof.profile.size
            centre = (n - 1) / 2.0
            for i, v in enumerate(prof.profile):
                writer.writerow([prof.block, i, f"{i - centre:.1f}", f"{v:.8g}"])
