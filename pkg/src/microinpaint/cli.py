"""Command-line front door: synth, train, inpaint, validate, probe, serve.

Every subcommand honours --seed for reproducible outputs.  Exit codes:
0 success, 1 runtime error, 2 usage or validation error.
"""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import __version__
from .analysis import (
    FILL_RANDOM_SEED,
    FILL_UNIFORM,
    FILL_ZEROS,
    baseline_fill,
    border_contiguity,
    gt_self_test,
    probe_to_csv,
    seed_propagation_probe,
    vf_distributions,
)
from .bundles import METHOD_GOPT, bundle_digest, load_bundle, save_bundle
from .config import TrainingConfig, ZOptConfig
from .images import (
    NPHASE,
    Rect,
    RectRegion,
    load_micrograph,
    region_from_json,
    save_png,
    validate_region,
)
from .seedopt import evaluate_zopt, optimize_seed
from .synth import synth_texture
from .training import JsonlWriter, evaluate_gopt, train_gopt, train_wgan


def _load_config_file(path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode())
    return json.loads(text)


def _parse_rect(spec: str) -> RectRegion:
    try:
        x, y, w, h = (int(v) for v in spec.split(","))
    except ValueError:
        raise click.UsageError(f"--rect expects x,y,w,h integers, got {spec!r}")
    snapped_w = max(8, round(w / 8) * 8)
    snapped_h = max(8, round(h / 8) * 8)
    if w % 8 or h % 8:
        raise click.UsageError(
            f"rectangle extents must be multiples of 8; nearest valid size is "
            f"{snapped_w}x{snapped_h}"
        )
    try:
        return RectRegion(Rect(x, y, w, h))
    except ValueError as exc:
        raise click.UsageError(str(exc))


def _load_region(region_json: str | None, rect: str | None):
    if rect is not None:
        return _parse_rect(rect)
    if region_json is not None:
        path = Path(region_json)
        if not path.is_file():
            raise click.ClickException(f"region file not found: {region_json}")
        try:
            return region_from_json(json.loads(path.read_text()))
        except ValueError as exc:
            raise click.UsageError(str(exc))
    return None


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise click.ClickException(f"{what} not found: {path}")
    return p


def _training_config(config: str | None, **overrides) -> TrainingConfig:
    base = _load_config_file(config) if config else {}
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainingConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"bad training config: {exc}")


def _widths(spec: str | None):
    return None if spec is None else tuple(int(v) for v in spec.split(","))


@click.group()
@click.version_option(__version__)
def main():
    """Adversarial inpainting of homogeneous micrographs."""


@main.command()
@click.option("--out", required=True, type=click.Path(), help="output PNG path")
@click.option("--size", default=256, show_default=True)
@click.option("--kind", default="nphase", type=click.Choice(["nphase", "grayscale", "colour"]))
@click.option("--vfs", default="0.3,0.3,0.4", show_default=True, help="phase volume fractions")
@click.option("--blob", default=8.0, show_default=True, help="feature length scale in pixels")
@click.option("--seed", default=0, show_default=True)
def synth(out, size, kind, vfs, blob, seed):
    """Generate a synthetic blob texture for trials and validation."""
    fractions = tuple(float(v) for v in vfs.split(","))
    try:
        m = synth_texture(kind=kind, size=size, volume_fractions=fractions, blob_size=blob, seed=seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    save_png(m, out)
    click.echo(f"wrote {out} ({kind}, {size}x{size})")


@main.command()
@click.argument("method", type=click.Choice(["gopt", "zopt"]))
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--rect", default=None, help="occluded rectangle as x,y,w,h")
@click.option("--region", "region_json", default=None, type=click.Path(), help="region JSON file")
@click.option("--out", required=True, type=click.Path(), help="bundle output path")
@click.option("--log", "log_path", default=None, type=click.Path(), help="JSON-lines training log")
@click.option("--snapshot-dir", default=None, type=click.Path(), help="preview PNG directory")
@click.option("--config", default=None, type=click.Path(), help="TOML/JSON config file")
@click.option("--iters", default=None, type=int, help="training iterations")
@click.option("--batch-size", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--content-coeff", default=None, type=float)
@click.option("--gp-weight", default=None, type=float)
@click.option("--critic-per-g", default=None, type=int)
@click.option("--snapshot-every", default=None, type=int)
@click.option("--g-widths", default=None, help="generator channel widths, comma separated")
@click.option("--d-widths", default=None, help="critic channel widths, comma separated")
@click.option("--seed", default=0, show_default=True)
def train(
    method,
    image_path,
    rect,
    region_json,
    out,
    log_path,
    snapshot_dir,
    config,
    iters,
    batch_size,
    lr,
    content_coeff,
    gp_weight,
    critic_per_g,
    snapshot_every,
    g_widths,
    d_widths,
    seed,
):
    """Train an inpainting model on one micrograph."""
    img = load_micrograph(_require_file(image_path, "image"))
    cfg = _training_config(
        config,
        i_max=iters,
        batch_size=batch_size,
        learning_rate=lr,
        content_coeff=content_coeff,
        gp_weight=gp_weight,
        critic_per_g=critic_per_g,
        snapshot_every=snapshot_every,
        g_widths=_widths(g_widths),
        d_widths=_widths(d_widths),
    )
    region = _load_region(region_json, rect)
    if method == "gopt" and region is None:
        raise click.UsageError("gopt training needs --rect or --region")
    if region is not None:
        try:
            validate_region(region, img)
        except ValueError as exc:
            raise click.UsageError(str(exc))

    snapshot = None
    if snapshot_dir is not None:
        snap_base = Path(snapshot_dir)
        snap_base.mkdir(parents=True, exist_ok=True)

        def snapshot(i, preview):
            save_png(preview, snap_base / f"iter{i + 1:07d}.png")

    observer = JsonlWriter(log_path) if log_path else None
    try:
        if method == "gopt":
            if not isinstance(region, RectRegion):
                raise click.UsageError("gopt training takes a rectangular region")
            bundle = train_gopt(img, region, cfg, rng=seed, observer=observer, snapshot=snapshot)
        else:
            bundle = train_wgan(img, cfg, rng=seed, observer=observer, region=region, snapshot=snapshot)
    finally:
        if observer is not None:
            observer.close()
    save_bundle(bundle, out)
    click.echo(f"wrote {out} (digest {bundle_digest(out)[:16]})")


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="output PNG path or directory")
@click.option("--rect", default=None, help="region for zopt bundles, as x,y,w,h")
@click.option("--region", "region_json", default=None, type=click.Path())
@click.option("--resample", default=0, type=int, help="emit N centre-resampled variants (gopt)")
@click.option("--zopt-iters", default=None, type=int)
@click.option("--zopt-lr", default=None, type=float)
@click.option("--kl-weight", default=None, type=float)
@click.option("--mode", default=None, type=click.Choice(["kl_anchor", "renormalize", "unconstrained"]))
@click.option("--trace", "trace_path", default=None, type=click.Path(), help="z-opt trace JSON lines")
@click.option("--seed", default=0, show_default=True)
def inpaint(
    bundle_path,
    image_path,
    out,
    rect,
    region_json,
    resample,
    zopt_iters,
    zopt_lr,
    kl_weight,
    mode,
    trace_path,
    seed,
):
    """Inpaint an occluded region with a trained bundle."""
    bundle = load_bundle(_require_file(bundle_path, "bundle"))
    img = load_micrograph(_require_file(image_path, "image"))
    out_path = Path(out)

    def write(result, path):
        save_png(result.image, path)
        meta = {
            "v": 1,
            "method": result.method,
            "seed_digest": result.seed_digest,
            "region": result.region.to_json(),
            "resample_warning": result.resample_warning,
        }
        Path(path).with_suffix(".json").write_text(json.dumps(meta, sort_keys=True))

    try:
        if bundle.method == METHOD_GOPT:
            if resample > 0:
                out_path.mkdir(parents=True, exist_ok=True)
                rng = torch.Generator().manual_seed(seed)
                for i in range(resample):
                    res = evaluate_gopt(bundle, img, resample=True, rng=rng)
                    write(res, out_path / f"inpaint-{i + 1:03d}.png")
                click.echo(f"wrote {resample} resampled inpaints to {out}")
            else:
                res = evaluate_gopt(bundle, img)
                write(res, out_path)
                click.echo(f"wrote {out}")
        else:
            region = _load_region(region_json, rect)
            if region is None:
                raise click.UsageError("zopt bundles need --rect or --region to inpaint")
            overrides = {
                k: v
                for k, v in {
                    "iterations": zopt_iters,
                    "seed_lr": zopt_lr,
                    "kl_weight": kl_weight,
                    "mode": mode,
                }.items()
                if v is not None
            }
            cfg = ZOptConfig.from_dict(overrides)
            z, trace = optimize_seed(bundle, img, region, cfg, rng=seed)
            res = evaluate_zopt(bundle, z, img, region)
            write(res, out_path)
            if trace_path:
                trace.to_jsonl(trace_path)
            click.echo(f"wrote {out} (best boundary MSE {trace.records[-1].best_mse:.5f})")
    except ValueError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--original", required=True, type=click.Path())
@click.option("--inpainted", required=True, type=click.Path())
@click.option("--rect", default=None, help="region as x,y,w,h")
@click.option("--region", "region_json", default=None, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--baselines", is_flag=True, help="add zeros / uniform noise / random-seed fills")
@click.option("--bundle", "bundle_path", default=None, type=click.Path())
@click.option("--vf-samples", default=128, show_default=True)
@click.option("--seed", default=0, show_default=True)
def validate(
    original, inpainted, rect, region_json, out_dir, baselines, bundle_path, vf_samples, seed
):
    """Contiguity and volume-fraction reports for an inpainted image."""
    orig = load_micrograph(_require_file(original, "original image"))
    inp = load_micrograph(_require_file(inpainted, "inpainted image"))
    region = _load_region(region_json, rect)
    if region is None:
        raise click.UsageError("validation needs --rect or --region")
    try:
        validate_region(region, orig)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    if inp.data.shape != orig.data.shape:
        raise click.ClickException("original and inpainted images differ in size")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .results import InpaintResult

    result = InpaintResult(image=inp, region=region, method="provided")
    rng = torch.Generator().manual_seed(seed)

    panels = {"inpainted": result, "gt": gt_self_test(orig, region)}
    if baselines:
        panels[FILL_ZEROS] = baseline_fill(orig, region, FILL_ZEROS)
        panels[FILL_UNIFORM] = baseline_fill(orig, region, FILL_UNIFORM, rng=rng)
        if bundle_path is not None:
            bundle = load_bundle(_require_file(bundle_path, "bundle"))
            panels[FILL_RANDOM_SEED] = baseline_fill(
                orig, region, FILL_RANDOM_SEED, rng=rng, bundle=bundle
            )

    summary = {"v": 1, "region": region.to_json(), "contiguity": {}}
    for name, res in panels.items():
        rep = border_contiguity(res, orig, subsample_seed=seed)
        rep.to_json(out / f"contiguity-{name}.json")
        summary["contiguity"][name] = {
            "ks_statistic": rep.ks_statistic,
            "p_value": rep.p_value,
            "log10_p": rep.log10_p,
        }
        click.echo(f"{name}: p = {rep.p_value:.3g} (log10 {rep.log10_p:.2f})")

    if orig.kind == NPHASE:
        summary["inpaint_region_vf"] = _region_vf(inp, region)
        if bundle_path is not None:
            bundle = load_bundle(_require_file(bundle_path, "bundle"))
            report = vf_distributions(orig, region, bundle, n_samples=vf_samples, rng_seed=seed)
            report.to_json(out / "vf-report.json")
            report.to_csv(out / "vf-report.csv")
            summary["vf_p_random"] = report.p_random
            summary["vf_p_fixed"] = report.p_fixed
            click.echo(f"volume-fraction p-values vs ground truth: {report.p_random}")
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    click.echo(f"wrote reports to {out_dir}")


def _region_vf(img, region):
    occl = region.occlusion_mask(img.height, img.width)
    labels = img.labels()[occl]
    counts = np.bincount(labels, minlength=img.n_phases).astype(float)
    return (counts / counts.sum()).tolist()


@main.command()
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--seed-size", default=16, show_default=True)
@click.option("--max-block", default=5, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="CSV output path")
@click.option("--include-zero", is_flag=True, help="also emit the trivial zero-block row")
@click.option("--seed", default=0, show_default=True)
def probe(bundle_path, seed_size, max_block, out, include_zero, seed):
    """Map how far central-seed changes propagate into the generated image."""
    bundle = load_bundle(_require_file(bundle_path, "bundle"))
    rng = torch.Generator().manual_seed(seed)
    blocks = list(range(0 if include_zero else 1, max_block + 1))
    try:
        profiles = seed_propagation_probe(
            bundle, seed_size, max_block, rng=rng, block_sizes=blocks
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))
    probe_to_csv(profiles, out)
    for prof in profiles:
        click.echo(f"block {prof.block}: affected width {prof.affected_width()} px")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--bind", default=None, help="host:port (default env MICROINPAINT_BIND or 127.0.0.1:8008)")
@click.option("--data-dir", default=None, type=click.Path(), help="session store (default env MICROINPAINT_DATA_DIR)")
def serve(bind, data_dir):
    """Run the HTTP service for the browser client and scripted use."""
    import os

    import uvicorn

    from .service import create_app

    bind = bind or os.environ.get("MICROINPAINT_BIND", "127.0.0.1:8008")
    host, _, port_s = bind.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_s)
    except ValueError:
        raise click.UsageError(f"--bind expects host:port, got {bind!r}")
    probe_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe_sock.bind((host, port))
    except OSError as exc:
        raise click.ClickException(f"cannot bind {bind}: {exc}")
    finally:
        probe_sock.close()
    app = create_app(data_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
