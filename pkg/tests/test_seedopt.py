import math

import numpy as np
import pytest
import torch

from microinpaint import (
    PolygonRegion,
    Rect,
    RectRegion,
    SeedTensor,
    ZOptConfig,
    evaluate_zopt,
    kl_to_standard_normal,
    optimize_seed,
    renormalize_seed,
    train_wgan,
)
from microinpaint.results import generator_window
from microinpaint.seedopt import seed_extents_for_window
from conftest import TINY_CFG, torch_rng

ZCFG = ZOptConfig(iterations=30, seed_lr=5e-2, record_every=10)


@pytest.fixture(scope="module")
def wgan_bundle(texture_192):
    return train_wgan(texture_192, TINY_CFG, rng=0)


# --- KL and renormalisation -----------------------------------------------------


def test_kl_zero_for_standard_moments():
    t = torch.tensor([1.0, -1.0, 1.0, -1.0])  # mean 0, population std 1
    assert kl_to_standard_normal(t) == pytest.approx(0.0, abs=1e-12)


def test_kl_closed_form_at_shifted_mean():
    t = torch.tensor([2.0, 0.0, 2.0, 0.0])  # mean 1, std 1
    assert kl_to_standard_normal(t) == pytest.approx(0.5, abs=1e-12)


def test_kl_small_for_large_normal_seed():
    worst = 0.0
    for k in range(100):
        z = torch.randn(100 * 14 * 14, generator=torch_rng(k))
        worst = max(worst, kl_to_standard_normal(z))
    assert worst < 0.01


def test_kl_rejects_degenerate_seed():
    with pytest.raises(ValueError):
        kl_to_standard_normal(torch.ones(50))
    with pytest.raises(ValueError):
        kl_to_standard_normal(torch.ones(1))


def test_renormalize_restores_moments():
    z = torch.randn(4000, generator=torch_rng(1)) + 5.0
    out = renormalize_seed(z)
    assert float(out.mean()) == pytest.approx(0.0, abs=1e-6)
    assert float(out.std(unbiased=False)) == pytest.approx(1.0, abs=1e-6)


def test_renormalize_near_identity_on_standard_seed():
    z = torch.randn(5000, generator=torch_rng(2))
    z = renormalize_seed(z)  # exactly standard moments now
    again = renormalize_seed(z)
    assert torch.allclose(z, again, atol=1e-6)


def test_renormalize_keeps_bimodal_seed_bimodal():
    # moments come back to (0, 1) but the distribution stays two-peaked
    signs = torch.where(torch.rand(10_000, generator=torch_rng(3)) < 0.5, -1.0, 1.0)
    z = signs + 0.05 * torch.randn(10_000, generator=torch_rng(4))
    out = renormalize_seed(z)
    assert float(out.mean()) == pytest.approx(0.0, abs=1e-6)
    assert float(out.std(unbiased=False)) == pytest.approx(1.0, abs=1e-6)
    # excess kurtosis of a +-1 mixture is about -2: decidedly non-normal
    kurt = float((out**4).mean()) - 3.0
    assert kurt < -1.0


def test_renormalize_rejects_constant():
    with pytest.raises(ValueError):
        renormalize_seed(torch.full((100,), 3.0))


# --- seed optimisation ------------------------------------------------------------


def test_optimize_reduces_boundary_mse(wgan_bundle, texture_192):
    region = RectRegion(Rect(64, 64, 32, 32))
    seed, trace = optimize_seed(wgan_bundle, texture_192, region, ZCFG, rng=0)
    assert trace.records[0].iteration == 0
    assert trace.records[-1].best_mse <= trace.records[0].mse
    assert not trace.diverged


def test_best_mse_is_monotone_over_checkpoints(wgan_bundle, texture_192):
    region = RectRegion(Rect(64, 64, 32, 32))
    _, trace = optimize_seed(wgan_bundle, texture_192, region, ZCFG, rng=1)
    bests = [r.best_mse for r in trace.records]
    assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(bests, bests[1:]))


def test_generator_frozen_during_optimisation(wgan_bundle, texture_192):
    region = RectRegion(Rect(64, 64, 32, 32))
    before = wgan_bundle.parameter_digest()
    optimize_seed(wgan_bundle, texture_192, region, ZCFG, rng=2)
    assert wgan_bundle.parameter_digest() == before
    assert all(p.requires_grad for p in wgan_bundle.generator.parameters())


def test_kl_anchor_zero_weight_equals_unconstrained(wgan_bundle, texture_192):
    region = RectRegion(Rect(64, 64, 32, 32))
    cfg_a = ZCFG.updated(mode="kl_anchor", kl_weight=0.0)
    cfg_b = ZCFG.updated(mode="unconstrained")
    seed_a, trace_a = optimize_seed(wgan_bundle, texture_192, region, cfg_a, rng=3)
    seed_b, trace_b = optimize_seed(wgan_bundle, texture_192, region, cfg_b, rng=3)
    assert torch.equal(seed_a.values, seed_b.values)
    assert trace_a.records == trace_b.records


def test_renormalize_mode_keeps_exact_moments(wgan_bundle, texture_192):
    region = RectRegion(Rect(64, 64, 32, 32))
    cfg = ZCFG.updated(mode="renormalize")
    seed, trace = optimize_seed(wgan_bundle, texture_192, region, cfg, rng=4)
    v = seed.values
    assert float(v.mean()) == pytest.approx(0.0, abs=1e-6)
    assert float(v.std(unbiased=False)) == pytest.approx(1.0, abs=1e-6)


def test_polygon_region_optimisation(wgan_bundle, texture_192):
    poly = PolygonRegion(((70, 70), (100, 74), (88, 104), (66, 96)))
    seed, trace = optimize_seed(wgan_bundle, texture_192, poly, ZCFG.updated(iterations=10), rng=5)
    res = evaluate_zopt(wgan_bundle, seed, texture_192, poly)
    res.verify_against(texture_192)
    occl = poly.occlusion_mask(192, 192)
    assert not np.array_equal(res.image.data[occl], texture_192.data[occl])


def test_one_bundle_serves_two_regions(wgan_bundle, texture_192):
    cfg = ZCFG.updated(iterations=8)
    for region in (RectRegion(Rect(32, 32, 32, 32)), RectRegion(Rect(96, 96, 48, 32))):
        seed, _ = optimize_seed(wgan_bundle, texture_192, region, cfg, rng=6)
        evaluate_zopt(wgan_bundle, seed, texture_192, region).verify_against(texture_192)


def test_two_optimised_seeds_differ(wgan_bundle, texture_192):
    region = RectRegion(Rect(64, 64, 32, 32))
    cfg = ZCFG.updated(iterations=8)
    s1, _ = optimize_seed(wgan_bundle, texture_192, region, cfg, rng=7)
    s2, _ = optimize_seed(wgan_bundle, texture_192, region, cfg, rng=8)
    r1 = evaluate_zopt(wgan_bundle, s1, texture_192, region)
    r2 = evaluate_zopt(wgan_bundle, s2, texture_192, region)
    occl = region.occlusion_mask(192, 192)
    assert not np.array_equal(r1.image.data[occl], r2.image.data[occl])


def test_evaluate_zopt_paste_and_determinism(wgan_bundle, texture_192):
    region = RectRegion(Rect(64, 64, 32, 32))
    win = generator_window(region, 192, 192)
    s_x, s_y = seed_extents_for_window(win)
    z = SeedTensor.sample(s_x, s_y, depth=wgan_bundle.generator.latent_depth, rng=torch_rng(9))
    a = evaluate_zopt(wgan_bundle, z, texture_192, region)
    b = evaluate_zopt(wgan_bundle, z, texture_192, region)
    assert np.array_equal(a.image.data, b.image.data)
    a.verify_against(texture_192)


def test_evaluate_zopt_rejects_wrong_seed_size(wgan_bundle, texture_192):
    region = RectRegion(Rect(64, 64, 32, 32))
    z = SeedTensor.sample(12, depth=wgan_bundle.generator.latent_depth, rng=torch_rng(10))
    with pytest.raises(ValueError, match="window"):
        evaluate_zopt(wgan_bundle, z, texture_192, region)


def test_trace_jsonl_round_trip(tmp_path, wgan_bundle, texture_192):
    import json

    region = RectRegion(Rect(64, 64, 32, 32))
    _, trace = optimize_seed(wgan_bundle, texture_192, region, ZCFG.updated(iterations=5), rng=11)
    path = tmp_path / "trace.jsonl"
    trace.to_jsonl(path)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert len(lines) == len(trace.records)
    assert lines[0]["iteration"] == 0
    assert {"mse", "kl", "seed_mean", "seed_std", "best_mse"} <= set(lines[0])
