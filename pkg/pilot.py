"""Desk-scale calibration run for the acceptance criteria (not part of the suite)."""
import json
import sys
import time

import numpy as np
import torch

from microinpaint import (
    Rect, RectRegion, TrainingConfig, ZOptConfig,
    baseline_fill, border_contiguity, evaluate_gopt, gt_self_test,
    optimize_seed, train_gopt, train_wgan, vf_distributions,
)
from microinpaint.synth import synth_texture

CFG = TrainingConfig(
    i_max=5000,
    g_widths=(128, 64, 32),
    d_widths=(16, 32, 64, 128),
    snapshot_every=1000,
)

def log(*a):
    print(f"[{time.strftime('%H:%M:%S')}]", *a, flush=True)

img = synth_texture(size=256, volume_fractions=(0.3, 0.3, 0.4), blob_size=8.0, seed=11)
region = RectRegion(Rect(96, 96, 64, 64))

# --- G-opt -----------------------------------------------------------------
t0 = time.time()
steps = []
bundle = train_gopt(img, region, CFG, rng=0, observer=lambda s: steps.append(s))
log(f"gopt 5k done in {time.time()-t0:.0f}s; l_cl {steps[0].l_cl:.4f} -> {steps[-1].l_cl:.4f}")

res = evaluate_gopt(bundle, img)
rng = torch.Generator().manual_seed(1)
fills = {
    "gt": gt_self_test(img, region),
    "gopt": res,
    "random_seed": baseline_fill(img, region, "random_seed", rng=rng, bundle=bundle),
    "zeros": baseline_fill(img, region, "zeros"),
}
logs = {}
for name, r in fills.items():
    rep = border_contiguity(r, img)
    logs[name] = rep.log10_p
    log(f"contiguity {name}: p={rep.p_value:.3g} log10={rep.log10_p:.2f} D={rep.ks_statistic:.3f}")
ok_order = logs["gopt"] > logs["random_seed"] > logs["zeros"] and logs["gt"] >= logs["gopt"]
log("ORDERING", "PASS" if ok_order else "FAIL")

# --- VF --------------------------------------------------------------------
t0 = time.time()
vf = vf_distributions(img, region, bundle, n_samples=128, rng_seed=2)
log(f"vf report in {time.time()-t0:.0f}s; p_random={['%.3g'%p for p in vf.p_random]}")
log(f"   gt mean={vf.gt.mean(axis=0).round(3)} std={vf.gt.std(axis=0).round(3)}")
log(f"   rnd mean={vf.random_seed.mean(axis=0).round(3)} std={vf.random_seed.std(axis=0).round(3)}")
fixed_mean = vf.fixed_seed.mean(axis=0)
inside = np.all((fixed_mean >= vf.random_seed.min(axis=0)) & (fixed_mean <= vf.random_seed.max(axis=0)))
log(f"   fixed mean {fixed_mean.round(3)} within random min/max: {inside}")
log("VF", "PASS" if all(p > 0.01 for p in vf.p_random) and inside else "FAIL")

# --- z-opt -----------------------------------------------------------------
t0 = time.time()
wgan = train_wgan(img, CFG, rng=0, region=region)
log(f"wgan 5k done in {time.time()-t0:.0f}s")
zcfg = ZOptConfig(iterations=2000, record_every=100)
t0 = time.time()
seed, trace = optimize_seed(wgan, img, region, zcfg, rng=3)
mse0, best = trace.records[0].mse, trace.records[-1].best_mse
v = seed.values
log(f"zopt 2k in {time.time()-t0:.0f}s: mse {mse0:.4f} -> best {best:.4f} (ratio {best/mse0:.2f})")
log(f"   moments mu={float(v.mean()):.3f} sigma={float(v.std(unbiased=False)):.3f}")
ok_z = best <= 0.5 * mse0 and abs(float(v.mean())) < 0.2 and abs(float(v.std(unbiased=False)) - 1) < 0.2
log("ZOPT", "PASS" if ok_z else "FAIL")

# --- renormalisation failure mode -------------------------------------------
hits = 0
for k in range(3):
    rcfg = ZOptConfig(iterations=1500, mode="renormalize", record_every=250)
    rs, rt = optimize_seed(wgan, img, region, rcfg, rng=10 + k)
    rv = rs.values
    kurt = float(((rv - rv.mean()) ** 4).mean() / rv.var(unbiased=False) ** 2) - 3.0
    log(f"renorm run {k}: mu={float(rv.mean()):.2e} sigma={float(rv.std(unbiased=False)):.6f} kurtosis={kurt:.3f} mse {rt.records[0].mse:.4f}->{rt.records[-1].best_mse:.4f}")
    if abs(kurt) > 0.5:
        hits += 1
log(f"RENORM non-normality hits: {hits}/3")
log("ALL DONE")
