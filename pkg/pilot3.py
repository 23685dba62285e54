import time
import numpy as np
import torch
from microinpaint import (Rect, RectRegion, TrainingConfig, ZOptConfig, baseline_fill,
    border_contiguity, evaluate_gopt, gt_self_test, optimize_seed, train_gopt,
    train_wgan, vf_distributions, volume_fractions, ks_two_sample)
from microinpaint.networks import SeedTensor
from microinpaint.results import postprocess_output
from microinpaint.synth import synth_texture

def log(*a): print(f"[{time.strftime('%H:%M:%S')}]", *a, flush=True)

img = synth_texture(size=256, volume_fractions=(0.3,0.3,0.4), blob_size=4.0, seed=12)
region = RectRegion(Rect(24, 144, 64, 64))
CFG = TrainingConfig(i_max=5000, content_coeff=50.0, critic_per_g=5,
    g_widths=(128,64,32), d_widths=(32,64,128,256), snapshot_every=1000)

steps = []
t0 = time.time()
bundle = train_gopt(img, region, CFG, rng=0, observer=lambda s: steps.append(s))
log(f"gopt 5k in {time.time()-t0:.0f}s; l_cl {steps[0].l_cl:.4f} -> {steps[-1].l_cl:.4f}")

rng = torch.Generator().manual_seed(1)
reps = {}
for name, res in (("gt", gt_self_test(img, region)), ("gopt", evaluate_gopt(bundle, img)),
                  ("rand", baseline_fill(img, region, "random_seed", rng=rng, bundle=bundle)),
                  ("zeros", baseline_fill(img, region, "zeros"))):
    rep = border_contiguity(res, img)
    reps[name] = rep.log10_p
    log(f"contiguity {name}: D={rep.ks_statistic:.3f} log10p={rep.log10_p:8.2f}")
ok = reps["gopt"] > reps["rand"] > reps["zeros"] and reps["gt"] >= reps["gopt"]
log("ORDERING", "PASS" if ok else "FAIL")

vf = vf_distributions(img, region, bundle, n_samples=128, rng_seed=2)
log(f"vf (window-crop): p={['%.3g'%p for p in vf.p_random]}")
log(f"  gt mean={vf.gt.mean(axis=0).round(3)} std={vf.gt.std(axis=0).round(3)}")
log(f"  rnd mean={vf.random_seed.mean(axis=0).round(3)} std={vf.random_seed.std(axis=0).round(3)}")
fm = vf.fixed_seed.mean(axis=0)
log(f"  fixed mean={fm.round(3)} in [{vf.random_seed.min(axis=0).round(3)}, {vf.random_seed.max(axis=0).round(3)}]: "
    f"{bool(np.all((fm >= vf.random_seed.min(axis=0)) & (fm <= vf.random_seed.max(axis=0))))}")

# direct 64x64 generations (what the critic actually scored)
t_rng = torch.Generator().manual_seed(2)
direct = []
for _ in range(128):
    z = SeedTensor.sample(10, rng=t_rng, depth=CFG.latent_depth)
    with torch.no_grad():
        out = bundle.generator(z.values)
    direct.append(volume_fractions(postprocess_output(out, img.kind)))
direct = np.stack(direct)
p_direct = [ks_two_sample(vf.gt[:,k], direct[:,k])[1] for k in range(3)]
log(f"vf (direct 64): p={['%.3g'%p for p in p_direct]} mean={direct.mean(axis=0).round(3)} std={direct.std(axis=0).round(3)}")

t0 = time.time()
wgan = train_wgan(img, CFG, rng=0, region=region)
log(f"wgan 5k in {time.time()-t0:.0f}s")
seed, trace = optimize_seed(wgan, img, region, ZOptConfig(iterations=2000, record_every=100), rng=3)
v = seed.values
ratio = trace.records[-1].best_mse / trace.records[0].mse
log(f"zopt: ratio {ratio:.3f} mu {float(v.mean()):.3f} sigma {float(v.std(unbiased=False)):.3f} -> "
    f"{'PASS' if ratio <= 0.5 and abs(float(v.mean())) < 0.2 and abs(float(v.std(unbiased=False))-1) < 0.2 else 'FAIL'}")
hits = 0
for k in range(3):
    rs, rt = optimize_seed(wgan, img, region, ZOptConfig(iterations=1500, mode="renormalize", record_every=250), rng=10+k)
    rv = rs.values
    kurt = float(((rv-rv.mean())**4).mean() / rv.var(unbiased=False)**2) - 3.0
    log(f"renorm {k}: kurt={kurt:+.2f}")
    hits += abs(kurt) > 0.5
log(f"renorm hits {hits}/3; ALL DONE")
