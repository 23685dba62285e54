import time
import numpy as np
import torch
from microinpaint import (Rect, RectRegion, TrainingConfig, baseline_fill,
    border_contiguity, evaluate_gopt, gt_self_test, train_gopt, vf_distributions)
from microinpaint.synth import synth_texture

img = synth_texture(size=256, volume_fractions=(0.3,0.3,0.4), blob_size=5.0, seed=11)
region = RectRegion(Rect(96, 96, 64, 64))

def cdf_at(vals, pts=(0.0, 0.25, 1.0)):
    vals = np.asarray(vals)
    return {p: round(float((vals <= p + 1e-9).mean()), 3) for p in pts}

for c, cpg, iters in ((30, 5, 2000), (100, 5, 2000)):
    cfg = TrainingConfig(i_max=iters, content_coeff=c, critic_per_g=cpg,
                         g_widths=(128,64,32), d_widths=(16,32,64,128), snapshot_every=1000)
    steps = []
    t0 = time.time()
    b = train_gopt(img, region, cfg, rng=0, observer=lambda s: steps.append(s))
    cls = [s.l_cl for s in steps[:: max(1, iters//5)]] + [steps[-1].l_cl]
    print(f"c={c} cpg={cpg}: {time.time()-t0:.0f}s, l_cl {['%.4f'%v for v in cls]}", flush=True)
    rng = torch.Generator().manual_seed(1)
    reps = {}
    for name, res in (("gt", gt_self_test(img, region)),
                      ("gopt", evaluate_gopt(b, img)),
                      ("rand", baseline_fill(img, region, "random_seed", rng=rng, bundle=b)),
                      ("zeros", baseline_fill(img, region, "zeros"))):
        rep = border_contiguity(res, img)
        reps[name] = rep
        print(f"  {name:6s} D={rep.ks_statistic:.3f} log10p={rep.log10_p:8.2f} borderCDF={cdf_at(rep.border_sq_diffs)}", flush=True)
    print(f"  refCDF={cdf_at(reps['gt'].reference_sq_diffs)}")
    ok = reps['gopt'].log10_p > reps['rand'].log10_p > reps['zeros'].log10_p and reps['gt'].log10_p >= reps['gopt'].log10_p
    vf = vf_distributions(img, region, b, n_samples=128, rng_seed=2)
    print(f"  ORDER {'PASS' if ok else 'FAIL'}; vf p_random={['%.3g'%p for p in vf.p_random]}")
    print(f"  gt std={vf.gt.std(axis=0).round(3)} rnd std={vf.random_seed.std(axis=0).round(3)} rnd mean={vf.random_seed.mean(axis=0).round(3)} gt mean={vf.gt.mean(axis=0).round(3)}", flush=True)
