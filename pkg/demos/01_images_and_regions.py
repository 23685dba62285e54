"""Images, regions and patch sampling
====================================

A walk through the data layer: synthetic textures, kind detection, occlusion
regions with their derived windows, and the patch sampler that feeds training.
"""

from pathlib import Path

import torch

from microinpaint import (
    PatchSet,
    PolygonRegion,
    Rect,
    RectRegion,
    annulus_mask,
    load_micrograph,
    save_png,
    volume_fractions,
)
from microinpaint.synth import synth_texture

out = Path("demo_out")
out.mkdir(exist_ok=True)

# A 3-phase blob texture with controlled volume fractions stands in for a
# segmented micrograph.
img = synth_texture(size=256, volume_fractions=(0.3, 0.3, 0.4), blob_size=5.0, seed=0)
print(f"texture: {img.width}x{img.height}, kind={img.kind}, phases={img.n_phases}")
print(f"volume fractions: {volume_fractions(img.data).round(3)}")
save_png(img, out / "texture.png")

# Round trip through PNG: kind detection recovers the phases from the file.
reloaded = load_micrograph(out / "texture.png")
print(f"reloaded kind={reloaded.kind}, phase values={reloaded.phase_values}")

# A rectangular occlusion; extents must be multiples of 8.  The window adds
# the 16-pixel annulus on every side.
region = RectRegion(Rect(96, 96, 64, 64))
print(f"region {region.rect} -> window {region.window}")

mask = annulus_mask(region)
print(f"annulus pixels: {mask.sum()} of {mask.size} window pixels")

# Polygons describe irregular defects; every known window pixel becomes a
# matching target.
poly = PolygonRegion(((60, 60), (120, 70), (100, 130), (55, 110)))
print(f"polygon bbox {poly.bbox}, window {poly.window}")

# Training patches are sampled strictly outside the region window.
patches = PatchSet(img, exclusion=region, patch_size=64)
rng = torch.Generator().manual_seed(0)
batch = patches.sample(8, rng)
print(f"sampled batch {tuple(batch.shape)} from {patches.n_positions} valid positions")
