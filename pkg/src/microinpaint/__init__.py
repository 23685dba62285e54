"""Adversarial inpainting of homogeneous micrographs.

Two methods are provided: generator optimisation, which trains a generator
against one occluded region with a boundary content loss, and seed
optimisation, which trains a plain adversarial generator once and then
searches its latent space for a boundary match.  A validation suite compares
border contiguity and volume-fraction statistics against the source image.
"""

from .analysis import (
    ContiguityReport,
    ProbeProfile,
    VfReport,
    baseline_fill,
    border_contiguity,
    gt_self_test,
    ks_log10_p,
    ks_two_sample,
    neighbour_sq_diffs,
    pixel_histogram,
    probe_to_csv,
    seed_propagation_probe,
    vf_distributions,
    volume_fractions,
)
from .bundles import ModelBundle, bundle_digest, load_bundle, save_bundle
from .config import TrainingConfig, ZOptConfig
from .images import (
    COLOUR,
    GRAYSCALE,
    NPHASE,
    Micrograph,
    PatchSet,
    PolygonRegion,
    Rect,
    RectRegion,
    Region,
    annulus_mask,
    decode_argmax,
    encode_onehot,
    load_micrograph,
    micrograph_from_array,
    region_from_json,
    rgb_to_gray,
    sample_patches,
    save_png,
    validate_region,
)
from .networks import (
    CriticNet,
    GeneratorNet,
    SeedTensor,
    changeable_center_size,
    forward_d,
    forward_g,
    output_size_for,
    randomize_center,
    seed_size_for,
)
from .results import InpaintResult, generator_window, paste_window
from .seedopt import (
    ZOptTrace,
    evaluate_zopt,
    kl_to_standard_normal,
    optimize_seed,
    renormalize_seed,
)
from .synth import synth_texture
from .training import (
    JsonlWriter,
    TrainStep,
    content_loss,
    evaluate_gopt,
    gradient_penalty,
    train_gopt,
    train_wgan,
)

__version__ = "0.1.0"
