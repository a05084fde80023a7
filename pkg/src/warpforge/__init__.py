"""warpforge: a 2-D deformable registration laboratory.

Synthetic diffeomorphic deformations, label-map training imagery, a fixed
local-feature extractor, an instance-wise variational registration engine,
and the metrics to evaluate all of it.
"""

from .features import FilterBank, default_bank, extract, load_bank, save_bank
from .grid import (
    bilinear_sample,
    compose,
    downsample_image,
    identity_field,
    jacobian_det,
    resample_field,
    warp,
)
from .metrics import (
    MetricsReport,
    correlation_coefficient,
    evaluate_pair,
    folding_percent,
    mutual_information,
)
from .registration import (
    NumericalAbort,
    RegConfig,
    RegResult,
    loss_gradient,
    objective,
    reg_loss,
    register,
    similarity_mse,
    smoothness_loss,
)
from .estimator import DeformableRegistration
from .svf import SvfParams, integrate_svf, random_diffeo, sample_svf
from .synth import (
    LabelMapParams,
    PairSample,
    colorize_monotonic,
    labelmap_to_image,
    make_multimodal_pair,
    make_pair,
    recolor_random,
    synth_labelmap,
)

__version__ = "0.1.0"
