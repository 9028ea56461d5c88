"""funduseg: edge-integrated optic disc/cup segmentation toolkit.

Builds Laplacian edge channels into one-hot segmentation targets, trains a
small from-scratch encoder-decoder with a class-weighted focal loss, and
scores predictions with dice and bidirectional Hausdorff distance.
"""

__version__ = "0.1.0"

from .backend import get_backend, set_backend
from .edges import convolve_laplacian, edges_for_class, extract_edges
from .losses import FocalConfig, focal_loss, focal_loss_grad
from .metrics import (
    MetricsRecord,
    aggregate,
    compute_cdr,
    dice_score,
    hausdorff,
    hausdorff_one_sided,
)
from .net import UNetConfig, adam_step, backward, forward, init_params, predict
from .pipeline import ExperimentConfig, compare, crossval, evaluate, preprocess, split, train
from .raster import (
    ChannelRole,
    ChannelStack,
    Image2D,
    LabelMapping,
    LabelMask,
    remap_labels,
    resize_image_bilinear,
    resize_mask_nearest,
)
from .synth import SynthConfig, generate_dataset, generate_sample
from .targets import build_edge_stack, decode_prediction, one_hot_regions
