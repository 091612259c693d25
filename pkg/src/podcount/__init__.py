"""podcount: point-based counting of dense small objects.

A numpy library that predicts dot locations plus confidences for every
object in an image, trains with a Hungarian one-to-one matching loss, and
scores itself with the full counting-metric battery (MAE, RMSE, rMAE, Acc,
rRMSE, R^2, Pearson r).
"""

from .backbone import Backbone, BackboneConfig, FeatureMap, patch_split, variant_config
from .data import (AnnotatedImage, AnnotationError, SplitSpec, augment,
                   load_annotated_image, load_dataset, parse_annotations,
                   save_dataset, split_dataset, synth_generate)
from .evaluator import MetricsReport, evaluate_counts, infer, metrics, render_overlay
from .gradcheck import GradientCheckError, gradient_check
from .head import Proposal, ProposalHead, ProposalSet, generate_proposals
from .layers import Conv2d, LayerNorm, Linear, Module, Parameter
from .loss import LossConfig, LossReport, cls_loss, loc_loss, total_loss
from .matcher import (MatchConfig, MatchInfeasibleError, MatchResult,
                      cost_matrix, hungarian, match)
from .model import PointProposalNetwork
from .neck import FeatureFusion, fuse
from .optim import AdamState, adam_step
from .tensor import (ShapeError, Tensor, conv2d, layer_norm, matmul,
                     nearest_upsample2x, no_grad, softmax, window_partition,
                     window_reverse)
from .trainer import NumericFailure, TrainConfig, TrainHistory, fit, load_model, save_model, train_step

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AnnotatedImage", "AnnotationError", "Backbone",
    "BackboneConfig", "Conv2d", "FeatureFusion", "FeatureMap",
    "GradientCheckError", "LayerNorm", "Linear", "LossConfig", "LossReport",
    "MatchConfig", "MatchInfeasibleError", "MatchResult", "MetricsReport",
    "Module", "NumericFailure", "Parameter", "PointProposalNetwork",
    "Proposal", "ProposalHead", "ProposalSet", "ShapeError", "SplitSpec",
    "Tensor", "TrainConfig", "TrainHistory", "adam_step", "augment",
    "cls_loss", "conv2d", "cost_matrix", "evaluate_counts", "fit", "fuse",
    "generate_proposals", "gradient_check", "hungarian", "infer",
    "layer_norm", "load_annotated_image", "load_dataset", "load_model",
    "loc_loss", "match", "matmul", "metrics", "nearest_upsample2x", "no_grad",
    "parse_annotations", "patch_split", "render_overlay", "save_dataset",
    "save_model", "softmax", "split_dataset", "synth_generate", "total_loss",
    "train_step", "variant_config", "window_partition", "window_reverse",
]
