"""Inpainting-residual deepfake detection at desk scale.

A masked-image-modeling inpainter trained on real images only, residual
generation that exposes low-level artifacts, a dual-branch transformer
classifier over paired original/residual blocks, and a cross-domain
evaluation harness.
"""

from .blocks import (BlockGrid, BlockMask, ImageSample, Label, Split, assemble,
                     block_positions, divide, make_mask)
from .detector import (DetectorConfig, DualBranchModel, MergeMode, Prediction,
                       cls_loss, forward, predict, score_samples, train_detector)
from .errors import (ConfigError, InputError, MissingPrerequisiteError,
                     NumericFailureError, UndefinedMetricError)
from .evaluation import (CheckpointRef, EvalReport, ScoreItem, ScoreSet,
                         SelectionMode, auc, cross_domain_eval, ema_smooth,
                         select_model, validation_curve)
from .inpainter import (InpainterConfig, InpainterModel, inpaint, load_inpainter,
                        reconstruct_full, rep_loss, save_inpainter, train_inpainter)
from .manifest import DatasetManifest, batch_iter, load_manifest, save_manifest
from .residual import (AmplificationConfig, BlockSelection, ResidualGenerator,
                       ResidualKind, generate_full_residual, generate_training_input,
                       highpass_residual, residual_block, select_blocks)
from .schedule import TrainSchedule
from .synthetic import (ArtifactKind, Region, SyntheticConfig, SyntheticPair,
                        TextureParams, generate_synthetic_pair)

__version__ = "0.1.0"
