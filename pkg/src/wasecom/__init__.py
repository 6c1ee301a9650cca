"""Robust training for learned analog communication pipelines.

Core pieces: a numpy reverse-mode autodiff engine, small encoder/decoder
stacks, stochastic channel layers, adversarial and smoothed perturbations,
Wasserstein-ball dual objectives, an alternating two-phase trainer, and an
exact discrete optimal-transport oracle for verifying the duality theory.
"""

__version__ = "0.1.0"

from .channel import ChannelConfig, ChannelKind
from .data import (Dataset, generate_synthetic_images, generate_synthetic_text,
                   ingest_cifar10_binary, ingest_text_lines)
from .metrics import MetricsRecord, bleu, mse, psnr_db, psnr_from_mse, ssim
from .models import (ModelBundle, ModelDims, TaskKind, load_checkpoint,
                     save_checkpoint)
from .objectives import RobustnessConfig
from .ot import (DiscreteDistribution, dirac, dual_value, wasserstein_p,
                 worst_case_risk)
from .perturb import PerturbMethod, PerturbSpec
from .tensor import Tensor
from .training import (Mode, TrainConfig, TrainLog, evaluate, train, train_erm,
                       train_wasecom)

__all__ = [
    "ChannelConfig", "ChannelKind", "Dataset", "DiscreteDistribution",
    "MetricsRecord", "Mode", "ModelBundle", "ModelDims", "PerturbMethod",
    "PerturbSpec", "RobustnessConfig", "TaskKind", "Tensor", "TrainConfig",
    "TrainLog", "bleu", "dirac", "dual_value", "evaluate",
    "generate_synthetic_images", "generate_synthetic_text",
    "ingest_cifar10_binary", "ingest_text_lines", "load_checkpoint", "mse",
    "psnr_db", "psnr_from_mse", "save_checkpoint", "ssim", "train",
    "train_erm", "train_wasecom", "wasserstein_p", "worst_case_risk",
]
