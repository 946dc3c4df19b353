"""Two-stream CNNs with lattice cross-fusion on a small numpy autodiff core."""

from .errors import (
    ConfigurationError,
    ConsistencyError,
    CorruptionError,
    DimensionError,
    DivergenceError,
    FormatError,
    InputError,
    LatticeNetError,
    UsageError,
)
from .fusion import FusionOp, fuse, l_block, late_fuse, log_compress
from .models import (
    LayerSpec,
    ModelInstance,
    ModelSpec,
    build_backbone,
    build_mini_alexnet,
    build_mini_resnet,
    build_mini_vgg,
    count_params,
    count_trunk_params,
    propagate_shapes,
    to_multistream,
)
from .tensor import Tensor, backward, grad_check
from .train import RunMetrics, TrainConfig, compare_runs, evaluate_dataset, run_experiment

__version__ = "0.1.0"
