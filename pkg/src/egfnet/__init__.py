"""Edge-guided RGB-thermal scene parsing on a small numpy autodiff engine."""

from .backbone import EncoderConfig
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .estimator import EGFNetSegmenter, PriorEdgeTransformer
from .fusion import EGFNet, PredictionSet, Variant, egfnet_forward
from .metrics import ConfusionMatrix, per_class, report, summary
from .rng import Pcg32, Rng
from .tensor import GradTape, Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConfusionMatrix", "EGFNet", "EGFNetSegmenter", "EncoderConfig", "ExperimentConfig",
    "GradTape", "Pcg32", "PredictionSet", "PriorEdgeTransformer", "Rng", "Tensor", "Variant",
    "backward", "egfnet_forward", "load_config", "parse_config", "per_class", "report", "summary",
]
