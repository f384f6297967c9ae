"""Semi-supervised neural process for articulated-door reward prediction.

Subpackages: `diffcore` (autodiff substrate), `doorsim` (synthetic domain),
plus the context learner, action model, training loops, and evaluation
tools at the top level.
"""

from .nets import ModelConfig
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = ["ModelConfig", "Checkpoint", "TrainConfig", "load_checkpoint", "save_checkpoint", "train", "__version__"]
