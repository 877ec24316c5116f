"""Two-party split learning with reconstruction-attack defenses."""

from .config import RunConfig, load_config
from .dcor import DcorResult, dcor, log_dcor_loss
from .defenses import DefenseConfig
from .evaluation import MetricsRecord, eval_auc
from .protocol import run_training

__version__ = "0.1.0"

__all__ = ["DcorResult", "DefenseConfig", "MetricsRecord", "RunConfig", "dcor", "eval_auc",
           "load_config", "log_dcor_loss", "run_training"]
