from .cache import EigenCache
from .config import ExperimentConfig, config_from_dict, load_config
from .envelope import METRICS, ResultEnvelope, Row, compare
from .experiments import REGISTRY, run

__all__ = ["EigenCache", "ExperimentConfig", "config_from_dict", "load_config", "METRICS", "ResultEnvelope", "Row",
           "compare", "REGISTRY", "run"]
