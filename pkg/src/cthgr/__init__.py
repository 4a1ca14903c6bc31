"""Vision-transformer hand-gesture recognition from HD-sEMG, with baselines and evaluation tooling."""

from .model import CTHGR, ModelConfig, count_parameters, preset

__version__ = "0.1.0"

__all__ = ["CTHGR", "ModelConfig", "count_parameters", "preset", "__version__"]
