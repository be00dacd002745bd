from ..data.features import FeatureSpace
from .base import Model
from .config import (KIND_OPTIONS, KINDS, TOWER_DEFAULT, TOWER_SWEEP, ConfigError, ModelConfig,
                     make_config)
from .counts import expected_param_count
from .kinds import MODEL_CLASSES
from .layers import (Routing, adasparse_factors, adl_route, adl_update, binarize, gate_nu,
                     hamur_adapter, hamur_hyper, meta_generate, moe_mix, star_combine)


def build_model(config: ModelConfig, feature_space: FeatureSpace, n_scenarios: int, seed: int = 0) -> Model:
    """Instantiate the architecture named by ``config.kind`` with deterministic parameters."""
    if isinstance(config, dict):
        config = ModelConfig.from_dict(config)
    config.validate()
    return MODEL_CLASSES[config.kind](config, feature_space, n_scenarios, seed)


__all__ = [
    "Model", "KIND_OPTIONS", "KINDS", "TOWER_DEFAULT", "TOWER_SWEEP", "ConfigError", "ModelConfig",
    "make_config", "expected_param_count", "MODEL_CLASSES", "build_model", "Routing",
    "adasparse_factors", "adl_route", "adl_update", "binarize", "gate_nu", "hamur_adapter",
    "hamur_hyper", "meta_generate", "moe_mix", "star_combine",
]
