from .architectures import ARCHITECTURES, build_network
from .training import (DivergenceError, ModelRecord, QualityGateError, TrainHyper, evaluate, fit, train_model)
from .zoo import (ModelLoadError, ZooConfig, ZooGenerationError, assign_roles, draw_plan, generate_zoo, load_manifest,
                  load_model, probe_set, zoo_data)

__all__ = [
    "ARCHITECTURES", "DivergenceError", "ModelLoadError", "ModelRecord", "QualityGateError", "TrainHyper",
    "ZooConfig", "ZooGenerationError", "assign_roles", "build_network", "draw_plan", "evaluate", "fit",
    "generate_zoo", "load_manifest", "load_model", "probe_set", "train_model", "zoo_data",
]
