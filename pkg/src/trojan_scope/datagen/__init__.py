from .dataset import Dataset, load_dataset, save_dataset
from .glyphs import generate_clean, render_glyph
from .idx import IdxFormatError, load_idx, write_idx
from .poison import PoisonedDataset, PoisonPlan, PoisonPlanError, poison_dataset, select_poison_indices
from .triggers import (FILTER_GAMMAS, TriggerError, TriggerSpec, apply_trigger, filter_lut, filter_trigger, jitter,
                       polygon_mask, random_polygon, random_trigger)

__all__ = [
    "FILTER_GAMMAS", "Dataset", "IdxFormatError", "PoisonPlan", "PoisonPlanError", "PoisonedDataset",
    "TriggerError", "TriggerSpec", "apply_trigger", "filter_lut", "filter_trigger", "generate_clean", "jitter",
    "load_dataset", "load_idx", "poison_dataset", "polygon_mask", "random_polygon", "random_trigger",
    "render_glyph", "save_dataset", "select_poison_indices", "write_idx",
]
