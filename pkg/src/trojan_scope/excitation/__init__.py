"""Neuron ranking, cumulative excitation and class-wise accuracy curves."""
from .curves import (DEFAULT_STEPS, CurveSet, DegenerateModelError, ExcitationSchedule, build_curve_tensor,
                     curve_areas, excitation_value, excite_and_score, rank_neurons, steepest_curve_auc)

__all__ = [
    "DEFAULT_STEPS", "CurveSet", "DegenerateModelError", "ExcitationSchedule", "build_curve_tensor",
    "curve_areas", "excitation_value", "excite_and_score", "rank_neurons", "steepest_curve_auc",
]
