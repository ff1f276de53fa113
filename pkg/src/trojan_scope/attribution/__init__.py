"""Counterfactual attributions over penultimate neurons, concentration measures and the robust-training simulator."""
from .attribute import (METHODS, AttributionMatrix, attribute, attribute_z, counterfactual_matrix,
                        ghost_rank_correlation)
from .concentration import ConcentrationReport, concentration, gini, top_m_mass
from .theorem import COLUMNS, SimResult, SimTrajectory, TheoremSimConfig, delta_stats, g_prime, sgd_concentration_sim

__all__ = [
    "COLUMNS", "METHODS", "AttributionMatrix", "ConcentrationReport", "SimResult", "SimTrajectory",
    "TheoremSimConfig", "attribute", "attribute_z", "concentration", "counterfactual_matrix", "delta_stats",
    "g_prime", "ghost_rank_correlation", "gini", "sgd_concentration_sim", "top_m_mass",
]
