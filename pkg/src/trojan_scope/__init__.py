"""Counterfactual-attribution Trojan detection at desk scale."""
__version__ = "0.1.0"
