"""Fundamental-model decomposition of wholesale electricity auction curves."""
from .step_curve import Direction, Equilibrium, PriceGrid, StepCurve, intersect
from .decomposition import DecompositionParams, DecompositionResult, INELASTIC_LIMIT, decompose
from .data_io import LoadRecord, MarketSnapshot

__version__ = "0.1.0"

__all__ = [
    "Direction", "Equilibrium", "PriceGrid", "StepCurve", "intersect",
    "DecompositionParams", "DecompositionResult", "INELASTIC_LIMIT", "decompose",
    "LoadRecord", "MarketSnapshot",
]
