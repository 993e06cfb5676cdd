"""Bermudan option pricing with static-hedge regress-later networks, LSM and COS,
plus exposure (EE / PFE) profiles for counterparty credit risk."""

__version__ = "0.1.0"

from .bermudan_engine import (BermudanSpec, RlnnModel, ValueSurface, continuation_value, fit_rlnn,
                              price_rlnn, value_at, value_surface)
from .cos import CosConfig, price_cos, value_at_state
from .hedge_net import HedgeLayer, TrainingConfig, fit_layer
from .lsm import fit_lsm
from .market_model import MarketParams, PathGrid, RealWorldParams, black_scholes, simulate_gbm

__all__ = [
    "BermudanSpec", "CosConfig", "HedgeLayer", "MarketParams", "PathGrid", "RealWorldParams",
    "RlnnModel", "TrainingConfig", "ValueSurface", "black_scholes", "continuation_value",
    "fit_layer", "fit_lsm", "fit_rlnn", "price_cos", "price_rlnn", "simulate_gbm", "value_at",
    "value_at_state", "value_surface",
]
