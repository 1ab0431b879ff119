from .grid import Grid, GridCfg, make_grid
from .solver import DecayResult, FokkerPlanck, weight_on_grid

__all__ = ["Grid", "GridCfg", "make_grid", "FokkerPlanck", "DecayResult", "weight_on_grid"]
