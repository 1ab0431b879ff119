"""Numerical study of the kinetic fibre lay-down Fokker-Planck model."""
from .potential import PotentialSpec

__version__ = "0.1.0"
__all__ = ["PotentialSpec", "__version__"]
