"""Fringe projection profilometry toolkit.

Phase-shifting decode, composite (PMI) image construction, unreliable-point
masking, spatial and temporal phase unwrapping, evaluation metrics, and
triangulation to 3D point clouds, plus a deterministic synthetic scene
generator used as the desk-scale benchmark.
"""

from fppkit.formats import FloatMap, FringeStack, LabelMap, PMIImage

__all__ = ["FloatMap", "FringeStack", "LabelMap", "PMIImage"]

__version__ = "0.1.0"
