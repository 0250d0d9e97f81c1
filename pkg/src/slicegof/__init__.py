"""Topology-based goodness-of-fit tests for sliced 3D microstructure data.

The pipeline: simulate a 3D point process, slice the induced Voronoi
tessellation into per-slice centroid clouds, compute M-bounded persistence
diagrams and vineyards, and run Monte-Carlo-calibrated z-tests on
longitudinal and cross-sectional summary statistics.
"""

__version__ = "0.1.0"

from .config import StudyConfig
from .pointproc import Window3D, PointSet3D, ProcessSpec
from .tessellate import SliceLayout, SliceCloud, SliceStack

__all__ = [
    "StudyConfig",
    "Window3D",
    "PointSet3D",
    "ProcessSpec",
    "SliceLayout",
    "SliceCloud",
    "SliceStack",
]
