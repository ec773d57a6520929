"""Certified construction of a skew product on the cylinder whose attractor
contains a point mapped from its interior onto its boundary."""

from .core import ConeConfig, CylinderPoint, LiftPoint, VerticalCurve
from .skewmap import SkewMap, SkewParams, build_default, make_map

__all__ = ["ConeConfig", "CylinderPoint", "LiftPoint", "VerticalCurve", "SkewMap", "SkewParams",
           "build_default", "make_map"]
__version__ = "0.1.0"
