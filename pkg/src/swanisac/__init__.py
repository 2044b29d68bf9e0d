"""Pinching-antenna ISAC: near-field physics, label oracle and a graph-conditioned
adapter model that predicts antenna deployment, TX/RX partition and beams."""

from .config import RunConfig, load_config
from .geometry import GeometryConfig, project_deployment
from .model import SwanModel

__all__ = ["RunConfig", "load_config", "GeometryConfig", "project_deployment", "SwanModel"]
__version__ = "0.1.0"
