"""Mean curvature flow of surfaces in space forms with extension-criterion diagnostics."""
from .flow import FlowParams, FlowRun, evolve
from .mesh import HypersurfaceMesh, geodesic_sphere, icosphere
from .space_forms import AmbientSpaceForm

__all__ = ["AmbientSpaceForm", "FlowParams", "FlowRun", "HypersurfaceMesh", "evolve", "geodesic_sphere", "icosphere"]
__version__ = "0.1.0"
