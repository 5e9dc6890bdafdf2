"""Ricci-flow covariance descriptors for triangle-mesh classification."""

from .mesh import TriangleMesh, load_mesh, save_mesh
from .ricci import SolverConfig, flat_target, init_circle_packing, optimize
from .spd import KernelParams, SubjectSignature, geodesic_distance, set_kernel

__version__ = "0.1.0"
