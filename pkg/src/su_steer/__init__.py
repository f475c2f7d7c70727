"""Trajectory tracking and motion planning on SU(n) with a periodic reference."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"

from .planner import compute_G, plan
from .reference import FourierControl, integrate_reference, regularity_check
from .su_core import fidelity_V, lie_closure_dim

__all__ = [
    "FourierControl",
    "compute_G",
    "fidelity_V",
    "integrate_reference",
    "lie_closure_dim",
    "plan",
    "regularity_check",
]
