"""Level-set horizontal mean curvature flow on Carnot-type frames, with a
stochastic-control cross-check of the solution."""

__version__ = "0.1.0"

from .costs import TerminalCost, make_cost
from .frames import EpsilonFrame, Frame, euclidean, heisenberg1, make_frame
from .grid import LevelSetField, sample

__all__ = [
    "__version__",
    "EpsilonFrame",
    "Frame",
    "LevelSetField",
    "TerminalCost",
    "euclidean",
    "heisenberg1",
    "make_cost",
    "make_frame",
    "sample",
]
