"""Filtered and asynchronous SGD engines with the matching convergence bounds."""
from .data import Dataset, Example, ParseError, load, parse_sparse_text, serialize, subsample
from .objectives import Objective, ProblemConstants, problem_constants, solve_reference
from .partition import build_partition, slice_bounds

__version__ = "0.1.0"
