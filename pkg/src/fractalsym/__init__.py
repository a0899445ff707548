"""Legality of loop transformations by fractal symbolic analysis."""

__version__ = "1.0.0"

# Expose key classes and functions for easier imports
from .analyzer import Analyzer, Verdict, check_transformation, commute
from .config import AnalysisConfig, load_config
from .errors import FsaError
from .gse import compare_programs, gse_for
from .interp import InstanceSpec, Store, equiv_fuzz, evaluate, gen_instance
from .syntax import parse_formula, parse_program, print_program
from .transforms import apply, dependence_legality, obligations_for, parse_transform
