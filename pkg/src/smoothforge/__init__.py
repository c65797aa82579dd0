"""smoothforge: Bayesian additive models compiled to Gibbs-sampler code."""

from .errors import (
    CapabilityError,
    DataError,
    FormulaError,
    ProprietyError,
    SchemaError,
    SmoothforgeError,
)
from .formula import FamilySpec, FormulaAst, SmoothSpec, make_family, parse_formula
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CapabilityError",
    "DataError",
    "FamilySpec",
    "FormulaAst",
    "FormulaError",
    "ProprietyError",
    "SchemaError",
    "SmoothSpec",
    "SmoothforgeError",
    "make_family",
    "parse_formula",
]
