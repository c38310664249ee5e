"""Design, fitting and validation of Gaussian-process metamodels."""

from gpdoe.design import (
    Design,
    generate_hammersley,
    generate_lhs,
    generate_srs,
    is_lhs,
    make_rng,
    project,
    scale_to_domain,
    unscale_to_unit,
)
from gpdoe.errors import ArgumentError, DataError, GpdoeError, NumericalError

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "DataError",
    "Design",
    "GpdoeError",
    "NumericalError",
    "generate_hammersley",
    "generate_lhs",
    "generate_srs",
    "is_lhs",
    "make_rng",
    "project",
    "scale_to_domain",
    "unscale_to_unit",
]
