"""Pair copulas and regular vines."""
from .bivariate import BivariateCopula, fit_bivariate, fit_checkerboard, h_function, h_inverse
from .families import FAMILIES
from .vine import (
    VineEdge,
    VineModel,
    dvine,
    fit_vine,
    fit_vine_to_data,
    independence_vine,
    pseudo_observations,
)

__all__ = [
    "FAMILIES",
    "BivariateCopula",
    "VineEdge",
    "VineModel",
    "dvine",
    "fit_bivariate",
    "fit_checkerboard",
    "fit_vine",
    "fit_vine_to_data",
    "h_function",
    "h_inverse",
    "independence_vine",
    "pseudo_observations",
]
