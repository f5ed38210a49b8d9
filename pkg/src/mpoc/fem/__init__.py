"""Finite-element spaces, quadrature and form assembly."""
from .spaces import SpaceSet
from .assembly import (
    DensityError,
    assemble_A,
    assemble_Atilde,
    assemble_B,
    assemble_Btilde,
    assemble_divergence,
    assemble_load,
    assemble_mass,
    assemble_rot_coupling,
    assemble_stiffness,
    assemble_vector_load,
)

__all__ = [
    "SpaceSet", "DensityError", "assemble_A", "assemble_Atilde", "assemble_B",
    "assemble_Btilde", "assemble_divergence", "assemble_load", "assemble_mass",
    "assemble_rot_coupling", "assemble_stiffness", "assemble_vector_load",
]
