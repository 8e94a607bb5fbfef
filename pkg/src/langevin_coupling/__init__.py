"""Reflection/synchronous couplings for kinetic Langevin and McKean-Vlasov dynamics.

Explicit contraction constants, a concave semimetric, exact empirical
Wasserstein distances, and Monte Carlo experiments that audit them.
"""

from ._backend import BACKEND
from .constants import (ConstraintLedger, DerivedConstants, ModelParams, ParticleConstants,
                        derive_base_constants, derive_particle_constants, verify_constraint_ledger)
from .potentials import ConfiningPotential, InteractionPotential, double_well

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfiningPotential", "ConstraintLedger", "DerivedConstants", "InteractionPotential",
    "ModelParams", "ParticleConstants", "derive_base_constants", "derive_particle_constants",
    "double_well", "verify_constraint_ledger",
]
