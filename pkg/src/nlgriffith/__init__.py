"""Nonlocal approximations of Griffith-type fracture energies on regular grids."""
from .densities import (BulkDensity, FidelityDensity, MinorantFamily, NonlocalDensity,
                        PerturbedDensity, coercive_perturbation, minorant_family)
from .energy import (CrackCandidate, EnergyBreakdown, EnergyParams, F_eps, F_eps_sliced, G_eps,
                     H_eps, energy_breakdown, limit_energy)
from .errors import DomainError, NLGError, SpecError, UsageError
from .grid import (BallStencil, DisplacementField, Domain, ball_average, ball_stencil,
                   sym_gradient)
from .truncation import (CompactnessParams, TruncationSets, audit_truncation,
                         build_truncation_sets, compactness_params)

__version__ = "0.1.0"

__all__ = [
    "BallStencil", "BulkDensity", "CompactnessParams", "CrackCandidate", "DisplacementField",
    "Domain", "DomainError", "EnergyBreakdown", "EnergyParams", "F_eps", "F_eps_sliced",
    "FidelityDensity", "G_eps", "H_eps", "MinorantFamily", "NLGError", "NonlocalDensity",
    "PerturbedDensity", "SpecError", "TruncationSets", "UsageError", "audit_truncation",
    "ball_average", "ball_stencil", "build_truncation_sets", "coercive_perturbation",
    "compactness_params", "energy_breakdown", "limit_energy", "minorant_family", "sym_gradient",
]
