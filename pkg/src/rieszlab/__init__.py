"""Riesz-transform norm estimation on weighted graphs.

Weighted graphs stand in for Riemannian manifolds: cylinders over a base
graph, and glued manifolds built by attaching cylinders to a backbone. The
package computes ``R = ∇(-Δ)^{-1/2}`` spectrally, estimates ``‖R‖_{p→p}``
from below with a nonlinear power method, and simulates the continuous-time
walks used to compare heat flows before and after gluing.
"""
from .errors import (DataError, InternalError, InvalidArgument, OutOfRange, ResourceLimit,
                     RieszLabError, SurgeryFailure)
from .graph import (CylinderGraph, Embedding, GluedManifold, ScalarField, WeightedGraphManifold,
                    build_cycle, build_cylinder, build_path, build_torus, glue, product, pullback,
                    pushforward, translate)
from .norms import OperatorNormEstimate, hilbert_reference, lp_norm, op_norm_lower_bound, riesz_norm
from .spectral import (QuadratureConfig, SpectralDecomposition, decompose, gradient_magnitude,
                       heat_semigroup, inv_sqrt_spectral, inv_sqrt_subordination, rescaled_riesz,
                       riesz_transform, solve_poisson)
from .walks import BACKEND, StoppingRule, coupled_walk, exit_probability, mc_heat, sample_walk

__version__ = "0.1.0"
