"""Spectral engine for Rosensweig patterns at a fluid-ferrofluid interface."""
from .lattice import (PatternKind, WaveVector, Lattice, make_lattice, dual_vectors_of_length,
                      rotate_coeffs, symmetrize_coeffs)
from .magnetization import (LawError, LawConstants, MagnetizationLaw, ConstantLaw, LangevinLaw,
                            CallableLaw, TabulatedLaw, constants_at_one, potential_M, nu_apply,
                            law_from_spec)
from .fields import (SurfaceField, StateTriple, VolumeField, Strip, multiply, grad_h, sobolev_norm,
                     reciprocal_one_plus, symmetrize, e1_field)

__version__ = "0.1.0"
from .dn_operators import (ConvergenceError, UnsupportedOrder, DNExpansion, taylor_dn_lower,
                           taylor_dn_upper, nonlinear_dn, solve_order_one_lower)
from .linear_analysis import (NoPositiveMaximum, CriticalPoint, pencil_matrix, dispersion_r,
                              critical_point, threshold_beta0, beta0_from_omega_tilde,
                              deep_fluid_beta0, kernel_basis, projection_P, resolvent_solve,
                              transversality)
from .bifurcation import (BranchType, BranchResult, residual, Q0_apply, C0_apply, gamma1,
                          solve_w1, gamma2, classify_branch)
