"""Nets of smooth functions modulo vanishing ideals, and global solutions of analytic PDEs
that are smooth off a closed nowhere dense singular set."""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .errors import (BudgetViolation, ComplementNotDense, CoverageLoss, FoamError, NoSeed,
                     ParseError, PreconditionError, RadiusCollapse, RepresentationError,
                     SupportBoundaryError)
from .expr import DomainBox, bump, derive_axis, differentiate, evaluate, outside_support
from .gck import (GlobalSolution, PdeSystem, construct_global_solution, continue_solution,
                  parse_pde, shrink_measure, verify_residual)
from .nets import (IdealSpec, MembershipVerdict, Net, check_I_membership, check_J_membership,
                   check_membership, diagonal_embed, embed, example_one_net, retag)
from .parser import parse_expr, to_text
from .posets import ExampleOnePoset, FiniteSubsetPoset, NaturalPoset
from .series import (InitialData, TruncatedSeries, ck_solve_local, estimate_radius, expand,
                     evaluate_series)
from .sets import (LimsupFamily, SingPrimitive, SingularitySet, Tag, dyadic_set,
                   is_complement_dense_at, measure_bound, rational_set, union)

__all__ = [
    "__version__",
    "RunConfig",
    "load_config",
    "BudgetViolation",
    "ComplementNotDense",
    "CoverageLoss",
    "FoamError",
    "NoSeed",
    "ParseError",
    "PreconditionError",
    "RadiusCollapse",
    "RepresentationError",
    "SupportBoundaryError",
    "DomainBox",
    "bump",
    "derive_axis",
    "differentiate",
    "evaluate",
    "outside_support",
    "GlobalSolution",
    "PdeSystem",
    "construct_global_solution",
    "continue_solution",
    "parse_pde",
    "shrink_measure",
    "verify_residual",
    "IdealSpec",
    "MembershipVerdict",
    "Net",
    "check_I_membership",
    "check_J_membership",
    "check_membership",
    "diagonal_embed",
    "embed",
    "example_one_net",
    "retag",
    "parse_expr",
    "to_text",
    "ExampleOnePoset",
    "FiniteSubsetPoset",
    "NaturalPoset",
    "InitialData",
    "TruncatedSeries",
    "ck_solve_local",
    "estimate_radius",
    "expand",
    "evaluate_series",
    "LimsupFamily",
    "SingPrimitive",
    "SingularitySet",
    "Tag",
    "dyadic_set",
    "is_complement_dense_at",
    "measure_bound",
    "rational_set",
    "union",
]
