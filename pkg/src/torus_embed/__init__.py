"""Embedding finitely connected torus domains into C^2: elliptic functions, uniformization, shears."""

from .domain import (CircledMDomain, Curve, Disk, ParamBall, SampledMDomain, d1, d2, decode_params,
                     encode_params, from_descriptor, hausdorff_distance, to_descriptor, validate_xmd)
from .elliptic import Lattice, truncation_bound, wp_deriv, wp_eval, zeta_eval
from .embedder import SurfaceSample, check_theorem5_conditions, embed_domain
from .errors import TorusEmbedError
from .fixed_point import PerturbationField, check_mu, compose_F, solve_preimage
from .shear_perturb import (DefiningFunctionModel, ZeroFunction, build_zero_function, normal_chart,
                            perturbation_report, singular_shear)
from .uniformizer import EquivariantMap, kernel_of_sequence, uniformize

__version__ = "0.1.0"
