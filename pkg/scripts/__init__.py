"""mu2lab — 第二 Yamabe 不变量数值实验库"""

from scripts.errors import (
    Mu2LabError, ConfigError, GeometryError, RankDeficiencyError, DegenerateSpanError,
    DegenerateGapError, ResolutionError, PencilError, VerificationError, FieldError,
)
from scripts.config import RunConfig, load_config, VERSION
from scripts.geometry import (
    ModelGeometry, Component, DensityProfile, constants, geometry_from_dict,
    make_sphere, make_disjoint_union, make_product_sphere, make_synthetic,
    make_flat_band, make_negative_pole, make_flat_ball, zonal_eigenvalues, mu1_closed_form,
)
from scripts.discretize import Mesh, Field, ConformalFactor, assemble_forms, normalize_volume
from scripts.pencil import EigenSolution, solve_pencil, rayleigh
from scripts.functionals import (
    MuEstimate, yamabe_Y, F, sobolev_quotient_G, sup_over_span, sup_over_subspace,
    mu_estimate, lambda_plus_quotient, mesh_convergence,
)
from scripts.bubbles import (
    BubbleParams, aubin_bubble, antipodal_bubbles, two_bubble_config, bubble_sweep,
    norm_scaling_fit, negative_divergence_demo,
)
from scripts.inequalities import SuiteReport, run_suites
from scripts.report import ResultWriter
