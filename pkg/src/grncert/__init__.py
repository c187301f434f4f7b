"""Robust piecewise-quadratic Lyapunov certification for uncertain
piecewise-affine genetic regulatory network models."""

from importlib import resources

from .model import (
    LambdaInstance, ProductTerm, RateFunction, StepFactor, UncertainGrn,
    instantiate, load_model, parse_model, rate_in_domain, serialize_model,
)
from .partition import (
    Domain, Partition, Stg, adjacent_regulatory, build_partition, build_stg,
    check_shared_stg, focal_point, sink_domains,
)
from .polytope import (
    HPolyhedron, RayMatrix, VPolyhedron, contains, h_to_v, homogenization_cone,
    sliding_polytope, v_to_h, vertices,
)
from .certify import (
    Certificate, CertifyConfig, PwqFunction, assemble_common, assemble_extremal,
    blend_reconstruction_gap, combine, continuity_pairs, decrease_form,
    extract_certificate, pair_coupling_form, sliding_decrease_form,
)
from .sdp import SdpProblem, SdpSolution, SolveSettings, residuals, solve
from .simulate import (
    Trajectory, VerificationReport, eval_lyapunov, sample_simplex, simulate,
    sliding_field, verify,
)

__version__ = "0.1.0"


def example_model_path():
    """Path of the bundled two-protein model with a sliding mode."""
    return resources.files(__package__) / "data" / "sliding_example.json"
