"""Performance-estimation certificates for discretized circuits."""
from .certificate import Certificate, SdpSolution, extract_certificate, solve_sdp, verify_certificate
from .gram import Constraint, GramProblem, Point, build_pep, interpolation_constraints
from .sampling import SampledDescent, sampled_descent
from .sdp import solve_dual_form
from .search import SearchBounds, SearchResult, relaxation_bound, search_params

__all__ = [
    "Certificate", "Constraint", "GramProblem", "Point", "SampledDescent", "SdpSolution", "SearchBounds",
    "SearchResult", "build_pep", "extract_certificate", "interpolation_constraints", "relaxation_bound",
    "sampled_descent", "search_params", "solve_dual_form", "solve_sdp", "verify_certificate",
]
