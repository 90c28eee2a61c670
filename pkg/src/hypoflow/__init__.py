"""hypoflow: a numerical laboratory for partitioned degenerate SDEs.

Simulates systems whose noise enters only a sub-block of coordinates,
integrates their Jacobian flows and inverse flows, assembles the
associated covariance (Malliavin) matrices, checks the drift-derivative
rank condition, and runs Monte-Carlo probes for inverse-moment
integrability, semigroup gradient bounds, and strong-Feller continuity.
"""

from .backend import NUMBA_ENABLED, force_python
from .errors import (ConfigError, HypoflowError, HypothesisViolationError,
                     NumericalFailureError)
from .flow import FlowRecord, blocks_at, flow_deviation_report, \
    integrate_flow
from .gradient import (BoundedFunction, F_CATALOG, FellerProbe,
                       GradientEstimate, ScanReport, feller_probe,
                       finite_difference_gradient, get_f,
                       gradient_bound_scan, malliavin_gradient,
                       pathwise_gradient, truncate_model)
from .hormander import (EllipticityReport, Hierarchy, HField,
                        LocalConstants, SpanningReport, ball_points,
                        build_hierarchy, ellipticity_along_path,
                        local_constants, spanning_dimension)
from .malliavin import (HistogramReport, MalliavinRecord, MomentReport,
                        NorrisReport, TailReport, density_histogram,
                        inverse_moment_probe, malliavin_matrix,
                        norris_event_probe, sphere_directions, tail_probe,
                        wilson_interval)
from .models import (ModelSpec, NoiseGrid, PathBundle, integrate_path,
                     sample_noise)
from .report import ReportEnvelope, run, validate_config

__version__ = "0.1.0"
