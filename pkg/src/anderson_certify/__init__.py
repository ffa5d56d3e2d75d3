"""Numerical certification of localization for random lattice Schrödinger operators.

The library evaluates finite-volume criteria on fractional moments of
lattice Green functions, together with the companion diagnostics:
exponential-decay fits, power-law thresholds, density-of-states
conditions, spectral statistics, and projection/dynamical bounds.
"""

__version__ = "0.1.0"

from .lattice import (                                          # noqa: F401
    BondSet,
    Region,
    boundary_bonds,
    boundary_sites,
    dist1,
    dist_region,
    dist_to_boundary,
    extend_plus,
    norm1,
)
from .disorder import (                                         # noqa: F401
    DisorderModel,
    Realization,
    density_bound,
    derive_seed,
    sample_realization,
)
from .hamiltonian import (                                      # noqa: F401
    LaplacianConvention,
    OperatorSample,
    assemble,
    kinetic_dense,
    restrict,
)
from .resolvent import (                                        # noqa: F401
    SolverError,
    SpectralPoint,
    green_1d_transfer,
    green_entry,
    green_row,
)
from .moments import (                                          # noqa: F401
    EstimateError,
    MomentEstimate,
    MomentQuery,
    estimate_moment,
    estimate_row_moments,
    estimate_shell_supremum,
    median_of_means,
)
from .criteria import (                                         # noqa: F401
    CriterionConstants,
    CriterionReport,
    SubsetStrategy,
    certified_intervals,
    certify_interval,
    inverse_moment_closed_form,
    single_site_test,
    theorem1_lhs,
    theorem2_lhs,
)
from .observables import (                                      # noqa: F401
    DosProbe,
    EigenSystem,
    dos_condition_probability,
    dynamical_bound,
    eigensystem,
    gap_statistics,
    lifschitz_probe,
    projection_kernel,
    spectrum,
)
from .analysis import (                                         # noqa: F401
    DecayFit,
    DecaySeries,
    decay_series,
    fit_exponential,
    mobility_edge_bound_check,
    off_axis_scan,
    power_law_test,
)
from .scan import (                                             # noqa: F401
    ScanCell,
    ScanConfig,
    emit_phase_table,
    read_phase_table,
    run_scan,
)
