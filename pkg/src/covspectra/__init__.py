"""Spectral machinery and Monte-Carlo verification for sample covariance matrices."""

from .errors import (
    ConfigError,
    CovspectraError,
    DataError,
    DomainError,
    SolverError,
    StructureError,
)
from .mplaw import (
    ClassicalLocations,
    EdgeProximityWarning,
    PopulationSpectrum,
    RegularityReport,
    SpectrumStructure,
    StieltjesValue,
    check_regularity,
    classical_locations,
    density,
    density_grid,
    eval_f,
    find_spectrum_structure,
    solve_m,
    solve_m_grid,
    square_root_fit,
)

__version__ = "0.1.0"

from .conformal import ConformalTestConfig, TestDecision, conformal_test, normality_test
from .ensembles import (
    EntryLaw,
    SampleDecomposition,
    SpectralIndex,
    alpha_prime,
    alpha_prime_inverse,
    decompose,
    load_decompositions,
    replicate_rng,
    rescale_edge_eigenvalue,
    sample_matrix,
    save_decompositions,
)
from .greenfn import (
    GreenEvaluation,
    anisotropic_error,
    build_green,
    build_h_matrix,
    sharp_counting,
    smoothed_counting,
    tilde_green,
)
from .verify import (
    ExperimentConfig,
    ExperimentReport,
    Target,
    bulk_universality_experiment,
    delocalization_experiment,
    edge_universality_experiment,
    joint_edge_experiment,
    normal_limit_check,
    rigidity_experiment,
)
