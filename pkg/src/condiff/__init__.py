"""Reproducible 2D steady-state diffusion datasets with high-contrast coefficients.

The toolkit samples stationary Gaussian random fields by circulant
embedding, exponentiates them into diffusion coefficients whose contrast
is controlled by rejection bounds, solves the PDE with a cell-centered
finite volume method, and serializes (coefficient, forcing, solution)
triplets together with a checksummed manifest.
"""

__version__ = "0.1.0"

from .errors import (
    BreakdownError,
    ChecksumMismatch,
    CondiffError,
    ConvergenceFailure,
    DatasetIOError,
    DegenerateTruth,
    DimensionMismatch,
    DomainError,
    EmbeddingNotPD,
    GridMismatch,
    RejectionExhausted,
)
from .fields import (
    CANONICAL_BOUNDS,
    CoefficientField,
    ContrastBounds,
    ContrastReport,
    check_bounds,
    compute_contrast,
    exponentiate,
    sample_forcing,
)
from .fvm import Problem, assemble, face_transmissibility, solve
from .grf import (
    RNG_SCHEME,
    CovarianceFamily,
    CovarianceModel,
    GridSpec,
    RngSeed,
    ScalarField,
    SpectralEmbedding,
    build_embedding,
    covariance_eval,
    derive_stream,
    sample_grf,
)
from .pipeline import (
    DatasetConfig,
    Manifest,
    Sample,
    SampleRecord,
    dataset_stats,
    generate_dataset,
    generate_sample,
    read_manifest,
    read_sample_arrays,
    relative_l2,
    validate_dataset,
)
from .sparse import (
    CgResult,
    SparseMatrix,
    SpectrumEstimate,
    cg_solve,
    estimate_extreme_eigenvalues,
    spmv,
)

__all__ = [
    "BreakdownError",
    "CANONICAL_BOUNDS",
    "CgResult",
    "ChecksumMismatch",
    "CoefficientField",
    "CondiffError",
    "ContrastBounds",
    "ContrastReport",
    "ConvergenceFailure",
    "CovarianceFamily",
    "CovarianceModel",
    "DatasetConfig",
    "DatasetIOError",
    "DegenerateTruth",
    "DimensionMismatch",
    "DomainError",
    "EmbeddingNotPD",
    "GridMismatch",
    "GridSpec",
    "Manifest",
    "Problem",
    "RNG_SCHEME",
    "RejectionExhausted",
    "RngSeed",
    "Sample",
    "SampleRecord",
    "ScalarField",
    "SparseMatrix",
    "SpectralEmbedding",
    "SpectrumEstimate",
    "assemble",
    "build_embedding",
    "cg_solve",
    "check_bounds",
    "compute_contrast",
    "covariance_eval",
    "dataset_stats",
    "derive_stream",
    "estimate_extreme_eigenvalues",
    "exponentiate",
    "face_transmissibility",
    "generate_dataset",
    "generate_sample",
    "read_manifest",
    "read_sample_arrays",
    "relative_l2",
    "sample_forcing",
    "sample_grf",
    "solve",
    "spmv",
    "validate_dataset",
]
