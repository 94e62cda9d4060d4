"""kNN-adaptive graph Laplacians on point clouds.

The hot loops (kNN selection, dense affinities) run in a compiled extension
when available and fall back to numpy otherwise; ``knnlap.COMPILED`` tells
which one was loaded.
"""

from ._backend import COMPILED, get_threads, set_threads
from .errors import (
    DataError,
    DegenerateBandwidthError,
    DomainError,
    EmptyNeighborhoodError,
    FitQualityError,
    FormatError,
    IsolatedVertexError,
    KnnLapError,
    NumericalError,
    OutOfRegimeError,
    ParameterError,
)
from .graph import (
    AffinityMatrix,
    LaplacianKind,
    Practical,
    Theoretical,
    affinity,
    degree,
    laplacian_apply_at,
    laplacian_matrix,
)
from .kernels import (
    Exponential,
    Indicator,
    KernelMoments,
    PhiRule,
    RateClass,
    classify_rate,
    eval_k0,
    eval_phi,
    k0_moments,
    parse_kernel,
    parse_phi,
    unit_ball_volume,
)
from .knn import (
    BandwidthProfile,
    PointCloud,
    bandwidth_profile,
    knn_all,
    knn_distance,
    knn_query,
    weighted_knn_distance,
)
from .manifold import BandwidthComparison, CurveManifold, solve_bandwidth

__version__ = "0.1.0"
