"""Mean-aggregation graph smoothing on latent-space random graphs.

Builds Gaussian-kernel graphs over latent points, applies k rounds of
L = D^-1 A to partial node features, fits ridge regression on the result,
and compares the empirical test risk against closed-form predictions.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigMismatch,
    DegenerateDegree,
    DimensionMismatch,
    EigFailure,
    ParseError,
    SolveFailure,
    UnknownNodeId,
)
from .graph import (
    Adjacency,
    SmoothingOperator,
    build_adjacency,
    ergodic_limit,
    row_normalize,
    smooth,
)
from .learn import k_sweep, oversmoothing_prediction, ridge_fit, test_risk
from .model import (
    ClassificationModelConfig,
    KernelConfig,
    LatentDataset,
    RegressionModelConfig,
    RidgeModel,
    RiskCurve,
    validate_config,
)
