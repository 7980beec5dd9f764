"""IV/GMM estimators for heteroskedastic first stages, robust first-stage
F-statistics, weak-instrument limit simulators and a Monte Carlo harness."""

from gmmf.core import (
    DataError,
    Dataset,
    DegenerateGroupError,
    GroupedView,
    NotGroupedError,
    SingularMatrixError,
    grouped_view,
    load_dataset,
)
from gmmf.estimators import (
    Estimate,
    FirstStage,
    first_stage,
    gmm_two_step,
    gmmf,
    group_iv,
    infeasible_gmm,
    infeasible_gmmuf,
    ols,
    two_sls,
    wald,
)
from gmmf.firststage import Diagnostics, diagnostics

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Dataset",
    "DegenerateGroupError",
    "Diagnostics",
    "Estimate",
    "FirstStage",
    "GroupedView",
    "NotGroupedError",
    "SingularMatrixError",
    "diagnostics",
    "first_stage",
    "gmm_two_step",
    "gmmf",
    "group_iv",
    "grouped_view",
    "infeasible_gmm",
    "infeasible_gmmuf",
    "load_dataset",
    "ols",
    "two_sls",
    "wald",
]
