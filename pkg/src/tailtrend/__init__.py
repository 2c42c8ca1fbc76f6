"""Time-varying tail dependence: integrated tail copula estimation and trend tests."""

from importlib import resources

from .core import (
    BivariateSample,
    EvalGrid,
    IntegratedCurve,
    TailSurface,
    TuningError,
    TuningParams,
    load_sample,
    validate_tuning,
    write_sample,
)
from .dgp import LogisticModel, MixtureSpec, ScedasisSpec, generate_dataset
from .estimator import (
    BlockEstimates,
    average_tail_copula,
    integrated_estimator,
    local_tail_copula,
    trend_statistics,
)
from .limit import build_field_spec, critical_values
from .trendtest import TrendTestResult, trend_test

__version__ = "0.1.0"


def config_path(name: str):
    """Path of a shipped experiment config, e.g. ``config_path("figure3.json")``."""
    return resources.files(__package__) / "configs" / name
