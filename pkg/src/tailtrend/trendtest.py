"""End-to-end test for a constant tail copula: estimate, compute statistics, simulate critical values."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import BivariateSample, EvalGrid, TuningParams, validate_tuning
from .estimator import (
    RIEMANN_RULE,
    TIE_POLICY,
    BlockEstimates,
    derivative_u_max,
    trend_statistics,
)
from .limit import PluginDerivatives, build_field_spec, simulate_functionals, upper_order_statistic


@dataclass(frozen=True)
class TrendTestResult:
    T_sup: float
    T_cvm: float
    c_sup: float
    c_cvm: float
    alpha: float
    B: int
    jitter_retries: int

    @property
    def reject_sup(self) -> bool:
        return self.T_sup > self.c_sup

    @property
    def reject_cvm(self) -> bool:
        return self.T_cvm > self.c_cvm

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reject_sup"] = self.reject_sup
        d["reject_cvm"] = self.reject_cvm
        return d


def trend_test(
    sample: BivariateSample,
    params: TuningParams,
    B: int,
    alpha: float,
    rng: np.random.Generator,
    grid: EvalGrid | None = None,
    deriv_exponent: float = 0.2,
) -> TrendTestResult:
    """Both tests on one sample; the statistics and the ``B`` bridge draws are shared."""
    validate_tuning(sample.n, params)
    grid = grid or EvalGrid.default(params.h, params.T)
    u_max = max(derivative_u_max(params, deriv_exponent), grid.u_points[-1], grid.v_points[-1])
    blocks = BlockEstimates(sample, params, u_max)
    t_sup, t_cvm = trend_statistics(blocks.integrated_curve(grid), params)
    surface = blocks.average_surface(grid.u, grid.v)
    r1, r2 = blocks.derivatives(grid.u, grid.v, deriv_exponent)
    spec = build_field_spec(surface, grid)
    sup, cvm = simulate_functionals(spec, PluginDerivatives(r1, r2), grid, B, rng)
    return TrendTestResult(
        T_sup=t_sup,
        T_cvm=t_cvm,
        c_sup=upper_order_statistic(sup, alpha),
        c_cvm=upper_order_statistic(cvm, alpha),
        alpha=alpha,
        B=B,
        jitter_retries=spec.retries,
    )


def method_metadata(params: TuningParams, grid: EvalGrid, deriv_exponent: float = 0.2) -> dict:
    return {
        "k": params.k,
        "h": str(params.h),
        "T": params.T,
        "grid": grid.to_dict(),
        "tie_policy": TIE_POLICY,
        "riemann_rule": RIEMANN_RULE,
        "derivative_exponent": deriv_exponent,
    }
