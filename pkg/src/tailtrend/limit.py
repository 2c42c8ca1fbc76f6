"""Gaussian limit process under the no-trend null and simulated critical values.

Under the null the covariance of ``W_I`` factorises as
``R(u1 ^ u2, v1 ^ v2) * (s ^ t)``; the field is drawn exactly on the grid by a
Cholesky factor of the spatial part times independent Brownian increments in s.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .core import EvalGrid, TailSurface

logger = logging.getLogger(__name__)

JITTER_REL = 1e-10
JITTER_RETRIES = 3
DRAW_CHUNK = 250


class FactorizationError(RuntimeError):
    """Spatial covariance could not be factorised even after jitter retries."""


@dataclass(frozen=True)
class GaussianFieldSpec:
    """Covariance of ``W_I`` on interior nodes ``(u_a, v_b)`` followed by the
    ``(u_a, inf)`` and ``(inf, v_b)`` border nodes."""

    u_points: tuple[float, ...]
    v_points: tuple[float, ...]
    s_points: tuple[float, ...]
    cov: np.ndarray
    chol: np.ndarray
    jitter: float
    retries: int

    @property
    def n_interior(self) -> int:
        return len(self.u_points) * len(self.v_points)

    @property
    def n_nodes(self) -> int:
        return self.cov.shape[0]

    @property
    def s_steps(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.s_points]))

    def node_index(self) -> tuple[np.ndarray, np.ndarray]:
        return node_index(len(self.u_points), len(self.v_points))


@dataclass(frozen=True)
class PluginDerivatives:
    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        for a in (self.r1, self.r2):
            if np.any(a < 0) or np.any(a > 1):
                raise ValueError("plug-in derivatives must lie in [0, 1]")


def node_index(nu: int, nv: int) -> tuple[np.ndarray, np.ndarray]:
    """Per node, (u index, v index); index ``nu`` (``nv``) stands for infinity."""
    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    iu = np.concatenate([iu.ravel(), np.arange(nu), np.full(nv, nu)])
    iv = np.concatenate([iv.ravel(), np.full(nu, nv), np.arange(nv)])
    return iu, iv


def spatial_covariance(surface: TailSurface) -> np.ndarray:
    """Min-rule covariance ``R(u1 ^ u2, v1 ^ v2)`` over interior and border nodes.

    Grid points ascend, so the minimum of two indices addresses the minimum of
    the coordinates; the infinity index only wins against itself.
    """
    iu, iv = node_index(*surface.values.shape)
    return surface.extended()[np.minimum.outer(iu, iu), np.minimum.outer(iv, iv)]


def build_field_spec(surface: TailSurface, grid: EvalGrid | Sequence[float]) -> GaussianFieldSpec:
    """Assemble and factorise the plug-in covariance.

    Jitter of ``1e-10 * trace / dim`` is added to the diagonal, multiplied by 10
    on each failed attempt, up to three retries.
    """
    s_points = grid.s_points if isinstance(grid, EvalGrid) else tuple(float(s) for s in grid)
    if abs(s_points[-1] - 1.0) > 0:
        raise ValueError("s grid must end at 1")
    cov = spatial_covariance(surface)
    dim = cov.shape[0]
    base = JITTER_REL * max(np.trace(cov), 1e-300) / dim
    jitter = base
    for attempt in range(JITTER_RETRIES + 1):
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(dim))
            break
        except np.linalg.LinAlgError:
            logger.debug("cholesky failed with jitter %.3g", jitter)
            if attempt == JITTER_RETRIES:
                raise FactorizationError(
                    "covariance not positive definite; input surface is likely not 2-increasing"
                ) from None
            jitter *= 10
    cov.flags.writeable = False
    chol.flags.writeable = False
    return GaussianFieldSpec(
        surface.u_points, surface.v_points, s_points, cov, chol, jitter, attempt,
    )


def simulate_WI(spec: GaussianFieldSpec, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw ``W_I(node; s_l)``; shape ``(size, n_s, n_nodes)`` (leading axis dropped if ``size`` is None)."""
    count = 1 if size is None else size
    steps = np.sqrt(spec.s_steps)
    z = rng.standard_normal((count, len(spec.s_points), spec.n_nodes))
    incr = (z @ spec.chol.T) * steps[None, :, None]
    w = np.cumsum(incr, axis=1)
    return w[0] if size is None else w


def bridge_from_field(w: np.ndarray, spec: GaussianFieldSpec, derivs: PluginDerivatives) -> np.ndarray:
    """``B(u, v; s) = B_I(u, v; s) - R1 B_I(u, inf; s) - R2 B_I(inf, v; s)``; shape ``(..., n_s, nu, nv)``."""
    nu, nv = len(spec.u_points), len(spec.v_points)
    if derivs.r1.shape != (nu, nv) or derivs.r2.shape != (nu, nv):
        raise ValueError("derivative grid does not match the field grid")
    s = np.asarray(spec.s_points)
    b_i = w - s[:, None] * w[..., -1:, :]
    b_i[..., -1, :] = 0.0
    inner = b_i[..., : nu * nv].reshape(*b_i.shape[:-1], nu, nv)
    u_edge = b_i[..., nu * nv: nu * nv + nu]
    v_edge = b_i[..., nu * nv + nu:]
    return inner - derivs.r1 * u_edge[..., :, None] - derivs.r2 * v_edge[..., None, :]


def simulate_B(spec: GaussianFieldSpec, derivs: PluginDerivatives, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw the plug-in bridge on the grid; exactly zero at ``s = 1``."""
    w = simulate_WI(spec, rng, 1 if size is None else size)
    b = bridge_from_field(w, spec, derivs)
    return b[0] if size is None else b


def bridge_functionals(b: np.ndarray, grid: EvalGrid) -> tuple[np.ndarray, np.ndarray]:
    """Sup and Riemann-sum CvM functionals of bridge draws shaped ``(B, n_s, nu, nv)``."""
    du, dv, ds = grid.cell_weights()
    w = ds[:, None, None] * du[None, :, None] * dv[None, None, :]
    sup = np.abs(b).max(axis=(1, 2, 3))
    cvm = np.einsum("bsuv,suv->b", b * b, w)
    return sup, cvm


def upper_order_statistic(values: Sequence[float], alpha: float) -> float:
    """Ascending order statistic at 1-based index ``ceil((1 - alpha) * B)``."""
    if not (0 < alpha < 1):
        raise ValueError("alpha must lie in (0, 1)")
    vals = np.sort(np.asarray(values, dtype=float))
    idx = math.ceil((1 - alpha) * vals.size - 1e-9)
    return float(vals[max(idx, 1) - 1])


def simulate_functionals(
    spec: GaussianFieldSpec,
    derivs: PluginDerivatives,
    grid: EvalGrid,
    B: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    if B < 1:
        raise ValueError("B must be at least 1")
    if grid.s_points != spec.s_points:
        raise ValueError("grid and field spec use different s points")
    sups, cvms = [], []
    for start in range(0, B, DRAW_CHUNK):
        b = simulate_B(spec, derivs, rng, size=min(DRAW_CHUNK, B - start))
        sup, cvm = bridge_functionals(b, grid)
        sups.append(sup)
        cvms.append(cvm)
    return np.concatenate(sups), np.concatenate(cvms)


def critical_values(
    spec: GaussianFieldSpec,
    derivs: PluginDerivatives,
    grid: EvalGrid,
    B: int,
    alpha: float,
    rng: np.random.Generator,
    riemann_rule: str = "right",
) -> tuple[float, float]:
    """Critical values of the sup and CvM tests from ``B`` simulated bridges."""
    if riemann_rule != "right":
        raise ValueError("only the right-endpoint Riemann rule is implemented")
    sup, cvm = simulate_functionals(spec, derivs, grid, B, rng)
    return upper_order_statistic(sup, alpha), upper_order_statistic(cvm, alpha)


# ---------------------------------------------------------------------------
# Variance of the tail-dependence-coefficient estimator


def tdc_variance_density(tdc: float, r: float, f) -> np.ndarray:
    """``sigma^2(w) = (1 - R)(R - 2 R1 R2)`` at ``(1, 1)`` with ``R = f*tdc`` and ``R1 = R2 = f*r``."""
    f = np.asarray(f, dtype=float)
    big_r = f * tdc
    return (1 - big_r) * (big_r - 2 * (f * r) ** 2)


def tdc_integrand_mixture(tdc: float, r: float, f) -> np.ndarray:
    """``f [tdc (1 - 4 f r + 2 f^2 r^2) + 2 f^2 r^2]``; agrees with :func:`tdc_variance_density` at ``f = 1``."""
    f = np.asarray(f, dtype=float)
    return f * (tdc * (1 - 4 * f * r + 2 * f**2 * r**2) + 2 * f**2 * r**2)


def constant_tdc_variance(theta: float) -> float:
    """``(1 - rho)(rho - 2 r^2)`` with ``rho = 2 - 2**theta`` and ``r = rho/2``."""
    _check_theta(theta)
    rho = 2.0 - 2.0**theta
    r = rho / 2
    return (1 - rho) * (rho - 2 * r * r)


def analytic_variance_tdc(
    theta: float,
    f: Callable[[np.ndarray], np.ndarray] | None = None,
    s: float = 1.0,
    panels: int = 1000,
    density: str = "product",
) -> float:
    """``int_0^s sigma^2(w) dw`` for the mixture ``R(u, v; w) = f(w) R_theta(u, v)``.

    ``density="product"`` integrates :func:`tdc_variance_density`;
    ``density="expanded"`` integrates :func:`tdc_integrand_mixture`. The two
    coincide when ``f = 1``. Composite Simpson rule with ``panels`` panels.
    """
    _check_theta(theta)
    if panels % 2:
        panels += 1
    rho = 2.0 - 2.0**theta
    r = rho / 2
    w = np.linspace(0.0, s, panels + 1)
    fw = np.ones_like(w) if f is None else np.asarray(f(w), dtype=float) * np.ones_like(w)
    if density == "product":
        y = tdc_variance_density(rho, r, fw)
    elif density == "expanded":
        y = tdc_integrand_mixture(rho, r, fw)
    else:
        raise ValueError(f"unknown density {density!r}")
    return float(simpson(y, x=w))


def _check_theta(theta: float) -> None:
    if not (0 < theta <= 1):
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
