"""Local, piecewise-constant and integrated tail copula estimators and the trend statistics.

All estimators depend on the data only through within-window ranks. Ties are broken
by original index: among equal values the later observation ranks higher.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .core import (
    BivariateSample,
    EvalGrid,
    IntegratedCurve,
    TailSurface,
    TuningError,
    TuningParams,
    as_fraction,
    floor_count,
)

TIE_POLICY = "stable: equal values ranked by original index, later index higher"
RIEMANN_RULE = "right-endpoint, cell volume du*dv*ds"


def descending_ranks(values: np.ndarray) -> np.ndarray:
    """1-based descending ranks (1 = largest) with index tie-breaking."""
    nw = values.size
    order = np.argsort(values, kind="stable")
    asc = np.empty(nw, dtype=np.int64)
    asc[order] = np.arange(1, nw + 1)
    return nw - asc + 1


def _count_table(dx: np.ndarray, dy: np.ndarray, kmax: int) -> np.ndarray:
    """``table[a, b] = #{i : dx_i <= a, dy_i <= b}`` for ``0 <= a, b <= kmax``."""
    keep = (dx <= kmax) & (dy <= kmax)
    hist = np.zeros((kmax + 1, kmax + 1), dtype=np.int64)
    np.add.at(hist, (dx[keep], dy[keep]), 1)
    return hist.cumsum(axis=0).cumsum(axis=1)


def _window(n: int, h: Fraction, s: Fraction) -> tuple[int, int]:
    """0-based slice bounds of ``{i : s - h/2 < i/n <= s + h/2}``."""
    lo = math.floor(n * (s - h / 2))
    hi = math.floor(n * (s + h / 2))
    return max(lo, 0), min(hi, n)


@dataclass(frozen=True)
class WindowCounts:
    """Joint exceedance counts of one window, valid for ``floor(kh*u) <= kmax``."""

    table: np.ndarray  # (kmax+1, kmax+1)
    x_border: np.ndarray  # #{dx <= a}
    y_border: np.ndarray
    kh: float

    @property
    def kmax(self) -> int:
        return self.table.shape[0] - 1

    def lookup(self, u, v) -> np.ndarray:
        a, b = floor_count(self.kh, u), floor_count(self.kh, v)
        if np.max(a) > self.kmax or np.max(b) > self.kmax:
            raise ValueError("evaluation point outside the tabulated range")
        return self.table[a, b] / self.kh

    def surface(self, u_points: Sequence[float], v_points: Sequence[float]) -> TailSurface:
        u, v = np.asarray(u_points, dtype=float), np.asarray(v_points, dtype=float)
        au, bv = floor_count(self.kh, u), floor_count(self.kh, v)
        return TailSurface(
            u, v,
            self.table[au[:, None], bv[None, :]] / self.kh,
            self.x_border[au] / self.kh,
            self.y_border[bv] / self.kh,
        )


def window_counts(x: np.ndarray, y: np.ndarray, kh: float, u_max: float) -> WindowCounts:
    nw = x.size
    kmax = floor_count(kh, u_max)
    if kmax + 1 > nw:
        raise TuningError(
            f"order-statistic index out of range: floor(kh*{u_max:g})+1 = {kmax + 1} > window size {nw}"
        )
    dx, dy = descending_ranks(x), descending_ranks(y)
    border_x = np.bincount(np.minimum(dx, kmax + 1), minlength=kmax + 2)[: kmax + 1].cumsum()
    border_y = np.bincount(np.minimum(dy, kmax + 1), minlength=kmax + 2)[: kmax + 1].cumsum()
    return WindowCounts(_count_table(dx, dy, kmax), border_x, border_y, kh)


def local_tail_copula(
    sample: BivariateSample,
    params: TuningParams,
    s: float | Fraction,
    u_points: Sequence[float],
    v_points: Sequence[float],
) -> TailSurface:
    """Local estimate of ``R(u, v; s)`` from the ``nh`` observations closest to ``s``.

    Counts pairs strictly above the ``(nh - floor(kh*u))``-th and
    ``(nh - floor(kh*v))``-th ascending order statistics of the window,
    divided by ``kh``.
    """
    n, h = sample.n, params.h
    nh = params.nh(n)
    s = as_fraction(s, max_denominator=2 * n)
    if not (h / 2 <= s <= 1 - h / 2):
        raise ValueError(f"s={float(s):g} outside [h/2, 1-h/2]")
    lo, hi = _window(n, h, s)
    if hi - lo != nh:
        raise ValueError(f"window at s={float(s):g} has {hi - lo} members, expected {nh}")
    u_max = max(max(u_points), max(v_points))
    counts = window_counts(sample.x[lo:hi], sample.y[lo:hi], params.kh, u_max)
    return counts.surface(u_points, v_points)


def block_index(s: float | Fraction, h: Fraction) -> int:
    """``j(s) = min(ceil(s/h), floor(1/h))``, 1-based."""
    s = as_fraction(s)
    if not (0 < s <= 1):
        raise ValueError(f"s={float(s):g} outside (0, 1]")
    return min(math.ceil(s / h), math.floor(1 / h))


def piecewise_R_tilde(
    sample: BivariateSample,
    params: TuningParams,
    u_points: Sequence[float],
    v_points: Sequence[float],
    s: float | Fraction,
) -> TailSurface:
    """Piecewise-constant version: the local estimate at the midpoint of the block holding ``s``."""
    j = block_index(s, params.h)
    return local_tail_copula(sample, params, (j - Fraction(1, 2)) * params.h, u_points, v_points)


class BlockEstimates:
    """Per-block count tables ``R(u, v; s_j)``, ``j = 1..m``, computed once and reused.

    ``u_max`` bounds every u or v at which the estimates will be evaluated; the
    derivative estimator needs it up to ``T + k**-0.2``.
    """

    def __init__(self, sample: BivariateSample, params: TuningParams, u_max: float | None = None):
        self.sample = sample
        self.params = params
        self.nh = params.nh(sample.n)
        self.m = params.m
        if u_max is None:
            u_max = params.T
        self.u_max = u_max
        nh, kh = self.nh, params.kh
        self.blocks = [
            window_counts(sample.x[j * nh:(j + 1) * nh], sample.y[j * nh:(j + 1) * nh], kh, u_max)
            for j in range(self.m)
        ]

    def block_surfaces(self, u_points, v_points) -> list[TailSurface]:
        return [b.surface(u_points, v_points) for b in self.blocks]

    def block_values(self, u, v) -> np.ndarray:
        """``(m, *broadcast(u, v).shape)`` array of block estimates."""
        return np.stack([b.lookup(u, v) for b in self.blocks])

    def integrate(self, block_vals: np.ndarray, s_points: Sequence[float]) -> np.ndarray:
        """Exact integral over ``(0, s]`` of the piecewise-constant block values; s on the last axis."""
        h = self.params.h
        m = self.m
        hf = float(h)
        csum = np.cumsum(block_vals, axis=0)
        out = []
        for s in s_points:
            sf = as_fraction(s)
            if not (0 < sf <= 1):
                raise ValueError(f"s={s} outside (0, 1]")
            j = math.ceil(sf / h)
            if j <= m:
                full = hf * csum[j - 2] if j >= 2 else 0.0
                out.append(full + float(sf - (j - 1) * h) * block_vals[j - 1])
            else:
                out.append(hf * csum[m - 1] + float(sf - m * h) * block_vals[m - 1])
        return np.stack(out, axis=-1)

    def integrated_curve(self, grid: EvalGrid) -> IntegratedCurve:
        vals = self.block_values(grid.u[:, None], grid.v[None, :])
        return IntegratedCurve(grid, self.integrate(vals, grid.s_points), self.params.h)

    def average(self, u, v) -> np.ndarray:
        """``R(u, v) := I_R(u, v; 1)`` at arbitrary points inside the tabulated range."""
        return self.integrate(self.block_values(u, v), [1.0])[..., 0]

    def average_surface(self, u_points, v_points) -> TailSurface:
        u, v = np.asarray(u_points, dtype=float), np.asarray(v_points, dtype=float)
        kh = self.params.kh
        blocks = self.block_surfaces(u, v)
        ub = self.integrate(np.stack([b.u_border for b in blocks]), [1.0])[..., 0]
        vb = self.integrate(np.stack([b.v_border for b in blocks]), [1.0])[..., 0]
        vals = self.average(u[:, None], v[None, :])
        # Blocks share identical borders, so the average border is floor(khu)/kh up to rounding;
        # restore the exact value.
        exact_u, exact_v = floor_count(kh, u) / kh, floor_count(kh, v) / kh
        if not (np.allclose(ub, exact_u, atol=1e-12) and np.allclose(vb, exact_v, atol=1e-12)):
            raise AssertionError("block borders disagree with floor(khu)/(kh)")
        return TailSurface(u, v, vals, exact_u, exact_v, provenance="integrated average")

    def derivatives(self, u_points, v_points, exponent: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
        k = self.params.k
        r1 = derivative_estimator(self.average, k, 1, u_points, v_points, exponent)
        r2 = derivative_estimator(self.average, k, 2, u_points, v_points, exponent)
        return r1, r2


def derivative_u_max(params: TuningParams, exponent: float = 0.2) -> float:
    """Largest u needed by the derivative estimator on ``[0, T]^2``."""
    return params.T + params.k ** (-exponent)


def integrated_estimator(sample: BivariateSample, params: TuningParams, grid: EvalGrid) -> IntegratedCurve:
    """``I_R(u, v; s) = int_0^s R~(u, v; w) dw`` on the grid."""
    u_max = max(grid.u_points[-1], grid.v_points[-1])
    return BlockEstimates(sample, params, u_max).integrated_curve(grid)


def average_tail_copula(sample: BivariateSample, params: TuningParams, u_points, v_points) -> TailSurface:
    u_max = max(max(u_points), max(v_points))
    return BlockEstimates(sample, params, u_max).average_surface(u_points, v_points)


def derivative_estimator(
    surface_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    k: int,
    coordinate: int,
    u_points: Sequence[float],
    v_points: Sequence[float],
    exponent: float = 0.2,
) -> np.ndarray:
    """Finite-difference partial derivative of ``surface_fn`` with step ``k**-exponent``.

    One-sided near zero: the lower point is clamped at 0 and the denominator to
    ``min(2*delta, u + delta)``. Results are clamped to ``[0, 1]``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if coordinate not in (1, 2):
        raise ValueError("coordinate must be 1 or 2")
    delta = k ** (-exponent)
    u = np.asarray(u_points, dtype=float)[:, None]
    v = np.asarray(v_points, dtype=float)[None, :]
    u, v = np.broadcast_arrays(u, v)
    if coordinate == 1:
        hi, lo = surface_fn(u + delta, v), surface_fn(np.maximum(u - delta, 0.0), v)
        denom = np.minimum(2 * delta, u + delta)
    else:
        hi, lo = surface_fn(u, v + delta), surface_fn(u, np.maximum(v - delta, 0.0))
        denom = np.minimum(2 * delta, v + delta)
    return np.clip((np.asarray(hi) - np.asarray(lo)) / denom, 0.0, 1.0)


def discrepancy(curve: IntegratedCurve, k: int) -> np.ndarray:
    """``sqrt(k) * (I_R(u, v; s) - s * I_R(u, v; 1))`` over the grid."""
    grid = curve.grid
    if grid.s_points[-1] != 1.0:
        raise ValueError("grid lacks s=1")
    vals = curve.values
    return math.sqrt(k) * (vals - grid.s[None, None, :] * vals[:, :, -1:])


def trend_statistics(curve: IntegratedCurve, params: TuningParams, grid: EvalGrid | None = None) -> tuple[float, float]:
    """Supremum and Cramér-von Mises statistics of the no-trend discrepancy.

    The CvM integral is the right-endpoint Riemann sum over the grid cells.
    """
    grid = grid or curve.grid
    if grid != curve.grid:
        raise ValueError("curve was evaluated on a different grid")
    d = discrepancy(curve, params.k)
    du, dv, ds = grid.cell_weights()
    w = du[:, None, None] * dv[None, :, None] * ds[None, None, :]
    t_sup = float(np.max(np.abs(d)))
    # fsum makes the sum independent of summation order (u/v symmetry holds bit-exactly)
    t_cvm = math.fsum((d * d * w).ravel().tolist())
    return t_sup, t_cvm
