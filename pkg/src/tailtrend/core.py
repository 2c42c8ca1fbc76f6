"""Domain types, evaluation grids, tuning validation and sample I/O."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

#: Index used in place of a grid position to address the ``(u, inf)`` / ``(inf, v)`` border.
BORDER = -1

# Guards floor(k*h*u) against products such as 20 * 0.7 = 13.999999999999998.
_FLOOR_EPS = 1e-9


class TuningError(ValueError):
    """Raised when (n, k, h, T) violate a hard constraint of the estimator."""


class SampleFormatError(ValueError):
    """Raised for unreadable or invalid sample files."""


def as_fraction(value: float | str | Fraction, max_denominator: int = 10**6) -> Fraction:
    """Parse a bandwidth or time point such as ``"1/10"``, ``0.1`` or ``Fraction(1, 10)``.

    Floats are snapped to the nearest rational with a bounded denominator so that
    ``0.1`` means exactly one tenth.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip()).limit_denominator(max_denominator)
    return Fraction(value).limit_denominator(max_denominator)


def floor_count(kh: float, u: float | np.ndarray) -> np.ndarray | int:
    """Number of top order statistics used at level ``u``: ``floor(k*h*u)``."""
    out = np.floor(np.asarray(u, dtype=float) * kh + _FLOOR_EPS).astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BivariateSample:
    """Time-ordered bivariate observations; row ``i`` (1-based) is observed at ``s_i = i/n``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if x.size < 1:
            raise ValueError("empty input")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("sample contains non-finite values")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "BivariateSample":
        arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def n(self) -> int:
        return int(self.x.size)

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def pair(self, i: int) -> tuple[float, float]:
        """The ``i``-th observation, 1-based."""
        return float(self.x[i - 1]), float(self.y[i - 1])

    def swapped(self) -> "BivariateSample":
        return BivariateSample(self.y, self.x)

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class TuningParams:
    """Intermediate sequence ``k``, bandwidth ``h`` and evaluation box edge ``T``."""

    k: int
    h: Fraction
    T: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "h", as_fraction(self.h))
        if int(self.k) != self.k or self.k < 1:
            raise TuningError(f"k must be a positive integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if not (0 < self.h <= 1):
            raise TuningError(f"h must lie in (0, 1], got {self.h}")
        if not self.T > 0:
            raise TuningError(f"T must be positive, got {self.T}")

    @property
    def m(self) -> int:
        """Number of blocks, ``floor(1/h)``."""
        return math.floor(1 / self.h)

    @property
    def kh(self) -> float:
        return float(self.k * self.h)

    def nh(self, n: int) -> int:
        nh = n * self.h
        if nh.denominator != 1:
            raise TuningError(f"nh not integer (n={n}, h={self.h}, nh={float(nh):g})")
        return int(nh)


@dataclass(frozen=True)
class ValidationReport:
    n: int
    k: int
    h: Fraction
    nh: int
    kh: float
    m: int
    # Rate diagnostics: the first should be large and the second small.
    kh3_over_log3n: float
    kh4: float
    warnings: tuple[str, ...] = ()


def validate_tuning(n: int, params: TuningParams) -> ValidationReport:
    """Check ``(n, k, h, T)`` and return diagnostics.

    Raises
    ------
    TuningError
        If ``nh`` is not an integer, ``k > n``, ``kh < 1`` or ``kT >= n``.
    """
    if n < 1:
        raise TuningError("n must be at least 1")
    k, h = params.k, params.h
    if k > n:
        raise TuningError(f"k exceeds n (k={k}, n={n})")
    nh = params.nh(n)
    if k * h < 1:
        raise TuningError(f"kh must be at least 1, got {float(k * h):g}")
    if k * params.T >= n:
        raise TuningError(f"kT must be below n (k={k}, T={params.T}, n={n})")
    if params.m < 1:
        raise TuningError("floor(1/h) must be at least 1")

    log_n = math.log(n) if n > 1 else float("nan")
    ratio = float(k * h**3) / log_n**3 if n > 1 else float("nan")
    kh4 = float(k * h**4)
    notes = []
    if not ratio >= 1.0:
        notes.append(f"kh^3/log^3(n) = {ratio:.4g} is small")
    if kh4 > 1.0:
        notes.append(f"kh^4 = {kh4:.4g} is large")
    return ValidationReport(
        n=n, k=k, h=h, nh=nh, kh=params.kh, m=params.m,
        kh3_over_log3n=ratio, kh4=kh4, warnings=tuple(notes),
    )


@dataclass(frozen=True)
class EvalGrid:
    u_points: tuple[float, ...]
    v_points: tuple[float, ...]
    s_points: tuple[float, ...]

    def __post_init__(self):
        for name in ("u_points", "v_points", "s_points"):
            pts = tuple(float(p) for p in getattr(self, name))
            if not pts:
                raise ValueError(f"{name} is empty")
            if any(p <= 0 for p in pts) or any(b <= a for a, b in zip(pts, pts[1:])):
                raise ValueError(f"{name} must be strictly positive and ascending")
            object.__setattr__(self, name, pts)
        if self.s_points[-1] > 1:
            raise ValueError("s_points must lie in (0, 1]")

    @classmethod
    def default(cls, h: Fraction | float | str, T: float = 1.0, step: float = 0.1) -> "EvalGrid":
        """``{step, 2*step, ..., T}^2 x {h, 2h, ..., mh} (+ {1} when mh < 1)``."""
        uv = uniform_points(T, step)
        return cls(uv, uv, block_knots(as_fraction(h)))

    @property
    def u(self) -> np.ndarray:
        return np.asarray(self.u_points)

    @property
    def v(self) -> np.ndarray:
        return np.asarray(self.v_points)

    @property
    def s(self) -> np.ndarray:
        return np.asarray(self.s_points)

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.u_points), len(self.v_points), len(self.s_points)

    def cell_weights(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Right-endpoint Riemann widths along u, v and s (each starting from 0)."""
        return tuple(np.diff(np.concatenate([[0.0], a])) for a in (self.u, self.v, self.s))

    def to_dict(self) -> dict:
        return {"u": list(self.u_points), "v": list(self.v_points), "s": list(self.s_points)}


def uniform_points(T: float, step: float) -> tuple[float, ...]:
    count = int(round(T / step))
    if count < 1 or not math.isclose(count * step, T, rel_tol=1e-9):
        raise ValueError(f"T={T} is not a multiple of the grid step {step}")
    # i/count*T keeps 0.1, 0.2, ... as the nearest doubles
    return tuple(T * i / count for i in range(1, count + 1))


def block_knots(h: Fraction) -> tuple[float, ...]:
    m = math.floor(1 / h)
    knots = [float(j * h) for j in range(1, m + 1)]
    if m * h < 1:
        knots.append(1.0)
    return tuple(knots)


@dataclass(frozen=True)
class TailSurface:
    """Tail copula values on a (u, v) grid plus the ``(u, inf)`` and ``(inf, v)`` borders."""

    u_points: tuple[float, ...]
    v_points: tuple[float, ...]
    values: np.ndarray
    u_border: np.ndarray
    v_border: np.ndarray
    provenance: str = "empirical"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        ub = np.array(self.u_border, dtype=float)
        vb = np.array(self.v_border, dtype=float)
        if values.shape != (len(self.u_points), len(self.v_points)):
            raise ValueError("values shape does not match the grid")
        if ub.shape != (len(self.u_points),) or vb.shape != (len(self.v_points),):
            raise ValueError("border shapes do not match the grid")
        for a in (values, ub, vb):
            a.flags.writeable = False
        object.__setattr__(self, "u_points", tuple(float(p) for p in self.u_points))
        object.__setattr__(self, "v_points", tuple(float(p) for p in self.v_points))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "u_border", ub)
        object.__setattr__(self, "v_border", vb)

    def value(self, iu: int, iv: int) -> float:
        """Value at grid indices; either (not both) may be :data:`BORDER`."""
        if iu == BORDER and iv == BORDER:
            raise KeyError("(inf, inf) is not part of the surface")
        if iv == BORDER:
            return float(self.u_border[iu])
        if iu == BORDER:
            return float(self.v_border[iv])
        return float(self.values[iu, iv])

    def extended(self) -> np.ndarray:
        """``(nu+1, nv+1)`` array whose last row/column hold the borders; corner is NaN."""
        nu, nv = self.values.shape
        ext = np.full((nu + 1, nv + 1), np.nan)
        ext[:nu, :nv] = self.values
        ext[:nu, nv] = self.u_border
        ext[nu, :nv] = self.v_border
        return ext


def analytic_surface(fn, u_points: Sequence[float], v_points: Sequence[float]) -> TailSurface:
    """Tabulate a tail copula ``fn(u, v)`` with the analytic borders ``R(u, inf) = u``."""
    u = np.asarray(u_points, dtype=float)
    v = np.asarray(v_points, dtype=float)
    values = np.asarray(fn(u[:, None], v[None, :]), dtype=float) * np.ones((u.size, v.size))
    return TailSurface(u, v, values, u.copy(), v.copy(), provenance="analytic")


def check_surface(surface: TailSurface, kh: float | None = None, atol: float = 1e-12) -> list[str]:
    """Return a list of violated surface invariants (empty when the surface is valid).

    With ``kh`` given, the borders must equal ``floor(k*h*u)/(k*h)`` exactly;
    otherwise (analytic surfaces) they must equal ``u``.
    """
    problems = []
    vals, ub, vb = surface.values, surface.u_border, surface.v_border
    if np.any(vals < -atol):
        problems.append("negative values")
    if np.any(np.diff(vals, axis=0) < -atol) or np.any(np.diff(vals, axis=1) < -atol):
        problems.append("not nondecreasing in u and v")
    if np.any(np.diff(ub) < -atol) or np.any(np.diff(vb) < -atol):
        problems.append("borders not nondecreasing")
    if np.any(vals > np.minimum(ub[:, None], vb[None, :]) + atol):
        problems.append("value exceeds min of borders")
    u, v = np.asarray(surface.u_points), np.asarray(surface.v_points)
    if kh is None:
        if surface.provenance == "analytic":
            if not (np.allclose(ub, u, atol=atol) and np.allclose(vb, v, atol=atol)):
                problems.append("analytic borders differ from identity")
    else:
        if not (np.array_equal(ub, floor_count(kh, u) / kh) and np.array_equal(vb, floor_count(kh, v) / kh)):
            problems.append("empirical borders differ from floor(khu)/(kh)")
    return problems


@dataclass(frozen=True)
class IntegratedCurve:
    """Integrated tail copula estimate on ``grid``; ``values[iu, iv, is]``."""

    grid: EvalGrid
    values: np.ndarray
    h: Fraction
    knots: tuple[float, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError("values shape does not match the grid")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if not self.knots:
            m = math.floor(1 / self.h)
            knots = [0.0] + [float(j * self.h) for j in range(1, m + 1)]
            if m * self.h < 1:
                knots.append(1.0)
            object.__setattr__(self, "knots", tuple(knots))

    def at(self, u: float, v: float, s: float) -> float:
        g = self.grid
        return float(self.values[g.u_points.index(u), g.v_points.index(v), g.s_points.index(s)])


# ---------------------------------------------------------------------------
# Sample files


def load_sample(path: str | Path) -> BivariateSample:
    """Read a two-column CSV (optional ``x,y`` header); row order is time order."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    pairs = []
    for lineno, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and [c.strip().lower() for c in row] == ["x", "y"]:
            continue
        if len(row) != 2:
            raise SampleFormatError(f"line {lineno}: expected 2 columns, got {len(row)}")
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise SampleFormatError(f"line {lineno}: cannot parse {','.join(row)!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise SampleFormatError(f"line {lineno}: non-finite value")
        pairs.append((x, y))
    if not pairs:
        raise SampleFormatError("empty input")
    return BivariateSample.from_pairs(pairs)


def write_sample(sample: BivariateSample, path: str | Path) -> None:
    """Write the canonical form: ``x,y`` header and ``repr`` floats."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("x,y\n")
        for x, y in zip(sample.x.tolist(), sample.y.tolist()):
            fh.write(f"{x!r},{y!r}\n")


def warn_tuning(report: ValidationReport) -> None:
    for msg in report.warnings:
        warnings.warn(msg, stacklevel=2)
