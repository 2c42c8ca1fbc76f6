"""Data-generating processes: logistic tail copula, Gumbel/Fréchet sampling,
scedasis scalings and the time-varying mixture alternative."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import BivariateSample


@dataclass(frozen=True)
class LogisticModel:
    """Logistic tail copula ``R(u, v) = u + v - (u**(1/theta) + v**(1/theta))**theta``."""

    theta: float

    def __post_init__(self):
        if not (0 < self.theta <= 1):
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")

    @property
    def tdc(self) -> float:
        """Tail-dependence coefficient ``R(1, 1) = 2 - 2**theta``."""
        return 2.0 - 2.0**self.theta

    def R(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.any(u < 0) or np.any(v < 0):
            raise ValueError("u and v must be nonnegative")
        # R = lo - hi * ((1 + q)**theta - 1) with q = (lo/hi)**(1/theta): no cancellation, R <= lo
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        safe = np.where(hi > 0, hi, 1.0)
        q = (lo / safe) ** (1.0 / self.theta)
        out = np.maximum(lo - safe * np.expm1(self.theta * np.log1p(q)), 0.0)
        out = np.where(hi > 0, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def partials(self, u, v):
        """``(R_1, R_2)`` for ``u, v > 0``."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if np.any(u <= 0) or np.any(v <= 0):
            raise ValueError("u and v must be positive")
        a = 1.0 / self.theta
        # d/du (u^a + v^a)^theta = (1 + (v/u)^a)^(theta-1)
        r1 = 1.0 - (1.0 + (v / u) ** a) ** (self.theta - 1.0)
        r2 = 1.0 - (1.0 + (u / v) ** a) ** (self.theta - 1.0)
        if r1.ndim == 0:
            return float(r1), float(r2)
        return r1, r2


_SCEDASIS = {
    "M1": (lambda s: np.ones_like(s), lambda s: np.ones_like(s)),
    "M2": (lambda s: 0.8 + 0.4 * s, lambda s: 1.5 - s),
    "M3": (lambda s: 1.0 + 0.6 * np.cos(2 * np.pi * s), lambda s: 1.0 + 0.4 * np.sin(2 * np.pi * s)),
}


@dataclass(frozen=True)
class ScedasisSpec:
    kind: str
    c_x: Callable[[np.ndarray], np.ndarray]
    c_y: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def builtin(cls, kind: str) -> "ScedasisSpec":
        key = kind.upper()
        if key not in _SCEDASIS:
            raise ValueError(f"unknown scedasis {kind!r}; expected one of M1, M2, M3")
        return cls(key, *_SCEDASIS[key])

    @classmethod
    def custom(cls, c_x, c_y) -> "ScedasisSpec":
        return cls("custom", c_x, c_y)


def scedasis_eval(spec: ScedasisSpec, s):
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > 1):
        raise ValueError("s must lie in [0, 1]")
    cx = np.asarray(spec.c_x(s_arr), dtype=float)
    cy = np.asarray(spec.c_y(s_arr), dtype=float)
    if cx.ndim == 0:
        return float(cx), float(cy)
    return cx, cy


@dataclass(frozen=True)
class MixtureSpec:
    """Cubic transition from the logistic tail copula (``s <= lam``) to independence at ``s = 1``."""

    lam: float

    def __post_init__(self):
        if not (0 <= self.lam <= 1):
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")

    def weight(self, s):
        return mixing_weight(self, s)


def mixing_weight(spec: MixtureSpec, s):
    s_arr = np.asarray(s, dtype=float)
    if spec.lam >= 1:
        out = np.ones_like(s_arr)
    else:
        out = 1.0 - np.maximum(s_arr - spec.lam, 0.0) ** 3 / (1.0 - spec.lam) ** 3
    return float(out) if out.ndim == 0 else out


def integrated_weight(lam: float, s):
    """``int_0^s f(w) dw`` for the cubic transition."""
    s_arr = np.asarray(s, dtype=float)
    if lam >= 1:
        out = s_arr.copy()
    else:
        out = s_arr - np.maximum(s_arr - lam, 0.0) ** 4 / (4.0 * (1.0 - lam) ** 3)
    return float(out) if out.ndim == 0 else out


def true_integrated_curve(model: LogisticModel, mixture: MixtureSpec, s):
    """``I_R(1, 1; s) = tdc * int_0^s f``; equals ``tdc * (3 + lam) / 4`` at ``s = 1``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > 1):
        raise ValueError("s must lie in [0, 1]")
    return model.tdc * integrated_weight(mixture.lam, s)


def positive_stable(alpha: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Positive stable variates with Laplace transform ``exp(-t**alpha)``, ``0 < alpha < 1``.

    Kanter's representation of the Chambers-Mallows-Stuck generator.
    """
    w = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    a = (
        np.sin(alpha * w) ** (alpha / (1 - alpha))
        * np.sin((1 - alpha) * w)
        / np.sin(w) ** (1 / (1 - alpha))
    )
    return (a / e) ** ((1 - alpha) / alpha)


def sample_gumbel_frechet(model: LogisticModel, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` pairs with Fréchet(1) marginals and Gumbel copula.

    Marshall-Olkin: with ``S`` positive stable of index ``theta`` and unit
    exponentials ``E1, E2``, ``W_j = exp(-(E_j/S)**theta)`` are Gumbel-copula
    uniforms and ``-1/log(W_j) = (S/E_j)**theta`` are Fréchet(1).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    theta = model.theta
    if theta >= 1:
        return frechet(n, rng), frechet(n, rng)
    s = positive_stable(theta, n, rng)
    e = rng.standard_exponential((2, n))
    # -1/log(W) evaluated without forming W, so no clamping near 0 or 1 is needed
    return (s / e[0]) ** theta, (s / e[1]) ** theta


def frechet(n: int, rng: np.random.Generator) -> np.ndarray:
    """Standard Fréchet(1): ``1/E`` with ``E`` unit exponential."""
    return 1.0 / rng.standard_exponential(n)


def generate_dataset(
    n: int,
    model: LogisticModel,
    scedasis: ScedasisSpec,
    mixture: MixtureSpec | None,
    rng: np.random.Generator | np.random.SeedSequence | int,
    independent: bool = False,
) -> BivariateSample:
    """Mixture sample: with probability ``f(i/n)`` a Gumbel pair, otherwise independent
    Fréchet(1) coordinates; then ``X_i = c_X(i/n) U_i``, ``Y_i = c_Y(i/n) V_i``.

    ``mixture=None`` is the null hypothesis (``f = 1``). ``independent=True``
    forces every pair to be independent. The Bernoulli flags, the dependent pairs
    and the independent pairs use separate substreams, so the path choice does not
    shift the value streams.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    mixture = mixture or MixtureSpec(1.0)
    flag_ss, dep_ss, ind_ss = substreams(rng, 3)
    s = np.arange(1, n + 1) / n
    if independent:
        dependent = np.zeros(n, dtype=bool)
    else:
        f = mixing_weight(mixture, s)
        dependent = np.random.default_rng(flag_ss).uniform(size=n) < f
    u_dep, v_dep = sample_gumbel_frechet(model, n, np.random.default_rng(dep_ss))
    ind = np.random.default_rng(ind_ss)
    u_ind, v_ind = frechet(n, ind), frechet(n, ind)
    u = np.where(dependent, u_dep, u_ind)
    v = np.where(dependent, v_dep, v_ind)
    cx, cy = scedasis_eval(scedasis, s)
    return BivariateSample(cx * u, cy * v)


def substreams(rng, count: int) -> list[np.random.SeedSequence]:
    """Independent child seeds from an int seed, a SeedSequence or a Generator."""
    if isinstance(rng, np.random.Generator):
        return [np.random.SeedSequence(int(x)) for x in rng.integers(0, 2**63, size=count)]
    if not isinstance(rng, np.random.SeedSequence):
        rng = np.random.SeedSequence(rng)
    return rng.spawn(count)
