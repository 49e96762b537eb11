"""Optimal staircase tuning curves from a capacity-achieving ensemble.

If the input to the channel is a deterministic function ``theta = f(x)`` of
a stimulus ``X``, any step function ``f`` that gives level ``theta_m`` a
stimulus mass equal to the ensemble weight ``w_m`` induces exactly the
capacity-achieving input law, whatever the stimulus distribution. Only the
breakpoints depend on the stimulus, through its quantiles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .capacity_solver import (
    CapacitySolution,
    Coding,
    InputEnsemble,
    _as_coding,
    ensemble_mi,
)
from .errors import DomainError, ValidationError

CDF_XTOL = 1e-12

# Poisson neuron with at most 30 mean spikes per sample: delta / a0 = 30.
STAIRCASE_KAPPA = 1.0
STAIRCASE_DELTA = 0.3
STAIRCASE_A0 = 0.01
STAIRCASE_B0 = 1.0


@dataclass(frozen=True)
class StimulusDistribution:
    """Stimulus law on ``[lo, hi]``: ``uniform``, ``beta`` or ``piecewise``.

    ``params`` holds ``(a, b)`` for beta and ``(knots, densities)`` for a
    piecewise-linear density (normalized on construction).
    """

    kind: str
    support: tuple
    params: tuple = ()

    def __post_init__(self):
        lo, hi = (float(v) for v in self.support)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValidationError(f"stimulus support must be a finite interval, got {self.support!r}")
        object.__setattr__(self, "support", (lo, hi))
        if self.kind == "uniform":
            object.__setattr__(self, "params", ())
        elif self.kind == "beta":
            a, b = (float(v) for v in self.params)
            if not (a > 0 and b > 0):
                raise ValidationError("beta stimulus needs positive shape parameters")
            object.__setattr__(self, "params", (a, b))
        elif self.kind == "piecewise":
            knots, dens = (np.array(v, dtype=float) for v in self.params)
            if knots.ndim != 1 or knots.size < 2 or knots.shape != dens.shape:
                raise ValidationError("piecewise stimulus needs matching knot and density lists")
            if np.any(np.diff(knots) <= 0) or knots[0] != lo or knots[-1] != hi:
                raise ValidationError("piecewise knots must increase from lo to hi")
            if np.any(dens < 0) or not np.all(np.isfinite(dens)):
                raise ValidationError("piecewise density must be non-negative")
            area = float(np.sum(0.5 * (dens[1:] + dens[:-1]) * np.diff(knots)))
            if area <= 0:
                raise ValidationError("piecewise density has zero mass")
            dens = dens / area
            seg = 0.5 * (dens[1:] + dens[:-1]) * np.diff(knots)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            cum /= cum[-1]
            object.__setattr__(self, "params", (tuple(knots), tuple(dens)))
            object.__setattr__(self, "_cum", cum)
        else:
            raise ValidationError(f"unknown stimulus kind {self.kind!r}")

    @classmethod
    def uniform(cls, lo=0.0, hi=1.0):
        return cls("uniform", (lo, hi))

    @classmethod
    def beta(cls, a, b, lo=0.0, hi=1.0):
        return cls("beta", (lo, hi), (a, b))

    @classmethod
    def piecewise(cls, knots, densities):
        return cls("piecewise", (knots[0], knots[-1]), (knots, densities))

    @classmethod
    def parse(cls, text: str) -> "StimulusDistribution":
        """``uniform:LO,HI``, ``beta:A,B[,LO,HI]`` or ``piecewise:X0,X1,..;D0,D1,..``."""
        kind, _, rest = text.partition(":")
        try:
            if kind == "uniform":
                lo, hi = (float(v) for v in rest.split(",")) if rest else (0.0, 1.0)
                return cls.uniform(lo, hi)
            if kind == "beta":
                vals = [float(v) for v in rest.split(",")]
                if len(vals) not in (2, 4):
                    raise ValueError
                return cls.beta(*vals)
            if kind == "piecewise":
                xs, ds = rest.split(";")
                return cls.piecewise([float(v) for v in xs.split(",")],
                                     [float(v) for v in ds.split(",")])
        except ValueError:
            raise ValidationError(f"cannot parse stimulus {text!r}") from None
        raise ValidationError(f"unknown stimulus kind in {text!r}")

    def to_dict(self) -> dict:
        params = [list(p) for p in self.params] if self.kind == "piecewise" else list(self.params)
        return {"kind": self.kind, "support": list(self.support), "params": params}

    def _unit(self, x):
        lo, hi = self.support
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def pdf(self, x):
        lo, hi = self.support
        x = np.asarray(x, dtype=float)
        inside = (x >= lo) & (x <= hi)
        if self.kind == "uniform":
            val = np.full(x.shape, 1.0 / (hi - lo))
        elif self.kind == "beta":
            val = stats.beta.pdf(np.clip(self._unit(x), 0, 1), *self.params) / (hi - lo)
        else:
            knots, dens = self.params
            val = np.interp(x, knots, dens)
        return np.where(inside, val, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.clip(self._unit(x), 0.0, 1.0)
        if self.kind == "beta":
            return stats.beta.cdf(np.clip(self._unit(x), 0.0, 1.0), *self.params)
        knots, dens = (np.asarray(p) for p in self.params)
        cum = self._cum
        lo, hi = self.support
        xc = np.clip(x, lo, hi)
        k = np.clip(np.searchsorted(knots, xc, side="right") - 1, 0, len(knots) - 2)
        dx = xc - knots[k]
        slope = (dens[k + 1] - dens[k]) / (knots[k + 1] - knots[k])
        return np.clip(cum[k] + dens[k] * dx + 0.5 * slope * dx * dx, 0.0, 1.0)

    def flat_regions(self) -> list[tuple[float, float]]:
        """Open stretches of the support on which the density vanishes."""
        if self.kind != "piecewise":
            return []
        knots, dens = self.params
        return [(knots[i], knots[i + 1]) for i in range(len(knots) - 1)
                if dens[i] == 0 and dens[i + 1] == 0]

    def quantile(self, p: float) -> float:
        """Bisection inverse of the CDF to ``CDF_XTOL`` in x."""
        lo, hi = self.support
        if p <= 0:
            return lo
        if p >= 1:
            return hi
        for a, b in self.flat_regions():
            if abs(float(self.cdf(a)) - p) < 1e-13:
                raise ValidationError(
                    f"CDF is flat at level {p:.12g} on [{a:.6g}, {b:.6g}]: quantile not unique"
                )
        a, b = lo, hi
        while b - a > CDF_XTOL:
            mid = 0.5 * (a + b)
            if self.cdf(mid) < p:
                a = mid
            else:
                b = mid
            if mid in (a, b) and b - a <= 4 * np.spacing(mid):
                break
        return 0.5 * (a + b)


@dataclass(frozen=True)
class TuningCurve:
    """Step function ``theta = f(x)``: ``levels[m]`` on ``(breakpoints[m], breakpoints[m+1]]``.

    The first interval is closed at the lower end of the support.
    """

    breakpoints: np.ndarray
    levels: np.ndarray
    coding: Coding
    weights: np.ndarray
    source_capacity: float = float("nan")

    def index(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.breakpoints[0], self.breakpoints[-1]
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"stimulus outside [{lo:.6g}, {hi:.6g}]: {x!r}")
        return np.searchsorted(self.breakpoints[1:-1], x, side="left")

    def __call__(self, x):
        return self.levels[self.index(x)]

    def staircase(self, n: int = 201):
        x = np.linspace(self.breakpoints[0], self.breakpoints[-1], n)
        return x, self(x)


def quantile_partition(stim: StimulusDistribution, weights) -> np.ndarray:
    """Breakpoints ``x_m = F^{-1}(w_1 + ... + w_m)`` with the support ends attached."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValidationError("weights must be non-negative and sum to 1")
    cum = np.cumsum(w)[:-1]
    inner = [stim.quantile(float(c)) for c in cum]
    return np.array([stim.support[0], *inner, stim.support[1]])


def build_tuning_curve(solution: CapacitySolution, stim: StimulusDistribution,
                       increasing_theta: bool | None = None) -> TuningCurve:
    """Staircase that induces the solution's ensemble under ``stim``.

    By default rate coding gets the largest theta (slowest firing) at the
    lower end of the stimulus range, so the mean rate rises with ``x``;
    temporal coding gets theta, hence the mean ISI, rising with ``x``.
    """
    if not solution.certified:
        raise ValidationError("tuning curves need a KKT-certified capacity solution")
    coding = _as_coding(solution.coding)
    if increasing_theta is None:
        increasing_theta = coding is Coding.TEMPORAL
    pts = np.asarray(solution.ensemble.points)
    w = np.asarray(solution.ensemble.weights)
    order = np.arange(len(pts)) if increasing_theta else np.arange(len(pts))[::-1]
    levels, weights = pts[order], w[order]
    bps = quantile_partition(stim, weights)
    return TuningCurve(bps, levels.copy(), coding, weights.copy(), solution.capacity_per_use)


def mean_response(curve: TuningCurve, x, kappa: float, delta: float | None = None):
    """Mean ISI ``kappa f(x)`` (temporal) or mean count ``delta / (kappa f(x))`` (rate)."""
    theta = curve(x)
    if curve.coding is Coding.TEMPORAL:
        return kappa * theta
    if delta is None:
        raise ValidationError("rate-coding responses need the window delta")
    return delta / (kappa * theta)


def interval_masses(curve: TuningCurve, stim: StimulusDistribution) -> np.ndarray:
    """Stimulus mass of each interval, integrating the density directly."""
    bps = curve.breakpoints
    out = []
    for a, b in zip(bps[:-1], bps[1:]):
        val, _ = integrate.quad(lambda t: float(stim.pdf(t)), a, b, epsabs=1e-14, epsrel=1e-13,
                                limit=200)
        out.append(val)
    return np.array(out)


def verify_tuning_mi(curve: TuningCurve, stim: StimulusDistribution, channel, coding=None):
    """``I(X; output)`` through ``x -> f(x) -> output`` and its gap to the capacity."""
    coding = curve.coding if coding is None else _as_coding(coding)
    masses = interval_masses(curve, stim)
    if abs(masses.sum() - 1.0) > 1e-8:
        raise ValidationError(f"interval masses sum to {masses.sum():.12g}, not 1")
    # pool intervals sharing a level, then order by theta
    levels, inverse = np.unique(curve.levels, return_inverse=True)
    pooled = np.bincount(inverse, weights=masses, minlength=len(levels))
    mi = ensemble_mi(InputEnsemble(levels, pooled, renormalize=True), channel, coding)
    return mi, curve.source_capacity - mi
